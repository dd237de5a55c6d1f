"""Camouflage-map evaluation: F-beta, IOU, MAE, E-measure, S-measure and
weighted F-measure, plus a directory-level evaluator.

Binary masks are bool arrays, prediction maps float arrays in [0, 1].
Threshold rules: ``adaptive`` (mean + population std of the map, clamped to
[0, 1]) or ``fixed`` (0.5 by default); a pixel is foreground iff its value
is at or above the threshold.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import ValidationError, as_binary, as_grayscale, read_gray_png, read_mask_png

log = logging.getLogger(__name__)

BETA_SQ = 0.3
E_EPS = 1e-8
S_ALPHA = 0.5
WF_KERNEL = 7
WF_SIGMA = 5.0
WF_DECAY = 5.0
WF_BETA_SQ = 1.0

ADAPTIVE = "adaptive"
FIXED = "fixed"
CAMO_ONLY = "camo_only"
FULL = "full"

CSV_COLUMNS = ("image_id", "mae", "f_beta", "iou", "e_phi", "s_alpha", "weighted_f", "threshold")


@dataclass(frozen=True)
class ThresholdRule:
    kind: str = ADAPTIVE
    fixed_value: float = 0.5

    def __post_init__(self):
        if self.kind not in (ADAPTIVE, FIXED):
            raise ValidationError(f"unknown threshold rule {self.kind!r}")
        if not 0.0 <= self.fixed_value <= 1.0:
            raise ValidationError("fixed threshold must lie in [0, 1]")

    @classmethod
    def parse(cls, text: str) -> "ThresholdRule":
        """Parse ``adaptive``, ``fixed`` or ``fixed:<value>``."""
        text = text.strip()
        if text == ADAPTIVE:
            return cls(ADAPTIVE)
        if text == FIXED:
            return cls(FIXED)
        if text.startswith(FIXED + ":"):
            return cls(FIXED, float(text.split(":", 1)[1]))
        raise ValidationError(f"cannot parse threshold rule {text!r}")

    def __str__(self):
        return ADAPTIVE if self.kind == ADAPTIVE else f"{FIXED}:{self.fixed_value:g}"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_masks(cls, pred, gt) -> "ConfusionCounts":
        pred, gt = _pair(pred, gt, as_binary, as_binary)
        tp = int(np.count_nonzero(pred & gt))
        fp = int(np.count_nonzero(pred & ~gt))
        fn = int(np.count_nonzero(~pred & gt))
        return cls(tp, fp, fn, pred.size - tp - fp - fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _pair(a, b, conv_a, conv_b):
    a = conv_a(a)
    b = conv_b(b)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def adaptive_threshold(pred) -> float:
    pred = as_grayscale(pred)
    return float(np.clip(pred.mean() + pred.std(), 0.0, 1.0))


def binarize(pred, theta: float) -> np.ndarray:
    if not 0.0 <= theta <= 1.0:
        raise ValidationError("threshold must lie in [0, 1]")
    return as_grayscale(pred) >= theta


def apply_rule(pred, rule: ThresholdRule) -> tuple[np.ndarray, float]:
    """Binarize under a threshold rule; returns ``(mask, theta)``.

    Under the adaptive rule an all-zero map gets theta = 0, which would
    otherwise mark every pixel; such a map has no response anywhere and is
    binarized to an empty mask instead.
    """
    pred = as_grayscale(pred)
    if rule.kind == FIXED:
        return pred >= rule.fixed_value, rule.fixed_value
    theta = adaptive_threshold(pred)
    if not pred.any():
        return np.zeros(pred.shape, dtype=bool), theta
    return pred >= theta, theta


def f_beta(pred, gt, beta_sq: float = BETA_SQ) -> float:
    """Precision/recall F-measure with empty-mask conventions: both empty
    scores 1, exactly one empty scores 0."""
    c = ConfusionCounts.from_masks(pred, gt)
    gt_n = c.tp + c.fn
    pred_n = c.tp + c.fp
    if gt_n == 0:
        return 1.0 if pred_n == 0 else 0.0
    if c.tp == 0:
        return 0.0
    precision = c.tp / pred_n
    recall = c.tp / gt_n
    return (1 + beta_sq) * precision * recall / (beta_sq * precision + recall)


def f_beta_from_pr(precision: float, recall: float, beta_sq: float = BETA_SQ) -> float:
    if precision + recall == 0:
        return 0.0
    return (1 + beta_sq) * precision * recall / (beta_sq * precision + recall)


def iou(pred, gt) -> float:
    pred, gt = _pair(pred, gt, as_binary, as_binary)
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


def mae(pred, gt) -> float:
    pred, gt = _pair(pred, gt, as_grayscale, as_grayscale)
    return float(np.mean(np.abs(pred - gt)))


def e_measure(pred, gt, eps: float = E_EPS) -> float:
    """Enhanced-alignment measure of a binary prediction."""
    pred, gt = _pair(pred, gt, as_binary, as_binary)
    fm = pred.astype(np.float64)
    g = gt.astype(np.float64)
    if not gt.any():
        enhanced = 1.0 - fm
    elif gt.all():
        enhanced = fm
    else:
        a = fm - fm.mean()
        b = g - g.mean()
        # eps only guards an all-zero denominator, which cannot occur here
        # since gt is mixed; using max() keeps perfect alignment exactly 1
        align = 2.0 * a * b / np.maximum(a * a + b * b, eps)
        enhanced = (align + 1.0) ** 2 / 4.0
    return float(enhanced.mean())


# --- S-measure ---------------------------------------------------------------


def _object_score(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return 2.0 * x / (x * x + 1.0 + sigma)


def _s_object(pred: np.ndarray, gt: np.ndarray) -> float:
    fg = _object_score(pred[gt])
    bg = _object_score(1.0 - pred[~gt])
    n_fg = np.count_nonzero(gt)
    return (n_fg * fg + (gt.size - n_fg) * bg) / gt.size


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    x = pred.mean()
    y = gt.mean()
    if n > 1:
        sx = np.sum((pred - x) ** 2) / (n - 1)
        sy = np.sum((gt - y) ** 2) / (n - 1)
        sxy = np.sum((pred - x) * (gt - y)) / (n - 1)
    else:
        sx = sy = sxy = 0.0
    # 4 x y sxy / ((x^2 + y^2)(sx + sy)), evaluated as two factors so that
    # identical inputs give exactly 1
    if x * y * sxy != 0.0:
        return (2.0 * x * y / (x * x + y * y)) * (2.0 * sxy / (sx + sy))
    return 1.0 if (x * x + y * y) * (sx + sy) == 0.0 else 0.0


def _centroid(gt: np.ndarray) -> tuple[int, int]:
    """Split column/row counts (left and top part sizes)."""
    h, w = gt.shape
    if not gt.any():
        return int(np.round(w / 2)), int(np.round(h / 2))
    rows, cols = np.nonzero(gt)
    # round half away from zero, then one past the centroid pixel
    cx = int(np.floor(cols.mean() + 0.5)) + 1
    cy = int(np.floor(rows.mean() + 0.5)) + 1
    return cx, cy


def _s_region(pred: np.ndarray, gt: np.ndarray) -> float:
    h, w = gt.shape
    cx, cy = _centroid(gt)
    g = gt.astype(np.float64)
    total = 0.0
    for rs, cs in (
        (slice(0, cy), slice(0, cx)),
        (slice(0, cy), slice(cx, w)),
        (slice(cy, h), slice(0, cx)),
        (slice(cy, h), slice(cx, w)),
    ):
        p = pred[rs, cs]
        if p.size == 0:
            continue
        total += p.size * _ssim(p, g[rs, cs])
    return total / (h * w)


def s_measure(pred, gt, alpha: float = S_ALPHA) -> float:
    """Structure measure of a grayscale prediction."""
    pred, gt = _pair(pred, gt, as_grayscale, as_binary)
    y = gt.mean()
    if y == 0.0:
        return float(1.0 - pred.mean())
    if y == 1.0:
        return float(pred.mean())
    q = alpha * _s_object(pred, gt) + (1.0 - alpha) * _s_region(pred, gt)
    return float(max(q, 0.0))


# --- weighted F-measure ------------------------------------------------------


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    r = (size - 1) / 2.0
    ax = np.arange(size) - r
    k = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    return k / k.sum()


def weighted_f(
    pred,
    gt,
    beta_sq: float = WF_BETA_SQ,
    kernel_size: int = WF_KERNEL,
    sigma: float = WF_SIGMA,
    decay: float = WF_DECAY,
) -> float:
    """Weighted F-measure with pixel dependency (Gaussian smoothing of
    foreground errors) and location-dependent importance of background
    errors."""
    pred, gt = _pair(pred, gt, as_grayscale, as_binary)
    if not gt.any():
        return 1.0 if not pred.any() else 0.0

    err = np.abs(pred - gt)
    dist, (iy, ix) = ndimage.distance_transform_edt(~gt, return_indices=True)
    # background pixels borrow the error of their nearest foreground pixel
    et = err[iy, ix]
    # replicate padding: zero padding would hand foreground pixels near the
    # image border a fictitious zero error from outside the image
    ea = ndimage.correlate(et, _gaussian_kernel(kernel_size, sigma), mode="nearest")
    min_e = err.copy()
    sel = gt & (ea < err)
    min_e[sel] = ea[sel]
    importance = np.ones_like(err)
    bg = ~gt
    importance[bg] = 2.0 - np.exp(np.log(0.5) / decay * dist[bg])
    ew = min_e * importance

    tpw = np.count_nonzero(gt) - ew[gt].sum()
    fpw = ew[bg].sum()
    recall = 1.0 - ew[gt].mean()
    precision = tpw / (tpw + fpw) if tpw + fpw > 0 else 0.0
    denom = recall + beta_sq * precision
    if denom <= 0:
        return 0.0
    return float(np.clip((1 + beta_sq) * recall * precision / denom, 0.0, 1.0))


# --- dataset evaluation ------------------------------------------------------


@dataclass(frozen=True)
class MetricConstants:
    beta_sq: float = BETA_SQ
    e_eps: float = E_EPS
    s_alpha: float = S_ALPHA
    wf_kernel: int = WF_KERNEL
    wf_sigma: float = WF_SIGMA
    wf_decay: float = WF_DECAY
    wf_beta_sq: float = WF_BETA_SQ


@dataclass
class ImageScores:
    image_id: str
    mae: float
    f_beta: float
    iou: float
    e_phi: float
    s_alpha: float
    weighted_f: float
    threshold: float

    def row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


METRIC_NAMES = CSV_COLUMNS[1:-1]


@dataclass
class EvalReport:
    rule: ThresholdRule
    split: str
    per_image: list[ImageScores] = field(default_factory=list)

    @property
    def aggregate(self) -> dict[str, float]:
        if not self.per_image:
            return {m: float("nan") for m in METRIC_NAMES}
        return {m: float(np.mean([getattr(r, m) for r in self.per_image])) for m in METRIC_NAMES}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.per_image:
                w.writerow([r.image_id] + [repr(float(v)) for v in r.row()[1:]])


def evaluate_image(
    image_id: str, pred, gt, rule: ThresholdRule, constants: MetricConstants = MetricConstants()
) -> ImageScores:
    """All metrics for one image. MAE, S-measure and weighted F read the raw
    map; F-beta, IOU and E-measure read the map binarized under ``rule``."""
    k = constants
    pred, gt = _pair(pred, gt, as_grayscale, as_binary)
    binary, theta = apply_rule(pred, rule)
    return ImageScores(
        image_id=image_id,
        mae=mae(pred, gt.astype(np.float64)),
        f_beta=f_beta(binary, gt, k.beta_sq),
        iou=iou(binary, gt),
        e_phi=e_measure(binary, gt, k.e_eps),
        s_alpha=s_measure(pred, gt, k.s_alpha),
        weighted_f=weighted_f(pred, gt, k.wf_beta_sq, k.wf_kernel, k.wf_sigma, k.wf_decay),
        threshold=theta,
    )


def _png_ids(directory: Path) -> dict[str, Path]:
    return {p.stem: p for p in sorted(directory.glob("*.png"))}


def evaluate_dataset(
    pred_dir,
    gt_dir,
    rule: ThresholdRule = ThresholdRule(),
    split: str = FULL,
    workers: int = 1,
    constants: MetricConstants = MetricConstants(),
) -> EvalReport:
    """Score every prediction PNG against the same-named ground-truth PNG.

    ``split="camo_only"`` keeps only images whose ground truth has a
    foreground (zero-mask ground truths mark non-camouflaged images).
    Rows are ordered by ascending image id.
    """
    if split not in (CAMO_ONLY, FULL):
        raise ValidationError(f"unknown split {split!r}")
    preds = _png_ids(Path(pred_dir))
    gts = _png_ids(Path(gt_dir))
    missing = sorted(set(preds) - set(gts))
    if missing:
        raise ValidationError(f"missing ground truth for: {', '.join(missing)}")

    def work(image_id):
        gt = read_mask_png(gts[image_id])
        if split == CAMO_ONLY and not gt.any():
            return None
        pred = read_gray_png(preds[image_id])
        if pred.shape != gt.shape:
            raise ValidationError(f"{image_id}: prediction {pred.shape} and ground truth {gt.shape} differ")
        return evaluate_image(image_id, pred, gt, rule, constants)

    ids = sorted(preds)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(work, ids))
    else:
        rows = [work(i) for i in ids]
    report = EvalReport(rule, split, [r for r in rows if r is not None])
    log.info("evaluated %d images (%s, %s)", len(report.per_image), rule, split)
    return report
