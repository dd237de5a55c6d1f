"""Foreground/background visual difference.

For a feature map and a ground-truth mask, average the features over the
object and over the background, l2-normalize both means and take their
Euclidean distance. Features can be raw RGB, Ruderman l-alpha-beta, texton
histograms, or externally computed per-pixel maps (e.g. network confidence
scores) ingested from a raw binary file.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import ValidationError, as_binary, as_feature_map, as_rgb, flip_horizontal_image

log = logging.getLogger(__name__)

RGB = "rgb"
LAB = "lab_ruderman"
TEXTON = "texton"
INGESTED = "ingested_features"

NON_CAMO = "non_camo"
CAMO = "camo"
CAMO_FLIPPED = "camo_flipped"
SPLITS = (NON_CAMO, CAMO, CAMO_FLIPPED)

# RGB -> LMS cone response (Reinhard et al. 2001), each row rescaled to sum
# to one so that achromatic colors give L == M == S.
_RGB2LMS_RAW = np.array([
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
])
RGB2LMS = _RGB2LMS_RAW / _RGB2LMS_RAW.sum(axis=1, keepdims=True)
LMS2LAB = np.diag([1 / np.sqrt(3), 1 / np.sqrt(6), 1 / np.sqrt(2)]) @ np.array([
    [1.0, 1.0, 1.0],
    [1.0, 1.0, -2.0],
    [1.0, -1.0, 0.0],
])
LOG_FLOOR = 1e-6

LUMA = np.array([0.299, 0.587, 0.114])
TEXTON_SCALES = (1.0, 2.0)
TEXTON_ORIENTATIONS = (0.0, 45.0, 90.0, 135.0)
TEXTON_BANK_SIZE = 9
TEXTON_VOCAB = 32
TEXTON_ITERATIONS = 20
TEXTON_SEED = 42
_QUANTUM = 1e-9

FEATURE_MAGIC = b"CFMP"


@dataclass(frozen=True, eq=False)
class RegionDescriptorPair:
    s_fg: np.ndarray
    s_bg: np.ndarray
    space: str = RGB
    zero_vector: bool = False  # a region mean was the zero vector (left unnormalized)


@dataclass(frozen=True)
class DistanceRow:
    method: str
    split: str
    distance: float
    count: int


def _normalize(v: np.ndarray) -> tuple[np.ndarray, bool]:
    n = np.linalg.norm(v)
    if n == 0.0:
        return v, True
    return v / n, False


def region_means(features, gt, space: str = RGB) -> RegionDescriptorPair:
    f = as_feature_map(features)
    gt = as_binary(gt)
    if f.shape[1:] != gt.shape:
        raise ValidationError(f"feature map {f.shape[1:]} and mask {gt.shape} differ")
    n_fg = np.count_nonzero(gt)
    if n_fg == 0 or n_fg == gt.size:
        raise ValidationError("degenerate region: mask needs both foreground and background pixels")
    fg, z1 = _normalize(f[:, gt].mean(axis=1))
    bg, z2 = _normalize(f[:, ~gt].mean(axis=1))
    return RegionDescriptorPair(fg, bg, space, z1 or z2)


def visual_difference(p: RegionDescriptorPair) -> float:
    return float(np.linalg.norm(p.s_fg - p.s_bg))


def rgb_features(img) -> np.ndarray:
    return np.moveaxis(as_rgb(img), 2, 0).copy()


def lab_features(img, log_floor: float = LOG_FLOOR) -> np.ndarray:
    """Per-pixel RGB -> LMS -> log10 -> l-alpha-beta."""
    rgb = as_rgb(img)
    lms = rgb @ RGB2LMS.T
    log_lms = np.log10(np.maximum(lms, log_floor))
    lab = log_lms @ LMS2LAB.T
    return np.moveaxis(lab, 2, 0).copy()


# --- textons -----------------------------------------------------------------


def _gaussian_derivative_kernel(sigma: float, theta_deg: float) -> np.ndarray:
    """First derivative of an isotropic Gaussian along direction theta."""
    r = int(np.ceil(3 * sigma))
    ax = np.arange(-r, r + 1, dtype=np.float64)
    x, y = np.meshgrid(ax, ax)
    t = np.deg2rad(theta_deg)
    u = x * np.cos(t) + y * np.sin(t)
    g = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
    k = -u * g
    return k / np.abs(k).sum()


def _center_surround_kernel(sigma: float) -> np.ndarray:
    """Difference of Gaussians, sigma vs 2 sigma, zero mean."""
    r = int(np.ceil(6 * sigma))
    ax = np.arange(-r, r + 1, dtype=np.float64)
    x, y = np.meshgrid(ax, ax)
    d2 = x * x + y * y
    g1 = np.exp(-d2 / (2 * sigma * sigma))
    g2 = np.exp(-d2 / (8 * sigma * sigma))
    k = g1 / g1.sum() - g2 / g2.sum()
    return k - k.mean()


def filter_bank() -> list[np.ndarray]:
    """Oriented Gaussian-derivative filters (4 orientations x 2 scales) and
    one center-surround filter. The orientation set is closed under
    horizontal mirroring (0 <-> 0, 45 <-> 135, 90 <-> 90)."""
    bank = [_gaussian_derivative_kernel(s, o) for s in TEXTON_SCALES for o in TEXTON_ORIENTATIONS]
    bank.append(_center_surround_kernel(TEXTON_SCALES[0]))
    return bank


def filter_responses(img) -> np.ndarray:
    """Mirror-invariant per-pixel responses, ``(H, W, 9)``.

    Odd filters are rectified; per scale the 45/135 degree pair is stored as
    (max, min) so that mirroring the image maps each pixel's feature vector
    to the same vector at the mirrored location.
    """
    gray = as_rgb(img) @ LUMA
    bank = filter_bank()
    size = max(k.shape[0] for k in bank)
    if gray.shape[0] < size or gray.shape[1] < size:
        raise ValidationError(f"image smaller than the largest filter ({size}x{size})")
    resp = [ndimage.correlate(gray, k, mode="reflect") for k in bank]
    feats = []
    n_or = len(TEXTON_ORIENTATIONS)
    for s in range(len(TEXTON_SCALES)):
        r0, r45, r90, r135 = (np.abs(resp[s * n_or + i]) for i in range(n_or))
        feats += [r0, r90, np.maximum(r45, r135), np.minimum(r45, r135)]
    feats.append(resp[-1])
    out = np.stack(feats, axis=-1)
    # snap away summation-order noise so mirrored inputs give identical rows
    return np.round(out / _QUANTUM) * _QUANTUM


def kmeans(data: np.ndarray, k: int, iterations: int = TEXTON_ITERATIONS, seed: int = TEXTON_SEED) -> np.ndarray:
    """Lloyd's k-means with farthest-point initialization.

    Rows are sorted lexicographically first, so the result depends only on
    the multiset of rows. The seed picks the first center among rows tied
    for the largest norm.
    """
    data = np.asarray(data, dtype=np.float64)
    data = data[np.lexsort(data.T[::-1])]
    k = min(k, len(np.unique(data, axis=0)))
    norms = np.einsum("ij,ij->i", data, data)
    top = np.flatnonzero(norms == norms.max())
    rng = np.random.default_rng(seed)
    centers = [data[top[rng.integers(len(top))]]]
    d2 = np.sum((data - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(d2))
        centers.append(data[nxt])
        d2 = np.minimum(d2, np.sum((data - data[nxt]) ** 2, axis=1))
    centers = np.array(centers)
    for _ in range(iterations):
        labels = assign(data, centers)
        new = centers.copy()
        for j in range(k):
            members = data[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
        if np.array_equal(new, centers):
            break
        centers = new
    return centers


def assign(data: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        np.einsum("ij,ij->i", data, data)[:, None]
        - 2.0 * data @ centers.T
        + np.einsum("ij,ij->i", centers, centers)[None, :]
    )
    return np.argmin(d2, axis=1)


def texton_features(
    img,
    bank_size: int = TEXTON_BANK_SIZE,
    vocab: int = TEXTON_VOCAB,
    seed: int = TEXTON_SEED,
    iterations: int = TEXTON_ITERATIONS,
) -> np.ndarray:
    """One-hot texton assignment map ``(vocab, H, W)``; the region mean of
    this map is the region's normalized texton histogram."""
    if bank_size != TEXTON_BANK_SIZE:
        raise ValidationError(f"only the {TEXTON_BANK_SIZE}-filter bank is available")
    resp = filter_responses(img)
    h, w, d = resp.shape
    data = resp.reshape(-1, d)
    centers = kmeans(data, vocab, iterations, seed)
    labels = assign(data, centers).reshape(h, w)
    onehot = np.zeros((vocab, h, w))
    onehot[labels, np.arange(h)[:, None], np.arange(w)[None, :]] = 1.0
    return onehot


# --- ingested feature files --------------------------------------------------


def write_feature_file(path, features) -> None:
    """Raw little-endian float32 with a 16-byte header: magic, C, H, W."""
    f = as_feature_map(features)
    c, h, w = f.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC + struct.pack("<III", c, h, w))
        fh.write(f.astype("<f4").tobytes())


def read_feature_file(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != FEATURE_MAGIC:
        raise ValidationError(f"{path}: not a feature file (bad magic)")
    c, h, w = struct.unpack("<III", data[4:16])
    body = np.frombuffer(data, dtype="<f4", offset=16)
    if body.size != c * h * w:
        raise ValidationError(f"{path}: expected {c * h * w} values, found {body.size}")
    return body.astype(np.float64).reshape(c, h, w)


# --- dataset report ----------------------------------------------------------


def features_for(space: str, img, features_path=None, options=None) -> np.ndarray:
    """Feature map of ``img`` in ``space``. ``options`` may carry
    ``log_floor`` and ``texton_*`` overrides (see ``config.VisdiffConfig``)."""
    opt = options
    if space == RGB:
        return rgb_features(img)
    if space == LAB:
        return lab_features(img, getattr(opt, "log_floor", LOG_FLOOR))
    if space == TEXTON:
        return texton_features(
            img,
            getattr(opt, "texton_bank_size", TEXTON_BANK_SIZE),
            getattr(opt, "texton_vocab", TEXTON_VOCAB),
            getattr(opt, "texton_seed", TEXTON_SEED),
            getattr(opt, "texton_iterations", TEXTON_ITERATIONS),
        )
    if space == INGESTED:
        if features_path is None:
            raise ValidationError("ingested features need a feature file")
        return read_feature_file(features_path)
    raise ValidationError(f"unknown feature space {space!r}")


def image_distance(space: str, img, gt, flip: bool = False, features_path=None, options=None) -> float:
    """Visual difference of one image; ``flip`` mirrors image and mask first.

    Ingested feature maps belong to the unflipped image and are mirrored
    along with it; to score a network run on the flipped image, ingest that
    network's map and pass ``flip=False`` with a mirrored mask instead.
    """
    img = as_rgb(img)
    gt = as_binary(gt)
    if flip:
        img = flip_horizontal_image(img)
        gt = flip_horizontal_image(gt)
        feats = features_for(space, img, features_path, options)
        if space == INGESTED:
            feats = feats[:, :, ::-1]
    else:
        feats = features_for(space, img, features_path, options)
    return visual_difference(region_means(feats, gt, space))


def table1_report(entries, spaces, splits=SPLITS, loader=None, options=None) -> list[DistanceRow]:
    """Mean visual difference per feature space and split.

    ``entries`` are objects with ``image_id``, ``image``, ``gt``, ``split``
    and optionally ``features`` (path of an ingested feature file). The
    ``camo_flipped`` split reuses the ``camo`` entries with image and mask
    mirrored. Images whose mask lacks foreground or background are skipped.
    """
    from .core import read_mask_png, read_rgb_png

    loader = loader or (lambda e: (read_rgb_png(e.image), read_mask_png(e.gt)))
    rows = []
    for space in spaces:
        for split in splits:
            source = CAMO if split == CAMO_FLIPPED else split
            dists = []
            for e in entries:
                if e.split != source:
                    continue
                img, gt = loader(e)
                try:
                    dists.append(
                        image_distance(
                            space, img, gt, split == CAMO_FLIPPED, getattr(e, "features", None), options
                        )
                    )
                except ValidationError as exc:
                    log.warning("skipping %s for %s: %s", e.image_id, space, exc)
            if dists:
                rows.append(DistanceRow(space, split, float(np.mean(dists)), len(dists)))
    return rows
