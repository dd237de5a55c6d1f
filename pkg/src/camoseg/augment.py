"""Instance-level augmentation for camouflage training data.

Images whose ground truth has one or two 8-connected components are
admitted. The largest component is cut out together with the mean color of
a ring of background around it, and pasted back onto other regions of the
same image: flipped, translated, or cloned onto background whose color is
close to the instance's original surroundings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import Box, ValidationError, as_binary, as_rgb, flip_horizontal_image

FLIP = "flip"
TRANSLATE = "translate"
CLONE = "clone"
MODES = (FLIP, TRANSLATE, CLONE)

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)
# color distances are compared at this resolution so that rounding noise in
# region means cannot reorder equally distant candidates
DISTANCE_QUANTUM = 1e-12


@dataclass(frozen=True)
class AugmentConfig:
    max_components: int = 2
    color_tolerance: float = 0.05
    surround_margin: int = 8
    placements_per_instance: int = 3

    def __post_init__(self):
        if self.color_tolerance < 0:
            raise ValidationError("color tolerance must be nonnegative")
        if self.surround_margin < 1:
            raise ValidationError("surround margin must be at least 1")
        if self.max_components < 1 or self.placements_per_instance < 0:
            raise ValidationError("invalid augmentation counts")


@dataclass(frozen=True, eq=False)
class InstanceCut:
    patch: np.ndarray  # (h, w, 3)
    alpha: np.ndarray  # (h, w) bool
    source_box: Box
    surround_mean_color: np.ndarray  # (3,)

    @property
    def height(self) -> int:
        return self.alpha.shape[0]

    @property
    def width(self) -> int:
        return self.alpha.shape[1]


def label_components(gt) -> tuple[np.ndarray, int]:
    return ndimage.label(as_binary(gt), structure=EIGHT_CONNECTED)


def count_components(gt) -> int:
    return int(label_components(gt)[1])


def admit_for_augmentation(gt, cfg: AugmentConfig = AugmentConfig()) -> bool:
    return 1 <= count_components(gt) <= cfg.max_components


def _int_box(rows: slice, cols: slice) -> Box:
    return Box(cols.start, rows.start, cols.stop, rows.stop)


def _ring_pixels(shape, rows: slice, cols: slice, margin: int, exclude: np.ndarray) -> np.ndarray:
    """Boolean selector of the band of width ``margin`` around a box,
    clipped to the image, minus ``exclude``."""
    h, w = shape
    sel = np.zeros(shape, dtype=bool)
    sel[max(rows.start - margin, 0):min(rows.stop + margin, h), max(cols.start - margin, 0):min(cols.stop + margin, w)] = True
    sel[rows, cols] = False
    return sel & ~exclude


def color_distance(a, b) -> float:
    """Mean per-channel absolute RGB difference."""
    return float(np.mean(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))


def extract_instance(img, gt, cfg: AugmentConfig = AugmentConfig()) -> InstanceCut:
    """Cut the largest foreground component out of ``img``."""
    img = as_rgb(img)
    gt = as_binary(gt)
    if img.shape[:2] != gt.shape:
        raise ValidationError("image and mask dimensions differ")
    labels, n = label_components(gt)
    if n == 0:
        raise ValidationError("empty mask: nothing to extract")
    sizes = np.bincount(labels.ravel())[1:]
    target = int(np.argmax(sizes)) + 1  # first label wins ties
    rows, cols = ndimage.find_objects(labels)[target - 1]
    ring = _ring_pixels(gt.shape, rows, cols, cfg.surround_margin, gt)
    if not ring.any():
        raise ValidationError("no surround: no background pixels around the instance")
    alpha = labels[rows, cols] == target
    return InstanceCut(
        patch=img[rows, cols].copy(),
        alpha=alpha,
        source_box=_int_box(rows, cols),
        surround_mean_color=img[ring].mean(axis=0),
    )


def _target_slices(cut: InstanceCut, target: Box, shape) -> tuple[slice, slice]:
    coords = target.as_tuple()
    if any(c != int(c) for c in coords):
        raise ValidationError("target box must have integer coordinates")
    x1, y1, x2, y2 = (int(c) for c in coords)
    if (y2 - y1, x2 - x1) != cut.alpha.shape:
        raise ValidationError("target box size must match the instance patch")
    h, w = shape
    if x1 < 0 or y1 < 0 or x2 > w or y2 > h:
        raise ValidationError("target box must lie inside the image")
    return slice(y1, y2), slice(x1, x2)


def target_color(img, gt, target: Box, cfg: AugmentConfig) -> np.ndarray | None:
    """Mean background color of a target box and its surrounding band."""
    x1, y1, x2, y2 = (int(c) for c in target.as_tuple())
    h, w = gt.shape
    rows = slice(max(y1 - cfg.surround_margin, 0), min(y2 + cfg.surround_margin, h))
    cols = slice(max(x1 - cfg.surround_margin, 0), min(x2 + cfg.surround_margin, w))
    bg = ~gt[rows, cols]
    if not bg.any():
        return None
    return img[rows, cols][bg].mean(axis=0)


def _check_placement(img, gt, cut, target, mode, cfg):
    rows, cols = _target_slices(cut, target, gt.shape)
    h, w = gt.shape
    # one-pixel guard band keeps the pasted component from touching others
    guard = gt[max(rows.start - 1, 0):min(rows.stop + 1, h), max(cols.start - 1, 0):min(cols.stop + 1, w)]
    if guard.any():
        raise ValidationError("occludes instance: target region touches existing foreground")
    dist = None
    if mode == CLONE:
        tc = target_color(img, gt, target, cfg)
        dist = color_distance(tc, cut.surround_mean_color)
        if dist > cfg.color_tolerance:
            raise ValidationError(f"no color match: distance {dist:.4f} exceeds tolerance {cfg.color_tolerance}")
    return rows, cols, dist


def place_clone(img, gt, cut: InstanceCut, target: Box, mode: str = CLONE, cfg: AugmentConfig = AugmentConfig()):
    """Composite the instance into ``target``; returns new ``(image, mask)``.

    ``flip`` mirrors the instance before pasting. ``translate`` copies the
    instance without a color test (the source region is left untouched).
    ``clone`` additionally requires the target background color to be within
    ``cfg.color_tolerance`` of the instance's original surround.
    """
    if mode not in MODES:
        raise ValidationError(f"unknown placement mode {mode!r}")
    img = as_rgb(img)
    gt = as_binary(gt)
    rows, cols, _ = _check_placement(img, gt, cut, target, mode, cfg)
    patch, alpha = cut.patch, cut.alpha
    if mode == FLIP:
        patch = flip_horizontal_image(patch)
        alpha = flip_horizontal_image(alpha)
    out_img = img.copy()
    out_gt = gt.copy()
    region = out_img[rows, cols]
    region[alpha] = patch[alpha]
    out_gt[rows, cols] |= alpha
    return out_img, out_gt


def find_placements(img, gt, cut: InstanceCut, cfg: AugmentConfig = AugmentConfig()) -> list[Box]:
    """Candidate clone targets on a grid with half-patch stride, sorted by
    ascending background color distance (scan order breaks ties)."""
    img = as_rgb(img)
    gt = as_binary(gt)
    h, w = gt.shape
    ph, pw = cut.alpha.shape
    sy = max(ph // 2, 1)
    sx = max(pw // 2, 1)
    found = []
    for y in range(0, h - ph + 1, sy):
        for x in range(0, w - pw + 1, sx):
            target = Box(x, y, x + pw, y + ph)
            try:
                _, _, dist = _check_placement(img, gt, cut, target, CLONE, cfg)
            except ValidationError:
                continue
            found.append((dist, len(found), target))
    found.sort(key=lambda t: (round(t[0] / DISTANCE_QUANTUM), t[1]))
    return [t[2] for t in found[: cfg.placements_per_instance]]


@dataclass
class AugmentedSample:
    image: np.ndarray
    mask: np.ndarray
    operations: list[dict] = field(default_factory=list)


def augment_image(img, gt, cfg: AugmentConfig = AugmentConfig(), seed: int = 0) -> list[AugmentedSample]:
    """All augmentations for one image: a whole-image flip plus one sample
    carrying every successful instance paste. Returns an empty list for
    images that are not admitted.

    The seed only chooses between ``clone`` and ``flip`` for each candidate
    placement; candidates themselves are deterministic.
    """
    img = as_rgb(img)
    gt = as_binary(gt)
    if not admit_for_augmentation(gt, cfg):
        return []
    samples = [
        AugmentedSample(flip_horizontal_image(img), flip_horizontal_image(gt), [{"op": "flip_image"}])
    ]
    try:
        cut = extract_instance(img, gt, cfg)
    except ValidationError:
        return samples
    rng = np.random.default_rng(seed)
    cur_img, cur_gt = img, gt
    ops = []
    for target in find_placements(img, gt, cut, cfg):
        mode = CLONE if rng.random() < 0.5 else FLIP
        try:
            cur_img, cur_gt = place_clone(cur_img, cur_gt, cut, target, mode, cfg)
        except ValidationError:
            # an earlier paste in this loop now blocks the candidate
            continue
        ops.append({"op": mode, "source_box": list(cut.source_box.as_tuple()), "target_box": list(target.as_tuple())})
    if ops:
        samples.append(AugmentedSample(cur_img, cur_gt, ops))
    return samples
