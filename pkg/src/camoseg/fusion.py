"""Mirror-stream mask fusion.

Pipeline for one image:

1. un-flip every mirror-stream detection back into original coordinates;
2. drop detections scoring below ``score_threshold``;
3. winner-take-all pruning over the merged pool, highest score first;
4. drop survivors labelled non-camouflage;
5. paste every remaining mask into the image canvas and sum;
6. divide by the maximum if it exceeds one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    CAMOUFLAGE,
    MAIN,
    MIRROR,
    Box,
    Detection,
    StreamOutput,
    ValidationError,
    flip_stream,
    rasterize_mask,
    read_gray_png,
)

MUTUAL_FRACTION = "mutual_fraction"
IOU = "iou"

LOW_SCORE = "low_score"
OVERLAP_LOSER = "overlap_loser"
NON_CAMOUFLAGE = "non_camouflage"

_STREAM_RANK = {MAIN: 0, MIRROR: 1}


@dataclass(frozen=True)
class FusionConfig:
    score_threshold: float = 0.5
    overlap_threshold: float = 0.5
    overlap_rule: str = MUTUAL_FRACTION

    def __post_init__(self):
        for name in ("score_threshold", "overlap_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        if self.overlap_rule not in (MUTUAL_FRACTION, IOU):
            raise ValidationError(f"unknown overlap rule {self.overlap_rule!r}")


@dataclass(frozen=True)
class TracedDetection:
    detection: Detection
    stream: str
    index: int
    reason: str | None = None  # prune reason; None when kept
    winner: tuple[str, int] | None = None  # (stream, index) of the box that beat it

    def to_json(self) -> dict:
        d = self.detection
        out = {
            "stream": self.stream,
            "index": self.index,
            "box": list(d.box.as_tuple()),
            "label": d.label,
            "score": d.score,
        }
        if self.reason is not None:
            out["reason"] = self.reason
        if self.winner is not None:
            out["winner"] = {"stream": self.winner[0], "index": self.winner[1]}
        return out


@dataclass
class FusionTrace:
    kept: list[TracedDetection] = field(default_factory=list)
    pruned: list[TracedDetection] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "kept": [t.to_json() for t in self.kept],
            "pruned": [t.to_json() for t in self.pruned],
        }


def unflip_stream(s: StreamOutput) -> StreamOutput:
    """Map mirror-stream detections back onto the original image."""
    if s.stream != MIRROR:
        raise ValidationError("unflip_stream expects a mirror stream")
    return flip_stream(s)


def _intersection(b1: Box, b2: Box) -> float:
    w = min(b1.x2, b2.x2) - max(b1.x1, b2.x1)
    h = min(b1.y2, b2.y2) - max(b1.y1, b2.y1)
    return w * h if w > 0 and h > 0 else 0.0


def overlap(b1: Box, b2: Box, rule: str = MUTUAL_FRACTION) -> float:
    """Box overlap. ``mutual_fraction`` is the smaller of the two coverage
    fractions, so it reaches a threshold only if each box is covered at least
    that much by the intersection; ``iou`` is intersection over union."""
    inter = _intersection(b1, b2)
    if rule == MUTUAL_FRACTION:
        return min(inter / b1.area, inter / b2.area)
    if rule == IOU:
        return inter / (b1.area + b2.area - inter)
    raise ValidationError(f"unknown overlap rule {rule!r}")


def _to_traced(dets, streams) -> list[TracedDetection]:
    traced = []
    if streams is None:
        streams = [MAIN] * len(dets)
    counters: dict[str, int] = {}
    for d, s in zip(dets, streams):
        if isinstance(d, TracedDetection):
            traced.append(d)
            continue
        idx = counters.get(s, 0)
        counters[s] = idx + 1
        traced.append(TracedDetection(d, s, idx))
    return traced


def _order_key(t: TracedDetection):
    return (-t.detection.score, _STREAM_RANK.get(t.stream, 2), t.index)


def winner_take_all(dets, cfg: FusionConfig = FusionConfig(), streams=None) -> FusionTrace:
    """Greedy pruning in descending score order.

    ``dets`` is a sequence of :class:`Detection` (optionally with a parallel
    ``streams`` sequence) or of :class:`TracedDetection`. A candidate is
    pruned when it overlaps an already kept detection at or above
    ``cfg.overlap_threshold``. Ties in score go to the main stream, then to
    the lower input index.
    """
    trace = FusionTrace()
    for cand in sorted(_to_traced(list(dets), streams), key=_order_key):
        for kept in trace.kept:
            if overlap(kept.detection.box, cand.detection.box, cfg.overlap_rule) >= cfg.overlap_threshold:
                trace.pruned.append(
                    TracedDetection(cand.detection, cand.stream, cand.index, OVERLAP_LOSER, (kept.stream, kept.index))
                )
                break
        else:
            trace.kept.append(cand)
    return trace


def fuse_with_trace(main: StreamOutput, mirror: StreamOutput, cfg: FusionConfig = FusionConfig()):
    """Fuse both streams; returns ``(camouflage_map, trace)``."""
    if main.stream != MAIN:
        raise ValidationError("first stream must be the main stream")
    if (main.image_width, main.image_height) != (mirror.image_width, mirror.image_height):
        raise ValidationError(
            "dimension mismatch between streams: "
            f"{main.image_width}x{main.image_height} vs {mirror.image_width}x{mirror.image_height}"
        )
    width, height = main.image_width, main.image_height
    restored = unflip_stream(mirror)

    pool = _to_traced(main.detections, [MAIN] * len(main.detections))
    pool += _to_traced(restored.detections, [MIRROR] * len(restored.detections))

    low = [t for t in pool if t.detection.score < cfg.score_threshold]
    passing = [t for t in pool if t.detection.score >= cfg.score_threshold]
    trace = winner_take_all(passing, cfg)
    trace.pruned = [
        TracedDetection(t.detection, t.stream, t.index, LOW_SCORE) for t in sorted(low, key=_order_key)
    ] + trace.pruned

    survivors = []
    for t in trace.kept:
        if t.detection.label == CAMOUFLAGE:
            survivors.append(t)
        else:
            trace.pruned.append(TracedDetection(t.detection, t.stream, t.index, NON_CAMOUFLAGE))
    trace.kept = survivors

    acc = np.zeros((height, width))
    for t in survivors:
        try:
            acc += rasterize_mask(t.detection, width, height)
        except ValidationError:
            # box lies entirely off-image: contributes nothing
            continue
    peak = acc.max()
    if peak > 1.0:
        acc /= peak
    return acc, trace


def fuse(main: StreamOutput, mirror: StreamOutput, cfg: FusionConfig = FusionConfig()) -> np.ndarray:
    return fuse_with_trace(main, mirror, cfg)[0]


# --- detection files -------------------------------------------------------


def rle_encode(mask) -> list[int]:
    """Row-major run lengths alternating zeros and ones, zeros first."""
    flat = np.asarray(mask, dtype=bool).ravel()
    counts = []
    current = False
    run = 0
    for v in flat:
        if v == current:
            run += 1
        else:
            counts.append(run)
            current = v
            run = 1
    counts.append(run)
    return counts


def rle_decode(counts, width: int, height: int) -> np.ndarray:
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts) or sum(counts) != width * height:
        raise ValidationError(f"RLE counts must be nonnegative and sum to {width * height}")
    flat = np.repeat(np.arange(len(counts)) % 2, counts).astype(np.float64)
    return flat.reshape(height, width)


class DetectionFileError(ValidationError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


def _parse_record(rec: dict, base_dir: Path):
    for key in ("image_id", "stream", "box", "label", "score", "mask_w", "mask_h"):
        if key not in rec:
            raise ValidationError(f"missing field {key!r}")
    mw, mh = int(rec["mask_w"]), int(rec["mask_h"])
    if mw <= 0 or mh <= 0:
        raise ValidationError("mask dimensions must be positive")
    if "mask_rle" in rec:
        mask = rle_decode(rec["mask_rle"], mw, mh)
    elif "mask_png_path" in rec:
        path = Path(rec["mask_png_path"])
        if not path.is_absolute():
            path = base_dir / path
        mask = read_gray_png(path)
        if mask.shape != (mh, mw):
            raise ValidationError(f"mask PNG is {mask.shape[1]}x{mask.shape[0]}, expected {mw}x{mh}")
    else:
        raise ValidationError("record needs mask_rle or mask_png_path")
    box = rec["box"]
    if len(box) != 4:
        raise ValidationError("box must have four coordinates")
    det = Detection(Box(*map(float, box)), rec["label"], float(rec["score"]), mask)
    return str(rec["image_id"]), rec["stream"], det


def read_detections(path) -> dict[str, dict[str, list[Detection]]]:
    """Parse a JSON Lines detection file into ``{image_id: {stream: [...]}}``.

    Record order within a stream is preserved; it is the tie-break index.
    """
    path = Path(path)
    out: dict[str, dict[str, list[Detection]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise ValidationError("record must be a JSON object")
                image_id, stream, det = _parse_record(rec, path.parent)
            except (json.JSONDecodeError, ValidationError, TypeError, ValueError, OSError) as exc:
                raise DetectionFileError(path, line_no, str(exc)) from exc
            out.setdefault(image_id, {}).setdefault(stream, []).append(det)
    return out


def detection_record(image_id: str, stream: str, det: Detection, binary: bool | None = None) -> dict:
    """Serialize a detection with an RLE mask. Soft masks cannot be run-length
    coded; store them as PNG files and reference them via ``mask_png_path``."""
    mask = det.mask
    if binary is None:
        binary = bool(np.all((mask == 0) | (mask == 1)))
    if not binary:
        raise ValidationError("soft masks must be stored as PNG files; use mask_png_path")
    return {
        "image_id": image_id,
        "stream": stream,
        "box": list(det.box.as_tuple()),
        "label": det.label,
        "score": det.score,
        "mask_rle": rle_encode(mask >= 0.5),
        "mask_w": mask.shape[1],
        "mask_h": mask.shape[0],
    }


def write_detections(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
