"""Dataset manifests (CSV) and a best-effort CAMO layout loader."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .core import ValidationError, image_size

SPLIT_TAGS = ("camo", "non_camo")
IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp")


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image: Path | None
    gt: Path | None
    split: str = "camo"
    width: int | None = None
    height: int | None = None
    features: Path | None = None

    def size(self) -> tuple[int, int]:
        if self.width is not None and self.height is not None:
            return self.width, self.height
        if self.image is None:
            raise ValidationError(f"{self.image_id}: no image path and no explicit size")
        return image_size(self.image)


def load_manifest(path, check_files: bool = True) -> list[ManifestEntry]:
    """Read a manifest CSV with columns ``image_id, image, gt, split`` and
    optional ``width, height, features``. Relative paths resolve against the
    manifest's directory."""
    path = Path(path)
    base = path.parent
    entries = []
    seen = set()

    def resolve(v):
        if not v:
            return None
        p = Path(v)
        return p if p.is_absolute() else base / p

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "image_id" not in reader.fieldnames:
            raise ValidationError(f"{path}: manifest needs an image_id column")
        for line_no, row in enumerate(reader, start=2):
            image_id = row["image_id"].strip()
            if image_id in seen:
                raise ValidationError(f"{path}:{line_no}: duplicate image id {image_id!r}")
            seen.add(image_id)
            split = (row.get("split") or "camo").strip()
            if split not in SPLIT_TAGS:
                raise ValidationError(f"{path}:{line_no}: split must be one of {SPLIT_TAGS}")
            w = row.get("width") or None
            h = row.get("height") or None
            entry = ManifestEntry(
                image_id,
                resolve(row.get("image")),
                resolve(row.get("gt")),
                split,
                int(w) if w else None,
                int(h) if h else None,
                resolve(row.get("features")),
            )
            if check_files:
                for p in (entry.image, entry.gt, entry.features):
                    if p is not None and not p.exists():
                        raise ValidationError(f"{path}:{line_no}: missing file {p}")
            entries.append(entry)
    return entries


def write_manifest(path, entries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "image", "gt", "split", "width", "height", "features"])
        for e in entries:
            w.writerow([
                e.image_id,
                e.image or "",
                e.gt or "",
                e.split,
                "" if e.width is None else e.width,
                "" if e.height is None else e.height,
                e.features or "",
            ])


def _files_by_stem(directory: Path) -> dict[str, Path]:
    return {p.stem: p for p in sorted(directory.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def discover_camo(root) -> list[ManifestEntry]:
    """Pair images and ground-truth maps under a CAMO-style directory.

    Image folders are any directories named ``Image``/``Images``/``imgs``;
    ground truths come from sibling ``GT``/``gt``/``masks`` folders and are
    matched by file stem. Files whose stem starts with ``camo`` (including the
    dataset's ``camourflage_`` prefix) are tagged ``camo``, the rest
    ``non_camo``.
    """
    root = Path(root)
    image_names = {"image", "images", "imgs"}
    gt_names = {"gt", "masks", "mask", "groundtruth"}
    gts: dict[str, Path] = {}
    images: dict[str, Path] = {}
    for d in sorted(p for p in root.rglob("*") if p.is_dir()):
        name = d.name.lower()
        if name in gt_names:
            gts.update(_files_by_stem(d))
        elif name in image_names or d.parent.name.lower() in image_names:
            images.update(_files_by_stem(d))
    entries = []
    for stem in sorted(images):
        if stem in gts:
            split = "camo" if stem.lower().startswith("camo") else "non_camo"
            entries.append(ManifestEntry(stem, images[stem], gts[stem], split))
    return entries
