from pathlib import Path

import numpy as np
import pytest

from camoseg.core import CAMOUFLAGE, NON_CAMOUFLAGE, Box, Detection

_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        tag = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"{tag:4s}  {name}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_detection(rng, width, height, label=None, score=None, mask_res=8, binary=False):
    bw = rng.uniform(2.0, width * 0.6)
    bh = rng.uniform(2.0, height * 0.6)
    x1 = rng.uniform(-1.0, width - bw + 1.0)
    y1 = rng.uniform(-1.0, height - bh + 1.0)
    mask = rng.random((mask_res, mask_res))
    if binary:
        mask = (mask > 0.5).astype(float)
    return Detection(
        Box(x1, y1, x1 + bw, y1 + bh),
        label or (CAMOUFLAGE if rng.random() < 0.8 else NON_CAMOUFLAGE),
        float(rng.uniform(0.0, 1.0) if score is None else score),
        mask,
    )


def blob_mask(rng, h, w, n_blobs):
    """Mask with ``n_blobs`` separated rectangles (8-disconnected)."""
    gt = np.zeros((h, w), dtype=bool)
    placed = 0
    tries = 0
    while placed < n_blobs and tries < 500:
        tries += 1
        bh, bw = rng.integers(2, max(3, h // 4), 2)
        y, x = rng.integers(0, h - bh), rng.integers(0, w - bw)
        if gt[max(y - 1, 0):y + bh + 1, max(x - 1, 0):x + bw + 1].any():
            continue
        gt[y:y + bh, x:x + bw] = True
        placed += 1
    return gt


def make_dataset(root, rng, n_images=6, width=32, height=24):
    """Synthetic images, ground truths, two detection streams and a manifest
    under ``root``. Returns the paths used by the fuse/eval commands."""
    from camoseg.core import MAIN, MIRROR, flip_detection, write_gray_png, write_rgb_png
    from camoseg.dataset import ManifestEntry, write_manifest
    from camoseg.fusion import detection_record, write_detections

    root = Path(root)
    for sub in ("images", "gt"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    entries, main_recs, mirror_recs = [], [], []
    for k in range(n_images):
        image_id = f"img{k:02d}"
        img = rng.random((height, width, 3))
        gt = blob_mask(rng, height, width, int(rng.integers(0, 3)))
        write_rgb_png(root / "images" / f"{image_id}.png", img)
        write_gray_png(root / "gt" / f"{image_id}.png", gt.astype(float))
        entries.append(ManifestEntry(image_id, Path("images") / f"{image_id}.png", Path("gt") / f"{image_id}.png",
                                     "camo" if gt.any() else "non_camo"))
        for _ in range(int(rng.integers(0, 4))):
            main_recs.append(detection_record(image_id, MAIN, random_detection(rng, width, height, binary=True)))
        for _ in range(int(rng.integers(0, 4))):
            d = flip_detection(random_detection(rng, width, height, binary=True), width)
            mirror_recs.append(detection_record(image_id, MIRROR, d))
    write_manifest(root / "manifest.csv", entries)
    write_detections(root / "main.jsonl", main_recs)
    write_detections(root / "mirror.jsonl", mirror_recs)
    return root / "main.jsonl", root / "mirror.jsonl", root / "manifest.csv", root / "gt"
