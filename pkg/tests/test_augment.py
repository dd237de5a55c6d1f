import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays

from camoseg.augment import (
    CLONE,
    FLIP,
    TRANSLATE,
    AugmentConfig,
    InstanceCut,
    admit_for_augmentation,
    augment_image,
    color_distance,
    count_components,
    extract_instance,
    find_placements,
    place_clone,
    target_color,
)
from camoseg.core import Box, ValidationError

from conftest import blob_mask
from oracles import bfs_components


def test_count_components_examples():
    assert count_components(np.zeros((5, 5), bool)) == 0
    m = np.zeros((6, 6), bool)
    m[1:4, 2:5] = True
    assert count_components(m) == 1
    d = np.zeros((3, 3), bool)
    d[0, 0] = d[1, 1] = True
    assert count_components(d) == 1


@settings(max_examples=80)
@given(arrays(bool, (7, 9)))
def test_count_matches_bfs(mask):
    assert count_components(mask) == bfs_components(mask)


def test_admission_rule():
    rng = np.random.default_rng(0)
    assert not admit_for_augmentation(blob_mask(rng, 30, 30, 3))
    assert admit_for_augmentation(blob_mask(rng, 30, 30, 1))
    assert admit_for_augmentation(blob_mask(rng, 30, 30, 2))
    assert not admit_for_augmentation(np.zeros((5, 5), bool))


def test_extract_instance_examples():
    img = np.full((8, 8, 3), 0.5)
    with pytest.raises(ValidationError, match="no surround"):
        extract_instance(img, np.ones((8, 8), bool))
    with pytest.raises(ValidationError, match="empty mask"):
        extract_instance(img, np.zeros((8, 8), bool))

    gt = np.zeros((8, 8), bool)
    gt[3, 3] = True
    cut = extract_instance(img, gt)
    assert cut.alpha.shape == (1, 1) and cut.patch.shape == (1, 1, 3)
    assert cut.source_box == Box(3, 3, 4, 4)
    np.testing.assert_array_equal(cut.surround_mean_color, [0.5, 0.5, 0.5])


def test_extract_takes_largest_component():
    img = np.random.default_rng(1).random((20, 20, 3))
    gt = np.zeros((20, 20), bool)
    gt[1:3, 1:3] = True
    gt[10:15, 8:12] = True
    cut = extract_instance(img, gt)
    assert cut.source_box == Box(8, 10, 12, 15)


def test_ring_excludes_foreground():
    img = np.zeros((20, 20, 3))
    gt = np.zeros((20, 20), bool)
    gt[8:12, 8:12] = True
    gt[3:5, 8:12] = True  # second component inside the ring area
    img[3:5, 8:12] = 1.0
    cut = extract_instance(img, gt, AugmentConfig(surround_margin=6))
    np.testing.assert_array_equal(cut.surround_mean_color, [0, 0, 0])


def _scene(bg=0.4, size=32):
    img = np.full((size, size, 3), bg)
    gt = np.zeros((size, size), bool)
    gt[4:9, 4:10] = True
    img[gt] = [0.9, 0.2, 0.1]
    return img, gt


def test_paste_onto_matching_background():
    img, gt = _scene()
    cut = extract_instance(img, gt)
    out_img, out_gt = place_clone(img, gt, cut, Box(20, 20, 26, 25), CLONE)
    assert count_components(out_gt) == 2
    np.testing.assert_array_equal(out_img[20:25, 20:26], cut.patch)
    changed = np.any(out_img != img, axis=2)
    assert not np.any(changed & ~out_gt)


def test_color_mismatch_rejected():
    img, gt = _scene()
    img[16:, 16:] = 0.9  # differs from the 0.4 surround by 0.5
    cut = extract_instance(img, gt)
    with pytest.raises(ValidationError, match="no color match"):
        place_clone(img, gt, cut, Box(24, 24, 30, 29), CLONE)
    # translate skips the color test
    place_clone(img, gt, cut, Box(24, 24, 30, 29), TRANSLATE)


def test_occlusion_rejected():
    img, gt = _scene()
    cut = extract_instance(img, gt)
    with pytest.raises(ValidationError, match="occludes instance"):
        place_clone(img, gt, cut, Box(6, 6, 12, 11), CLONE)


def test_flip_mode_of_symmetric_patch():
    img = np.full((20, 20, 3), 0.3)
    gt = np.zeros((20, 20), bool)
    gt[2:5, 2:7] = True
    img[2:5, 2:7] = [0.1, 0.5, 0.9]
    img[3, 4] = [1.0, 1.0, 1.0]  # symmetric about the patch's vertical axis
    cut = extract_instance(img, gt)
    out, _ = place_clone(img, gt, cut, Box(10, 10, 15, 13), FLIP)
    np.testing.assert_array_equal(out[10:13, 10:15], out[10:13, 10:15][:, ::-1])
    np.testing.assert_array_equal(out[10:13, 10:15], cut.patch)


def test_find_placements_examples():
    img, gt = _scene()
    cut = extract_instance(img, gt)
    cfg = AugmentConfig(placements_per_instance=100)
    boxes = find_placements(img, gt, cut, cfg)
    assert len(boxes) > 5
    assert boxes == find_placements(img, gt, cut, cfg)
    # uniform background: equal distances, so scan order is kept
    assert boxes == sorted(boxes, key=lambda b: (b.y1, b.x1))
    src = cut.source_box
    for b in boxes:
        assert b.x2 + 1 <= src.x1 or b.x1 >= src.x2 + 1 or b.y2 + 1 <= src.y1 or b.y1 >= src.y2 + 1

    far = np.full_like(img, 0.95)
    far[gt] = img[gt]
    cut_far = InstanceCut(cut.patch, cut.alpha, cut.source_box, np.zeros(3))
    assert find_placements(far, gt, cut_far, cfg) == []


def test_find_placements_sorted_by_distance():
    rng = np.random.default_rng(5)
    img, gt = _scene()
    img[~gt] += rng.uniform(-0.03, 0.03, (np.count_nonzero(~gt), 1))
    cut = extract_instance(img, gt)
    cfg = AugmentConfig(placements_per_instance=50, color_tolerance=0.2)
    boxes = find_placements(img, gt, cut, cfg)
    d = [color_distance(target_color(img, gt, b, cfg), cut.surround_mean_color) for b in boxes]
    assert d == sorted(d)


def _corpus_image(rng, size=40):
    n = int(rng.integers(0, 4))
    gt = blob_mask(rng, size, size, n)
    base = rng.uniform(0.2, 0.8, 3)
    img = np.clip(base + rng.normal(0, 0.01, (size, size, 3)), 0, 1)
    img[gt] = rng.uniform(0, 1, 3)
    return img, gt


def test_augment_invariants_on_corpus():
    rng = np.random.default_rng(11)
    for k in range(12):
        img, gt = _corpus_image(rng)
        samples = augment_image(img, gt, AugmentConfig(), seed=k)
        assert bool(samples) == admit_for_augmentation(gt)
        for s in samples[1:]:
            n_paste = len(s.operations)
            assert bfs_components(s.mask) == bfs_components(gt) + n_paste
            changed = np.any(s.image != img, axis=2)
            assert not np.any(changed & ~s.mask)
            assert s.image.min() >= 0 and s.image.max() <= 1
        again = augment_image(img, gt, AugmentConfig(), seed=k)
        assert len(again) == len(samples)
        for a, b in zip(again, samples):
            assert np.array_equal(a.image, b.image) and np.array_equal(a.mask, b.mask)
            assert a.operations == b.operations
