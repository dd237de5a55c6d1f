import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from camoseg.core import ValidationError, write_gray_png
from camoseg.metrics import (
    ADAPTIVE,
    CAMO_ONLY,
    CSV_COLUMNS,
    FIXED,
    FULL,
    ConfusionCounts,
    ThresholdRule,
    adaptive_threshold,
    apply_rule,
    binarize,
    e_measure,
    evaluate_dataset,
    f_beta,
    f_beta_from_pr,
    iou,
    mae,
    s_measure,
    weighted_f,
)

from oracles import f_beta_oracle, iou_oracle

EPS = np.finfo(float).eps


# --- oracles -----------------------------------------------------------------


def _mround(v):
    return math.floor(v + 0.5)


def s_measure_oracle(pred, gt, alpha=0.5):
    """Structure measure following the published reference code, eps kept."""
    gt = gt.astype(bool)
    y = gt.mean()
    if y == 0:
        return 1 - pred.mean()
    if y == 1:
        return pred.mean()

    def obj(vals):
        x = vals.mean()
        sd = vals.std(ddof=1) if vals.size > 1 else 0.0
        return 2 * x / (x * x + 1 + sd + EPS)

    o = y * obj(pred[gt]) + (1 - y) * obj(1 - pred[~gt])

    h, w = gt.shape
    rows, cols = np.nonzero(gt)
    X = _mround(cols.mean()) + 1
    Y = _mround(rows.mean()) + 1

    def ssim(p, g):
        n = p.size
        mx, my = p.mean(), g.mean()
        sx = ((p - mx) ** 2).sum() / (n - 1 + EPS)
        sy = ((g - my) ** 2).sum() / (n - 1 + EPS)
        sxy = ((p - mx) * (g - my)).sum() / (n - 1 + EPS)
        a = 4 * mx * my * sxy
        b = (mx * mx + my * my) * (sx + sy)
        if a != 0:
            return a / (b + EPS)
        return 1.0 if b == 0 else 0.0

    g = gt.astype(float)
    parts = [
        (pred[:Y, :X], g[:Y, :X]),
        (pred[:Y, X:], g[:Y, X:]),
        (pred[Y:, :X], g[Y:, :X]),
        (pred[Y:, X:], g[Y:, X:]),
    ]
    r = sum(p.size / (h * w) * ssim(p, q) for p, q in parts if p.size)
    return max(alpha * o + (1 - alpha) * r, 0.0)


def weighted_f_oracle(pred, gt, beta2=1.0):
    """Brute-force distances and an explicit 7x7 correlation with replicated
    borders."""
    gt = gt.astype(bool)
    h, w = gt.shape
    err = np.abs(pred - gt)
    fg = np.argwhere(gt)
    dist = np.zeros((h, w))
    et = err.copy()
    for i in range(h):
        for j in range(w):
            if not gt[i, j]:
                d2 = ((fg - [i, j]) ** 2).sum(axis=1)
                k = int(np.argmin(d2))
                dist[i, j] = math.sqrt(d2[k])
                et[i, j] = err[tuple(fg[k])]
    ax = np.arange(7) - 3
    kern = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / 50.0)
    kern /= kern.sum()
    ea = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            for a in range(7):
                for b in range(7):
                    ii = min(max(i + a - 3, 0), h - 1)
                    jj = min(max(j + b - 3, 0), w - 1)
                    ea[i, j] += kern[a, b] * et[ii, jj]
    min_e = np.where(gt & (ea < err), ea, err)
    weight = np.where(gt, 1.0, 2 - np.exp(math.log(0.5) / 5 * dist))
    ew = min_e * weight
    tpw = gt.sum() - ew[gt].sum()
    fpw = ew[~gt].sum()
    r = 1 - ew[gt].mean()
    p = tpw / (EPS + tpw + fpw)
    return (1 + beta2) * r * p / (EPS + r + beta2 * p)


def e_measure_oracle(pred, gt, eps=1e-8):
    pred = pred.astype(float)
    g = gt.astype(float)
    if g.sum() == 0:
        enh = 1 - pred
    elif (1 - g).sum() == 0:
        enh = pred
    else:
        a = pred - pred.mean()
        b = g - g.mean()
        enh = ((2 * a * b / (a * a + b * b + eps)) + 1) ** 2 / 4
    return enh.mean()


# --- tests -------------------------------------------------------------------


def all_2x2():
    for bits in itertools.product([0, 1], repeat=4):
        yield np.array(bits, dtype=bool).reshape(2, 2)


def test_exhaustive_2x2_pairs():
    n = 0
    for pred in all_2x2():
        for gt in all_2x2():
            assert f_beta(pred, gt) == f_beta_oracle(pred, gt)
            assert iou(pred, gt) == iou_oracle(pred, gt)
            c = ConfusionCounts.from_masks(pred, gt)
            assert c.total == 4
            n += 1
    assert n == 256


def test_threshold_examples():
    assert adaptive_threshold(np.full((4, 4), 0.5)) == 0.5
    half = np.zeros((4, 4))
    half[:, :2] = 1.0
    assert adaptive_threshold(half) == 1.0
    assert adaptive_threshold(np.zeros((3, 3))) == 0.0

    assert binarize(np.full((2, 2), 0.5), 0.5).all()
    assert binarize(np.random.default_rng(0).random((3, 3)), 0.0).all()
    assert not binarize(np.zeros((2, 2)), 0.5).any()


def test_adaptive_rule_on_all_zero_map_is_empty():
    mask, theta = apply_rule(np.zeros((3, 3)), ThresholdRule(ADAPTIVE))
    assert theta == 0.0 and not mask.any()


def test_threshold_rule_parse():
    assert ThresholdRule.parse("adaptive").kind == ADAPTIVE
    assert ThresholdRule.parse("fixed") == ThresholdRule(FIXED, 0.5)
    assert ThresholdRule.parse("fixed:0.25") == ThresholdRule(FIXED, 0.25)
    with pytest.raises(ValidationError):
        ThresholdRule.parse("otsu")
    with pytest.raises(ValidationError):
        ThresholdRule.parse("fixed:1.5")


def test_f_beta_examples():
    gt = np.array([[1, 1], [0, 0]], dtype=bool)
    assert f_beta(gt, gt) == 1.0
    assert f_beta_from_pr(0.5, 1.0) == pytest.approx(0.65 / 1.15, abs=1e-12)
    assert f_beta_from_pr(0.5, 1.0) == pytest.approx(0.56522, abs=1e-5)
    # P = 0.5, R = 1 through counts
    pred = np.array([[1, 1], [1, 1]], dtype=bool)
    assert f_beta(pred, gt) == pytest.approx(0.56522, abs=1e-5)
    assert f_beta(~gt, gt) == 0.0
    with pytest.raises(ValidationError, match="dimension mismatch"):
        f_beta(gt, np.zeros((3, 3), bool))


def test_iou_examples():
    gt = np.zeros((4, 4), bool)
    gt[:2] = True
    assert iou(gt, gt) == 1.0
    assert iou(~gt, gt) == 0.0
    half = np.zeros((4, 4), bool)
    half[0] = True
    assert iou(half, gt) == 0.5
    assert iou(np.zeros((2, 2), bool), np.zeros((2, 2), bool)) == 1.0


def test_mae_examples():
    a = np.random.default_rng(0).random((3, 4))
    assert mae(a, a) == 0.0
    assert mae(np.full((2, 2), 0.5), np.zeros((2, 2))) == 0.5
    assert mae(np.ones((2, 2)), np.zeros((2, 2))) == 1.0


def test_e_measure_examples():
    gt = np.array([[1, 0], [1, 0]], dtype=bool)
    assert e_measure(gt, gt) == 1.0
    assert e_measure(~gt, gt) == 0.0
    z = np.zeros((3, 3), bool)
    assert e_measure(z, z) == 1.0
    assert e_measure(~z, z) == 0.0
    assert e_measure(z, ~z) == 0.0


def test_e_measure_matches_reference(rng):
    for _ in range(30):
        pred = rng.random((9, 7)) > 0.5
        gt = rng.random((9, 7)) > 0.6
        # with mixed gt the denominator never vanishes, so the guard is inert
        assert e_measure(pred, gt) == pytest.approx(e_measure_oracle(pred, gt, eps=0.0), abs=1e-12)
        assert e_measure(pred, gt) == pytest.approx(e_measure_oracle(pred, gt), abs=1e-6)


def test_s_measure_examples():
    gt = np.zeros((6, 6), bool)
    gt[1:4, 2:5] = True
    assert s_measure(gt.astype(float), gt) == 1.0
    z = np.zeros((5, 5))
    assert s_measure(z, z.astype(bool)) == 1.0
    assert s_measure(np.ones((5, 5)), z.astype(bool)) == 0.0
    assert s_measure(np.full((5, 5), 0.3), np.ones((5, 5), bool)) == pytest.approx(0.3)


def test_s_measure_matches_reference(rng):
    for _ in range(40):
        h, w = rng.integers(4, 14, 2)
        pred = rng.random((h, w))
        gt = rng.random((h, w)) > rng.uniform(0.3, 0.9)
        if rng.random() < 0.3:
            pred = np.round(pred)
        assert s_measure(pred, gt) == pytest.approx(s_measure_oracle(pred, gt), abs=1e-9)


def test_weighted_f_examples():
    gt = np.zeros((8, 8), bool)
    gt[2:5, 3:6] = True
    assert weighted_f(gt.astype(float), gt) == 1.0
    assert weighted_f(np.zeros((8, 8)), gt) == 0.0
    z = np.zeros((4, 4))
    assert weighted_f(z, z.astype(bool)) == 1.0
    assert weighted_f(np.full((4, 4), 0.2), z.astype(bool)) == 0.0


def test_weighted_f_matches_reference(rng):
    for _ in range(15):
        h, w = rng.integers(5, 12, 2)
        gt = np.zeros((h, w), bool)
        y, x = rng.integers(0, h - 2), rng.integers(0, w - 2)
        gt[y:y + rng.integers(1, 4), x:x + rng.integers(1, 4)] = True
        pred = rng.random((h, w))
        # constant response on the foreground keeps nearest-pixel ties harmless
        pred[gt] = rng.random()
        assert weighted_f(pred, gt) == pytest.approx(weighted_f_oracle(pred, gt), abs=1e-9)


def test_weighted_f_farther_false_positive_never_scores_higher():
    gt = np.zeros((12, 24), bool)
    gt[4:8, 2:6] = True
    scores = []
    for col in range(7, 24):
        pred = gt.astype(float)
        pred[6, col] = 1.0
        scores.append(weighted_f(pred, gt))
    assert all(b <= a for a, b in zip(scores, scores[1:]))
    assert scores[-1] < scores[0]


unit_maps = arrays(np.float64, (5, 6), elements=st.floats(0, 1))


@settings(max_examples=60)
@given(unit_maps, unit_maps, unit_maps)
def test_mae_symmetry_and_triangle(a, b, c):
    assert mae(a, b) == mae(b, a)
    assert mae(a, c) <= mae(a, b) + mae(b, c) + 1e-12


@settings(max_examples=60, deadline=None)
@given(unit_maps, arrays(bool, (5, 6)))
def test_metric_ranges_and_flip_invariance(pred, gt):
    b = pred >= 0.5
    for v in (f_beta(b, gt), iou(b, gt), e_measure(b, gt), s_measure(pred, gt), weighted_f(pred, gt), mae(pred, gt)):
        assert 0.0 <= v <= 1.0
    fb, fg = b[:, ::-1], gt[:, ::-1]
    assert f_beta(fb, fg) == f_beta(b, gt)
    assert iou(fb, fg) == iou(b, gt)
    assert e_measure(fb, fg) == pytest.approx(e_measure(b, gt), abs=1e-12)


def test_f_beta_monotone_in_tp():
    # grow TP one pixel at a time while FP and FN stay at 4 each
    prev = -1.0
    cells = [(i, j) for i in range(4) for j in range(4)]
    for k in range(1, 12):
        pred = np.zeros((4, 8), bool)
        gt = np.zeros((4, 8), bool)
        for i, j in cells[:k]:
            pred[i, j] = gt[i, j] = True
        pred[0, 4:] = True
        gt[3, 4:] = True
        c = ConfusionCounts.from_masks(pred, gt)
        assert (c.tp, c.fp, c.fn) == (k, 4, 4)
        v = f_beta(pred, gt)
        assert v > prev
        prev = v


def _write_pair(pred_dir, gt_dir, image_id, pred, gt):
    write_gray_png(pred_dir / f"{image_id}.png", pred)
    write_gray_png(gt_dir / f"{image_id}.png", gt.astype(float))


def test_evaluate_dataset_examples(tmp_path):
    pred_dir, gt_dir = tmp_path / "pred", tmp_path / "gt"
    pred_dir.mkdir()
    gt_dir.mkdir()
    gt = np.zeros((6, 6), bool)
    gt[1:4, 1:4] = True
    _write_pair(pred_dir, gt_dir, "a", gt.astype(float), gt)
    report = evaluate_dataset(pred_dir, gt_dir, ThresholdRule.parse("adaptive"))
    row = report.per_image[0]
    assert (row.f_beta, row.iou, row.e_phi, row.s_alpha, row.weighted_f, row.mae) == (1, 1, 1, 1, 1, 0)

    _write_pair(pred_dir, gt_dir, "b", np.full((6, 6), 128 / 255), np.zeros((6, 6), bool))
    _write_pair(pred_dir, gt_dir, "c", np.zeros((6, 6)), np.zeros((6, 6), bool))
    report = evaluate_dataset(pred_dir, gt_dir, ThresholdRule.parse("fixed"), FULL)
    assert [r.image_id for r in report.per_image] == ["a", "b", "c"]
    assert report.aggregate["mae"] == pytest.approx((0 + 128 / 255 + 0) / 3)
    zero = report.per_image[2]
    assert (zero.f_beta, zero.iou, zero.e_phi, zero.s_alpha, zero.weighted_f, zero.mae) == (1, 1, 1, 1, 1, 0)

    camo = evaluate_dataset(pred_dir, gt_dir, ThresholdRule.parse("fixed"), CAMO_ONLY)
    assert [r.image_id for r in camo.per_image] == ["a"]

    out = tmp_path / "r.csv"
    report.write_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 4


def test_two_image_mean(tmp_path):
    pred_dir, gt_dir = tmp_path / "pred", tmp_path / "gt"
    pred_dir.mkdir()
    gt_dir.mkdir()
    gt = np.zeros((4, 4), bool)
    _write_pair(pred_dir, gt_dir, "x", np.zeros((4, 4)), gt)
    half = np.full((4, 4), 0.5)
    write_gray_png(pred_dir / "y.png", np.round(half * 255) / 255)
    write_gray_png(gt_dir / "y.png", np.zeros((4, 4)))
    maes = [r.mae for r in evaluate_dataset(pred_dir, gt_dir).per_image]
    assert maes[0] == 0.0
    agg = evaluate_dataset(pred_dir, gt_dir).aggregate["mae"]
    assert agg == pytest.approx(np.mean(maes))


def test_missing_ground_truth_lists_ids(tmp_path):
    pred_dir, gt_dir = tmp_path / "pred", tmp_path / "gt"
    pred_dir.mkdir()
    gt_dir.mkdir()
    for i in ("p1", "p2"):
        write_gray_png(pred_dir / f"{i}.png", np.zeros((2, 2)))
    with pytest.raises(ValidationError, match="p1, p2"):
        evaluate_dataset(pred_dir, gt_dir)
