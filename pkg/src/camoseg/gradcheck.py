"""Central finite differences and the randomized gradient-check suites
behind the ``gradcheck`` command."""

from __future__ import annotations

import numpy as np

from . import losses
from .core import Box
from .roi_pool import PoolSpec, prroi_backward, prroi_forward


def central_difference(func, x, step=1e-6):
    """Gradient of scalar ``func`` at array ``x`` by centered differences."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        fplus = func(x)
        flat[k] = orig - step
        fminus = func(x)
        flat[k] = orig
        gflat[k] = (fplus - fminus) / (2.0 * step)
    return grad


def relative_error(analytic, numeric, floor=1e-6):
    """Elementwise ``|a - n| / max(|n|, floor)``; max over elements."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def random_prroi_case(rng, size=8, channels=2, max_bins=3, max_bin_extent=1.5):
    """A random feature map, box, pooling spec and upstream gradient."""
    f = rng.random((channels, size, size))
    nx, ny = (int(v) for v in rng.integers(1, max_bins + 1, 2))
    bw = rng.uniform(0.2, max_bin_extent) * nx
    bh = rng.uniform(0.2, max_bin_extent) * ny
    x1 = rng.uniform(-1.0, size + 1.0 - bw)
    y1 = rng.uniform(-1.0, size + 1.0 - bh)
    spec = PoolSpec(nx, ny)
    upstream = rng.standard_normal((ny, nx, channels))
    return f, Box(x1, y1, x1 + bw, y1 + bh), spec, upstream


def prroi_box_error(f, box, spec, upstream, step=1e-5):
    grads = prroi_backward(f, box, spec, upstream)

    def objective(coords):
        return float(np.sum(upstream * prroi_forward(f, Box(*coords), spec).values))

    numeric = central_difference(objective, box.as_tuple(), step)
    return relative_error(grads.d_box, numeric)


def prroi_feature_error(f, box, spec, upstream, step=1e-5):
    grads = prroi_backward(f, box, spec, upstream)

    def objective(feat):
        return float(np.sum(upstream * prroi_forward(feat, box, spec).values))

    numeric = central_difference(objective, f, step)
    return relative_error(grads.d_features, numeric)


def loss_errors(rng, step=1e-6):
    """Max relative errors of the analytic loss gradients on one random
    sample, keyed by loss name."""
    k = int(rng.integers(2, 6))
    p = rng.dirichlet(np.ones(k)) * 0.9 + 0.1 / k
    u = int(rng.integers(k))
    cls = losses.ClassPrediction(p, u)
    num = central_difference(lambda q: losses.loss_cls(losses.ClassPrediction(q, u, check=False)), p, step)

    t = rng.normal(0.0, 1.5, 4)
    v = rng.normal(0.0, 1.5, 4)
    # keep away from the |x| = 1 seam where the second derivative jumps
    while np.any(np.abs(np.abs(t - v) - 1.0) < 1e-3):
        t = rng.normal(0.0, 1.5, 4)
    reg = losses.BoxRegressionSample(t, v)
    num_loc = central_difference(lambda q: losses.loss_loc(losses.BoxRegressionSample(q, v)), t, step)

    n = int(rng.integers(1, 10))
    m = rng.dirichlet(np.ones(k), size=n) * 0.9 + 0.1 / k
    s = rng.integers(k, size=n)
    mask = losses.MaskPredictionSample(m, s)
    num_mask = central_difference(
        lambda q: losses.loss_mask(losses.MaskPredictionSample(q, s, check=False)), m, step
    )
    return {
        "loss_cls": relative_error(losses.loss_cls_grad(cls), num),
        "loss_loc": relative_error(losses.loss_loc_grad(reg), num_loc),
        "loss_mask": relative_error(losses.loss_mask_grad(mask), num_mask),
    }


def run_suite(cases=100, seed=0):
    """Run every finite-difference suite; returns ``{suite: max rel error}``."""
    rng = np.random.default_rng(seed)
    box_err = feat_err = 0.0
    for k in range(cases):
        case = random_prroi_case(rng)
        box_err = max(box_err, prroi_box_error(*case))
        if k < 10:
            small = random_prroi_case(rng, size=3, channels=1)
            feat_err = max(feat_err, prroi_feature_error(*small))
    report = {"prroi_d_box": box_err, "prroi_d_features": feat_err}
    for _ in range(cases):
        for name, err in loss_errors(rng).items():
            report[name] = max(report.get(name, 0.0), err)
    return report
