"""Multi-task detection/segmentation losses with analytic gradients.

The total loss is the unweighted sum of a classification cross entropy,
a smooth-L1 box regression term and a per-pixel mask cross entropy.
Logarithms are natural. Zero probabilities raise instead of being clamped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ValidationError

SUM_TOL = 1e-9


class InfiniteLossError(ValidationError):
    pass


@dataclass(frozen=True, eq=False)
class ClassPrediction:
    p: np.ndarray
    u: int
    check: bool = True

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        object.__setattr__(self, "p", p)
        if not 0 <= self.u < p.size:
            raise ValidationError(f"true class {self.u} out of range for {p.size} classes")
        if self.check:
            if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > SUM_TOL:
                raise ValidationError("class probabilities must lie in [0, 1] and sum to 1")


@dataclass(frozen=True, eq=False)
class BoxRegressionSample:
    t: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if t.shape != (4,) or v.shape != (4,):
            raise ValidationError("box offsets must be 4-vectors (x, y, w, h)")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValidationError("box offsets must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)


@dataclass(frozen=True, eq=False)
class MaskPredictionSample:
    """Per-pixel label distributions ``m`` (N x K) and true labels ``s``."""

    m: np.ndarray
    s: np.ndarray
    check: bool = True

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.m, dtype=np.float64))
        s = np.asarray(self.s, dtype=int).reshape(-1)
        if m.shape[0] != s.size or s.size == 0:
            raise ValidationError("need one label per pixel and at least one pixel")
        if np.any(s < 0) or np.any(s >= m.shape[1]):
            raise ValidationError("pixel label out of range")
        if self.check:
            if np.any(m < 0) or np.any(m > 1) or np.any(np.abs(m.sum(axis=1) - 1.0) > SUM_TOL):
                raise ValidationError("per-pixel probabilities must lie in [0, 1] and sum to 1")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "s", s)

    @property
    def n(self) -> int:
        return self.s.size

    def true_probs(self) -> np.ndarray:
        return self.m[np.arange(self.n), self.s]


@dataclass(frozen=True)
class LossBreakdown:
    l_cls: float
    l_loc: float
    l_mask: float
    total: float


def loss_cls(c: ClassPrediction) -> float:
    pu = c.p[c.u]
    if pu <= 0.0:
        raise InfiniteLossError("infinite loss: true-class probability is zero")
    return float(-np.log(pu))


def loss_cls_grad(c: ClassPrediction) -> np.ndarray:
    """Gradient with respect to the probability vector."""
    pu = c.p[c.u]
    if pu <= 0.0:
        raise InfiniteLossError("infinite loss: true-class probability is zero")
    g = np.zeros_like(c.p)
    g[c.u] = -1.0 / pu
    return g


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_cls_logit_grad(logits, u: int) -> np.ndarray:
    """Gradient of ``-log softmax(logits)[u]`` with respect to the logits."""
    g = softmax(logits)
    g[u] -= 1.0
    return g


def smooth_l1(x):
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    out = np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)
    return float(out) if out.ndim == 0 else out


def smooth_l1_grad(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.where(np.abs(x) < 1.0, x, np.sign(x))
    return float(out) if out.ndim == 0 else out


def loss_loc(b: BoxRegressionSample) -> float:
    return float(np.sum(smooth_l1(b.t - b.v)))


def loss_loc_grad(b: BoxRegressionSample) -> np.ndarray:
    """Gradient with respect to the regressed offsets ``t``."""
    return smooth_l1_grad(b.t - b.v)


def loss_mask(ms: MaskPredictionSample) -> float:
    q = ms.true_probs()
    if np.any(q <= 0.0):
        raise InfiniteLossError("infinite loss: a pixel gives its true label zero probability")
    return float(-np.mean(np.log(q)))


def loss_mask_grad(ms: MaskPredictionSample) -> np.ndarray:
    q = ms.true_probs()
    if np.any(q <= 0.0):
        raise InfiniteLossError("infinite loss: a pixel gives its true label zero probability")
    g = np.zeros_like(ms.m)
    g[np.arange(ms.n), ms.s] = -1.0 / (ms.n * q)
    return g


def loss_total(c: ClassPrediction, b: BoxRegressionSample, ms: MaskPredictionSample) -> LossBreakdown:
    l_cls = loss_cls(c)
    l_loc = loss_loc(b)
    l_mask = loss_mask(ms)
    return LossBreakdown(l_cls, l_loc, l_mask, l_cls + l_loc + l_mask)
