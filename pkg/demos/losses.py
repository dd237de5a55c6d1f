"""
Multi-task losses
=================

Classification, box regression and per-pixel mask losses, with their
analytic gradients checked against finite differences.
"""

import numpy as np

from camoseg.gradcheck import central_difference
from camoseg.losses import (
    BoxRegressionSample,
    ClassPrediction,
    MaskPredictionSample,
    loss_cls,
    loss_loc,
    loss_loc_grad,
    loss_total,
    smooth_l1,
)

# an undecided two-way classifier pays ln 2
print(loss_cls(ClassPrediction([0.5, 0.5], 0)))

# smooth L1 is quadratic inside the unit interval and linear outside
x = np.array([-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0])
print(smooth_l1(x))

c = ClassPrediction([0.7, 0.3], 0)
b = BoxRegressionSample([0.2, -1.5, 0.1, 3.0], [0.0, 0.0, 0.0, 0.0])
m = MaskPredictionSample([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]], [0, 1, 0])
print(loss_total(c, b, m))

# analytic versus numeric gradient of the box term
t = np.array(b.t)
numeric = central_difference(lambda q: loss_loc(BoxRegressionSample(q, b.v)), t)
print(loss_loc_grad(b), numeric)
