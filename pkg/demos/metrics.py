"""
Scoring a predicted map
=======================

MAE, F-beta, IOU, E-measure, S-measure and weighted F on one toy example,
then the same metrics on a blurred version of the ground truth.
"""

import numpy as np
from scipy import ndimage

from camoseg.metrics import ThresholdRule, evaluate_image

gt = np.zeros((40, 50), bool)
gt[10:28, 12:30] = True

print(evaluate_image("perfect", gt.astype(float), gt, ThresholdRule()))

# a soft, slightly shifted prediction
pred = ndimage.gaussian_filter(np.roll(gt, 3, axis=1).astype(float), 2.0)
for rule in (ThresholdRule(), ThresholdRule("fixed", 0.5)):
    s = evaluate_image("blurred", pred, gt, rule)
    print(rule, {k: round(v, 4) for k, v in vars(s).items() if isinstance(v, float)})

# an empty prediction for an empty ground truth is a perfect answer
print(evaluate_image("empty", np.zeros((8, 8)), np.zeros((8, 8), bool), ThresholdRule()))
