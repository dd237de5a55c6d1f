"""
Pooling a box out of a feature map
==================================

Three ways to turn a continuous box into a fixed grid of features, and why
the exact integral is the one that can be trained through.
"""

import numpy as np

from camoseg.core import Box
from camoseg.roi_pool import (
    ROI_ALIGN,
    ROI_POOL_MAX,
    PoolSpec,
    prroi_backward,
    prroi_forward,
    roi_align,
    roi_pool_max,
)

# a single-channel map that curves in both directions
yy, xx = np.mgrid[0:8, 0:8] + 0.5
f = (np.sin(xx / 2) * np.cos(yy / 3))[None]
box = Box(1.3, 2.0, 5.9, 6.0)

# quantized max pooling snaps the box to whole cells, so nudging x1 by a
# fraction of a pixel changes nothing
print(roi_pool_max(f, box, PoolSpec(2, 2, ROI_POOL_MAX)).values[..., 0])
print(roi_pool_max(f, Box(1.45, 2.0, 5.9, 6.0), PoolSpec(2, 2, ROI_POOL_MAX)).values[..., 0])

# sampled bilinear averaging gets closer to the true mean as samples grow
exact = prroi_forward(f, box, PoolSpec(2, 2)).values
for n in (1, 2, 4, 16):
    approx = roi_align(f, box, PoolSpec(2, 2, ROI_ALIGN), n).values
    print(n, "samples/axis, max error", np.abs(approx - exact).max())

print(exact[..., 0])

# gradient of the pooled sum with respect to the box corners, available
# because the exact average is a smooth function of the box
g = prroi_backward(f, box, PoolSpec(2, 2), np.ones((2, 2, 1)))
print("d/d(x1, y1, x2, y2) =", g.d_box)
