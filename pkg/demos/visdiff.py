"""
How different is an object from its background?
===============================================

Unit-normalized mean descriptors of the foreground and background, compared
in RGB, in the lαβ opponent space and on a histogram of textons.
"""

import numpy as np

from camoseg.visdiff import LAB, RGB, TEXTON, image_distance

rng = np.random.default_rng(3)
gt = np.zeros((40, 40), bool)
gt[12:28, 10:26] = True

# a green object on green grass: camouflaged
grass = np.clip([0.3, 0.5, 0.2] + rng.normal(0, 0.05, (40, 40, 3)), 0, 1)
hidden = grass.copy()
hidden[gt] = np.clip([0.32, 0.52, 0.2] + rng.normal(0, 0.05, (gt.sum(), 3)), 0, 1)

# a red object on the same grass: conspicuous
shown = grass.copy()
shown[gt] = [0.8, 0.1, 0.1]

for space in (RGB, LAB, TEXTON):
    print(f"{space:14s} hidden {image_distance(space, hidden, gt):.4f}  shown {image_distance(space, shown, gt):.4f}")

# mirroring the image and mask together leaves every distance unchanged
print(image_distance(LAB, shown, gt), image_distance(LAB, shown, gt, flip=True))
