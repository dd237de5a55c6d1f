"""
Copy-paste augmentation
=======================

Cut the largest instance out of an image and paste it where the background
matches the instance's own surroundings.
"""

import numpy as np

from camoseg.augment import augment_image, count_components, extract_instance, find_placements

rng = np.random.default_rng(0)
img = np.clip(0.45 + rng.normal(0, 0.01, (48, 64, 3)), 0, 1)
img[:, 40:] = [0.8, 0.7, 0.2]  # a differently colored strip on the right
gt = np.zeros((48, 64), bool)
gt[8:18, 6:20] = True
img[gt] = [0.3, 0.5, 0.2]

cut = extract_instance(img, gt)
print("instance box", cut.source_box, "surround color", np.round(cut.surround_mean_color, 3))

# candidates never land on the yellow strip, whose color is far off
for b in find_placements(img, gt, cut)[:5]:
    print("candidate", b)

samples = augment_image(img, gt, seed=1)
for s in samples:
    print(s.operations[:2], "components:", count_components(s.mask))
