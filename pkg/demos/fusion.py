"""
Fusing a main and a mirror stream
=================================

The same detector runs on an image and on its horizontal mirror. The mirror
detections are flipped back, overlapping boxes compete, and the survivors
are painted into one soft map.
"""

import numpy as np

from camoseg.core import CAMOUFLAGE, MAIN, MIRROR, NON_CAMOUFLAGE, Box, Detection, StreamOutput
from camoseg.fusion import fuse_with_trace, overlap


def det(box, score, label=CAMOUFLAGE):
    return Detection(Box(*box), label, score, np.ones((28, 28)))


W, H = 16, 10
main = StreamOutput(MAIN, W, H, [
    det((1, 1, 6, 6), 0.9),
    det((10, 2, 14, 7), 0.8, NON_CAMOUFLAGE),  # not camouflage: dropped
    det((4, 4, 9, 9), 0.3),  # below the score threshold
])
# mirror coordinates: (10, 1, 15, 6) is (1, 1, 6, 6) seen in the mirror
mirror = StreamOutput(MIRROR, W, H, [
    det((10, 1, 15, 6), 0.85),
    det((2, 3, 6, 8), 0.7),  # unflips to (10, 3, 14, 8)
])

print("overlap of two 4x4 boxes sharing half their width:", overlap(Box(0, 0, 4, 4), Box(2, 0, 6, 4)))

# competition runs before the class filter: the second mirror box loses to
# main box 1, which is then dropped as non-camouflage
fused, trace = fuse_with_trace(main, mirror)
for t in trace.kept:
    print("kept  ", t.stream, t.index, t.detection.box)
for t in trace.pruned:
    print("pruned", t.stream, t.index, t.reason)
print(np.round(fused, 2))
