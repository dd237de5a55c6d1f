"""Training-free toolkit for mirror-stream camouflaged object segmentation:
RoI pooling with box gradients, multi-task losses, mask fusion,
augmentation, foreground/background visual difference and evaluation."""

from .core import Box, Detection, StreamOutput, ValidationError

__version__ = "0.1.0"

__all__ = ["Box", "Detection", "StreamOutput", "ValidationError", "__version__"]
