"""Olive-variety style image classification toolkit.

Preprocessing (blur, Otsu segmentation, cropping), seeded augmentation,
stratified splitting, miniature MobileNetV2 / EfficientNetB0 networks trained
with Adam, and confusion-matrix evaluation, all on numpy.
"""

__version__ = "0.1.0"
