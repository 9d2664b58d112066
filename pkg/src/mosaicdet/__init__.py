"""Mosaic augmentation, YOLO-style loss kernels and detection evaluation."""

__version__ = "0.1.0"
