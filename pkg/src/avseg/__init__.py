"""Audio-visual segmentation training toolkit on a synthetic benchmark."""

__version__ = "0.1.0"
