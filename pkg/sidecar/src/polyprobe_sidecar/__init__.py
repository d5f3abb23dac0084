"""HTTP scoring sidecar around a pretrained masked language model."""

__version__ = "0.1.0"
