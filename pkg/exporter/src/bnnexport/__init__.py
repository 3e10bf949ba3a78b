"""Convert trained Keras-style binarized models into bnnverify network JSON."""

from .activations import ste_sign
from .export import ExportError, ExportManifest, export

__version__ = "0.1.0"

__all__ = ["ExportError", "ExportManifest", "export", "ste_sign"]
