"""Grid representations of manufacturing data and small CNNs trained on them."""

from ._accel import BACKEND
from .tensor import Tensor, zeros

__version__ = "0.1.0"
__all__ = ["BACKEND", "Tensor", "zeros", "__version__"]
