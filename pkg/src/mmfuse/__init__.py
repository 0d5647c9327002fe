"""Multimodal audio-text fusion toolkit.

Trains and evaluates a speech/transcript classifier over precomputed
embedding containers: attentive statistics pooling over acoustic frames,
learned projections, attention/gated/bilinear fusion, a mutual-information
lower-bound regularizer, and a reproducible multi-run training protocol.
"""

from .autodiff import Tensor, gradcheck, no_grad
from .kernels import backend_name

__version__ = "0.1.0"

__all__ = ["Tensor", "gradcheck", "no_grad", "backend_name", "__version__"]
