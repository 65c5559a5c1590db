"""Class-conditional GAN for fixed-length raw waveforms on a numpy autodiff engine."""

__version__ = "0.1.0"

from .tensor import Tensor, backward, grad, grad_norm_penalty, no_grad, sample_uniform

__all__ = [
    "Tensor",
    "backward",
    "grad",
    "grad_norm_penalty",
    "no_grad",
    "sample_uniform",
    "__version__",
]
