"""fedwsm: a deterministic federated-learning simulator with a re-weighted
softmax local objective and local client forgetting metrics."""

from .kernels import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
