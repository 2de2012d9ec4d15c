from .kernels import BACKEND, get_backend
from .network import (
    ACTIVATIONS,
    Gradients,
    NetworkSpec,
    apply_gradients,
    backprop,
    finite_diff,
    forward,
    init_network,
    loss_mse_masked,
)

DEFAULT_FRAMEWORK = "builtin-mlp/v1"

__all__ = [
    "ACTIVATIONS",
    "BACKEND",
    "DEFAULT_FRAMEWORK",
    "Gradients",
    "NetworkSpec",
    "apply_gradients",
    "backprop",
    "finite_diff",
    "forward",
    "get_backend",
    "init_network",
    "loss_mse_masked",
]
