"""Reverse-mode automatic differentiation over dense numpy arrays."""
from .tensor import (
    GraphError,
    Tensor,
    as_tensor,
    backward,
    debug_mode,
    get_default_dtype,
    grad_enabled,
    is_debug,
    no_grad,
    precision,
    set_debug,
    set_default_dtype,
)
from .ops import ShapeError
from .gradcheck import gradcheck, numeric_grad
from . import ops

__all__ = [
    "GraphError",
    "ShapeError",
    "Tensor",
    "as_tensor",
    "backward",
    "debug_mode",
    "get_default_dtype",
    "grad_enabled",
    "gradcheck",
    "is_debug",
    "no_grad",
    "numeric_grad",
    "ops",
    "precision",
    "set_debug",
    "set_default_dtype",
]
