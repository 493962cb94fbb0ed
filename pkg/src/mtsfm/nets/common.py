from __future__ import annotations

import numpy as np

from ..ndiff import Tensor, ops


def disp_to_depth(disp, min_depth: float = 0.1, max_depth: float = 100.0):
    """depth = 1 / (a * disp + b) with a = 1/min - 1/max, b = 1/max.

    Works on Tensors (differentiably) and on plain arrays.
    """
    a = 1.0 / min_depth - 1.0 / max_depth
    b = 1.0 / max_depth
    if isinstance(disp, Tensor):
        return 1.0 / (disp * a + b)
    return 1.0 / (np.asarray(disp) * a + b)


def depth_to_disp(depth, min_depth: float = 0.1, max_depth: float = 100.0):
    a = 1.0 / min_depth - 1.0 / max_depth
    b = 1.0 / max_depth
    return (1.0 / np.asarray(depth) - b) / a


def init_disparity_head(conv, min_depth: float, max_depth: float, gain: float = 0.1) -> None:
    """Shrink a sigmoid head's weights and centre its bias on the geometric-mean depth.

    A freshly initialised head spans almost the whole (0, 1) disparity range;
    pixels pinned at either end of the sigmoid get no gradient once the
    scale/pose ambiguity pushes them there.
    """
    d = depth_to_disp(np.sqrt(min_depth * max_depth), min_depth, max_depth)
    conv.weight.data *= gain
    conv.bias.data[...] = np.log(d / (1 - d))


def to_nchw(image) -> Tensor:
    """(H, W, C) array or Tensor -> (1, C, H, W) Tensor (differentiable for Tensors)."""
    t = image if isinstance(image, Tensor) else Tensor(image)
    if t.ndim == 3:
        return t.permute(2, 0, 1).reshape(1, t.shape[2], t.shape[0], t.shape[1])
    if t.ndim == 4:
        return t
    raise ValueError(f"expected (H, W, C) image, got shape {t.shape}")


def stack_pair(first, second) -> Tensor:
    """Two (H, W, 3) frames -> (1, 6, H, W) network input."""
    return ops.concat([to_nchw(first), to_nchw(second)], axis=1)
