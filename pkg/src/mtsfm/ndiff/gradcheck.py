"""Central finite-difference oracle for checking analytic gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, precision


def numeric_grad(fn: Callable[..., Tensor], inputs: Sequence[Tensor], index: int, step: float = 1e-5) -> np.ndarray:
    x = inputs[index].data
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        hi = float(np.sum(fn(*inputs).data))
        flat[i] = old - step
        lo = float(np.sum(fn(*inputs).data))
        flat[i] = old
        gflat[i] = (hi - lo) / (2 * step)
    return g


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    wrt: Sequence[int] | None = None,
    step: float = 1e-5,
    rtol: float = 1e-3,
    atol: float = 1e-6,
) -> dict:
    """Compare backprop against central differences at 64-bit.

    ``fn`` must be deterministic; non-scalar outputs are summed. Returns a
    dict of per-input worst violations; raises AssertionError on mismatch.
    """
    with precision(np.float64):
        inputs = [Tensor(np.array(t.data, dtype=np.float64), requires_grad=t.requires_grad) for t in inputs]
        wrt = list(range(len(inputs))) if wrt is None else list(wrt)
        for i in wrt:
            inputs[i].requires_grad = True
        out = fn(*inputs)
        loss = out if out.size == 1 else out.sum()
        backward(loss)
        report = {}
        for i in wrt:
            analytic = inputs[i].grad if inputs[i].grad is not None else np.zeros_like(inputs[i].data)
            numeric = numeric_grad(fn, inputs, i, step)
            err = np.abs(analytic - numeric)
            tol = atol + rtol * np.abs(numeric)
            worst = float(np.max(err - tol)) if err.size else -1.0
            report[i] = {"max_abs_err": float(err.max()) if err.size else 0.0, "excess": worst}
            if worst > 0:
                k = int(np.argmax(err - tol))
                raise AssertionError(
                    f"gradient mismatch for input {i} at flat index {k}: "
                    f"analytic={analytic.reshape(-1)[k]:.8g} numeric={numeric.reshape(-1)[k]:.8g}"
                )
        return report
