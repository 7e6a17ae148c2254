"""Central finite-difference oracle for verifying backward rules."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autodiff import NonFiniteError, Tensor, reset_tape, backward


def finite_diff_check(f: Callable[[Sequence[Tensor]], Tensor],
                      points: Sequence[Tensor], h: float = 1e-3) -> float:
    """Max relative error between analytic gradients and central differences.

    ``f`` maps the tensors in ``points`` to a scalar. The check runs the
    same graph in float64 (the tensors are upcast copies) so the oracle is
    limited by truncation error, not float32 rounding. Error per coordinate
    is |analytic - numeric| / (|analytic| + 1e-8).
    """
    if h <= 0:
        raise ValueError("finite_diff_check needs h > 0")
    xs = [Tensor(p.data.astype(np.float64), requires_grad=True, dtype=np.float64)
          for p in points]

    reset_tape()
    loss = f(xs)
    if loss.ndim != 0:
        raise ValueError("finite_diff_check target must return a scalar")
    backward(loss)
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in xs]

    def eval_at() -> float:
        reset_tape()
        out = float(f(xs).data)
        reset_tape()
        if not np.isfinite(out):
            raise NonFiniteError("function evaluated non-finite during finite differencing")
        return out

    worst = 0.0
    for x, a in zip(xs, analytic):
        flat = x.data.reshape(-1)
        aflat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = eval_at()
            flat[i] = orig - h
            fm = eval_at()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            err = abs(aflat[i] - numeric) / (abs(aflat[i]) + 1e-8)
            worst = max(worst, err)
    return worst
