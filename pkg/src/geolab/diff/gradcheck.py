"""Finite-difference gradient checking."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def grad_check(fn, inputs, h: float = 1e-5) -> float:
    """Compare analytic gradients of a scalar-valued `fn(*inputs)` against
    central differences.

    Returns the max over all coordinates of
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    Inputs must be float64 for the quoted tolerances to be meaningful.
    """
    inputs = [x if isinstance(x, Tensor) else Tensor(x, requires_grad=True) for x in inputs]
    for x in inputs:
        x.zero_grad()
    out = fn(*inputs)
    if out.data.size != 1:
        raise ValueError("grad_check requires a scalar-valued function")
    out.backward()
    worst = 0.0
    for x in inputs:
        if not x.requires_grad:
            continue
        analytic = np.zeros_like(x.data) if x.grad is None else x.grad
        flat = x.data.ravel()
        aflat = analytic.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(fn(*inputs).data)
            flat[i] = orig - h
            fm = float(fn(*inputs).data)
            flat[i] = orig
            numeric = (fp - fm) / (2 * h)
            denom = max(1e-8, abs(aflat[i]) + abs(numeric))
            worst = max(worst, abs(aflat[i] - numeric) / denom)
    return worst
