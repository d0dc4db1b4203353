"""Adam optimizer."""
from __future__ import annotations

import numpy as np

from ..errors import MissingGradient
from ..kernels import adam_update
from .tensor import Parameter


class AdamState:
    """Adam with bias correction. Frozen parameters are skipped entirely and
    stay bit-identical; gradients of updated parameters are cleared after the
    step."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {}
        self._v = {}

    def _moments(self, param: Parameter):
        key = id(param)
        if key not in self._m:
            self._m[key] = np.zeros_like(param.data)
            self._v[key] = np.zeros_like(param.data)
        return self._m[key], self._v[key]


def adam_step(params, state: AdamState):
    live = [p for p in params if not p.frozen]
    for p in live:
        if p.grad is None:
            raise MissingGradient(f"parameter {p.name!r} has no gradient")
    state.step_count += 1
    for p in live:
        m, v = state._moments(p)
        adam_update(p.data, p.grad, m, v, state.lr, state.beta1, state.beta2,
                    state.eps, state.step_count)
        p.tensor.grad = None
