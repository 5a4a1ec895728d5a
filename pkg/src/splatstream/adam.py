"""Adam parameter updates over named float64 arrays."""

from __future__ import annotations

import numpy as np

from .errors import NaNGradient


class Adam:
    """Adam with bias correction; one learning rate per registered array.

    Parameters are updated in place. A non-finite gradient raises NaNGradient
    with the offending parameter name so the frame can be aborted cleanly.
    """

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-15):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._params: dict[str, np.ndarray] = {}
        self._lr: dict[str, float] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._t: dict[str, int] = {}

    def register(self, name: str, param: np.ndarray, lr: float) -> None:
        self._params[name] = param
        self._lr[name] = float(lr)
        self._m[name] = np.zeros_like(param)
        self._v[name] = np.zeros_like(param)
        self._t[name] = 0

    def registered(self) -> list[str]:
        return list(self._params)

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if name not in self._params:
                continue
            if not np.all(np.isfinite(g)):
                raise NaNGradient(f"non-finite gradient for parameter {name!r}")
            p = self._params[name]
            self._t[name] += 1
            t = self._t[name]
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            p -= self._lr[name] * m_hat / (np.sqrt(v_hat) + self.eps)
