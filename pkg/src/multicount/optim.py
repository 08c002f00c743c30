"""Adaptive moment estimation over a named parameter set."""

from __future__ import annotations

import numpy as np

from .engine import Tensor


class Adam:
    """Standard bias-corrected Adam.

    Holds one first/second moment buffer per parameter, keyed by the
    parameter name.  ``step`` reads each parameter's ``grad`` and updates
    ``data`` in place; non-finite gradients abort the step because they mean
    training has diverged.
    """

    def __init__(self, params: dict[str, Tensor], learning_rate: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.first_moment = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.second_moment = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {name!r}")
            m = self.first_moment[name]
            v = self.second_moment[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.epsilon)

    # checkpoint support ------------------------------------------------------

    def state_buffers(self) -> dict[str, np.ndarray]:
        """Moment buffers under stable names, in parameter order."""
        out: dict[str, np.ndarray] = {}
        for name in self.params:
            out[f"optim.m.{name}"] = self.first_moment[name]
            out[f"optim.v.{name}"] = self.second_moment[name]
        return out

    def load_state_buffers(self, buffers: dict[str, np.ndarray],
                           step_count: int) -> None:
        self.step_count = step_count
        for name in self.params:
            self.first_moment[name] = buffers[f"optim.m.{name}"].copy()
            self.second_moment[name] = buffers[f"optim.v.{name}"].copy()
