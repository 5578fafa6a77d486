"""Gradient-descent optimizers over lists of parameter arrays."""

from __future__ import annotations

import numpy as np

__all__ = ["Adam", "NormSGD"]


class Adam:
    def __init__(self, params, step_size=0.05, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        """One descent step; updates the parameter arrays in place."""
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, m, v, g in zip(self.params, self.m, self.v, grads):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.step_size * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class NormSGD:
    """Fixed-length steps along the exact gradient direction.

    Keeps the update parallel to the supplied direction, which matters
    when that direction was constructed geometrically (projections,
    rejections): per-coordinate preconditioning would bend it.
    """

    def __init__(self, params, step_size=0.05, eps=1e-20):
        self.params = list(params)
        self.step_size = step_size
        self.eps = eps

    def step(self, grads):
        for p, g in zip(self.params, grads):
            norm = float(np.linalg.norm(g))
            if norm > self.eps:
                p -= self.step_size * (g / norm)
