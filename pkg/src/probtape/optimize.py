"""Gradient ascent on the log-likelihood for MAP estimation.

Optimizers are stepped by the caller until a termination condition holds::

    opt = Adam(rate=0.01)
    for _ in range(1000):
        opt.step(model, x)

``step`` updates ``x`` (a float numpy array) in place in the ascent
direction and returns the log-likelihood before the step.
"""

import math

import numpy as np

from probtape.ad import gradient

__all__ = ["MomentumSGD", "Adam", "NonFiniteGradient"]


class NonFiniteGradient(FloatingPointError):
    """The gradient contained nan or inf; parameters were left unchanged."""


def _grad(model, x):
    ll, g = gradient(model, x)
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient(f"non-finite gradient at {list(x)}: {list(g)}")
    return ll, g


class MomentumSGD:
    """Stochastic gradient ascent with momentum.

    velocity <- decay * velocity + rate * gradient; x <- x + velocity.
    """

    def __init__(self, rate=0.01, decay=0.0):
        if not rate > 0:
            raise ValueError("rate must be positive")
        if not 0.0 <= decay < 1.0:
            raise ValueError("decay must be in [0, 1)")
        self.rate = rate
        self.decay = decay
        self.velocity = None

    def step(self, model, x):
        ll, g = _grad(model, x)
        if self.velocity is None:
            self.velocity = np.zeros(len(x))
        self.velocity *= self.decay
        self.velocity += self.rate * g
        x += self.velocity
        return ll


class Adam:
    """Adam (Kingma and Ba) applied to ascent."""

    def __init__(self, rate=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        if not rate > 0:
            raise ValueError("rate must be positive")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError("beta1 and beta2 must be in [0, 1)")
        if not eps > 0:
            raise ValueError("eps must be positive")
        self.rate = rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, model, x):
        ll, g = _grad(model, x)
        if self.m is None:
            self.m = np.zeros(len(x))
            self.v = np.zeros(len(x))
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g
        mhat = self.m / (1.0 - math.pow(self.beta1, self.t))
        vhat = self.v / (1.0 - math.pow(self.beta2, self.t))
        x += self.rate * mhat / (np.sqrt(vhat) + self.eps)
        return ll
