"""Log-density building blocks.

Distributions are models: each has an ``observe`` taking the distribution
parameters followed by the observations, plus ``logp`` and ``logps`` for
the scalar and vector log-densities. All functions accept plain or tracked
scalars.
"""

import math

from probtape.ad import Tracked, TapeError, elemental, register_elemental, tsum, value_of
from probtape.fmath import exp, lgamma, log

__all__ = ["Normal", "Expon", "Dirichlet", "log_sum_exp", "softmax",
           "normal_logp", "normal_logps", "expon_logp", "expon_logps",
           "dirichlet_logps", "SimplexError"]

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class SimplexError(ValueError):
    """A vector passed as a simplex is not on the open probability simplex."""


@elemental
def normal_logp(mu, sigma, y):
    """Log-density of Normal(mu, sigma) at y; nan unless sigma > 0."""
    if not sigma > 0.0:
        return math.nan
    z = (y - mu) / sigma
    return -0.5 * z * z - math.log(sigma) - _HALF_LOG_2PI


def _normal_logp_grad(_, mu, sigma, y):
    if not sigma > 0.0:
        return [math.nan, math.nan, math.nan]
    z = (y - mu) / sigma
    return [z / sigma, (z * z - 1.0) / sigma, -z / sigma]


register_elemental(normal_logp, _normal_logp_grad)


def normal_logps(mu, sigma, ys):
    return tsum([normal_logp(mu, sigma, y) for y in ys])


def expon_logp(lam, y):
    logl = log(lam)
    return logl - lam * y


def expon_logps(lam, ys):
    logl = log(lam)
    return tsum([logl - lam * y for y in ys])


class _Normal:
    """Normal distribution; ``observe`` takes ``[mu, sigma, y...]``."""

    def observe(self, x):
        mu, sigma, y = x[0], x[1], x[2:]
        if len(y) == 1:
            return self.logp(mu, sigma, y[0])
        return self.logps(mu, sigma, y)

    @staticmethod
    def logp(mu, sigma, y):
        return normal_logp(mu, sigma, y)

    @staticmethod
    def logps(mu, sigma, ys):
        return normal_logps(mu, sigma, ys)


class _Expon:
    """Exponential distribution with rate lambda; ``observe`` takes
    ``[lambda, y...]``."""

    def observe(self, x):
        lam, y = x[0], x[1:]
        if len(y) == 0:
            raise ValueError("exponential observe needs at least one observation")
        if len(y) == 1:
            return self.logp(lam, y[0])
        return self.logps(lam, y)

    @staticmethod
    def logp(lam, y):
        return expon_logp(lam, y)

    @staticmethod
    def logps(lam, ys):
        return expon_logps(lam, ys)


Normal = _Normal()
Expon = _Expon()


class Dirichlet:
    """Dirichlet distribution on the ``n``-simplex.

    ``observe`` takes ``[alpha_1..alpha_n, theta_1 (n entries), ...]``.
    The log-normalizer is included.
    """

    def __init__(self, n):
        self.n = n

    def __repr__(self):
        return f"Dirichlet({self.n})"

    def observe(self, x):
        n = self.n
        alpha = x[:n]
        rest = x[n:]
        if len(rest) == 0 or len(rest) % n:
            raise ValueError(
                f"expected a positive multiple of {n} simplex entries after "
                f"alpha, got {len(rest)}")
        thetas = [rest[i:i + n] for i in range(0, len(rest), n)]
        return self.logps(alpha, thetas)

    def _check(self, alpha, theta):
        if len(alpha) != self.n or len(theta) != self.n:
            raise ValueError(
                f"Dirichlet({self.n}) got alpha of length {len(alpha)} and "
                f"theta of length {len(theta)}")
        total = 0.0
        for t in theta:
            t = value_of(t)
            if not t > 0.0:
                raise SimplexError(f"simplex entry {t!r} is not positive")
            total += t
        if abs(total - 1.0) > 1e-9:
            raise SimplexError(f"simplex entries sum to {total!r}, not 1")

    def logp(self, alpha, theta):
        self._check(alpha, theta)
        ll = lgamma(tsum(alpha)) - tsum([lgamma(a) for a in alpha])
        return ll + tsum([(a - 1.0) * log(t) for a, t in zip(alpha, theta)])

    def logps(self, alpha, thetas):
        return tsum([self.logp(alpha, theta) for theta in thetas])


def dirichlet_logps(alpha, thetas):
    return Dirichlet(len(alpha)).logps(alpha, thetas)


def _lse(vals):
    m = max(vals)
    if m == math.inf or m == -math.inf:
        return m
    s = 0.0
    for v in vals:
        s += math.exp(v - m)
    # a nan input propagates through s
    return m + math.log(s)


def log_sum_exp(xs):
    """``max(xs) + log(sum(exp(xs - max)))``, recorded as one operation.

    The partial with respect to each input is its softmax weight.
    """
    if len(xs) == 0:
        raise ValueError("log_sum_exp of an empty vector")
    tape = None
    idx = []
    vals = []
    for x in xs:
        if type(x) is Tracked:
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise TapeError("operands belong to different tapes")
            idx.append(x.index)
            vals.append(x.value)
        else:
            vals.append(float(x))
            idx.append(-1)
    if tape is None:
        return _lse(vals)
    value = _lse(vals)
    exp_ = math.exp
    if value != value or value == math.inf:
        partials = [math.nan] * len(vals)
    else:
        partials = [exp_(v - value) for v in vals]
    if -1 in idx:
        pairs = [(i, d) for i, d in zip(idx, partials) if i >= 0]
        idx = [i for i, _ in pairs]
        partials = [d for _, d in pairs]
    return tape.push("log_sum_exp", value, idx, partials)


def softmax(xs, out):
    """Write ``exp(xs - max) / sum(exp(xs - max))`` into ``out``."""
    if len(out) != len(xs):
        raise ValueError(
            f"softmax output has length {len(out)}, input has {len(xs)}")
    if len(xs) == 0:
        return
    m = max(value_of(x) for x in xs)
    if any(type(x) is Tracked for x in xs):
        e = [exp(x - m) for x in xs]
    else:
        e = [math.exp(x - m) for x in xs]
    s = tsum(e)
    for i, ei in enumerate(e):
        out[i] = ei / s
