"""Scalar math functions usable from model code.

Each function works on plain floats and on tracked scalars. Gradients are
pre-registered for ``sqrt``, ``exp``, ``log``, ``pow``, ``sin``, ``cos``,
``tan`` and ``lgamma``, and for the auxiliary ``logsumexp`` (binary) and
``sigm``. Results follow IEEE conventions: domain errors and overflow give
``nan`` or ``inf`` rather than exceptions.
"""

import math

from probtape.ad import elemental, register_elemental

__all__ = ["sqrt", "exp", "log", "pow", "sin", "cos", "tan", "lgamma",
           "digamma", "logsumexp", "sigm"]

_inf = math.inf
_nan = math.nan


@elemental
def exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return _inf


@elemental
def log(x):
    if x > 0.0:
        return math.log(x)
    if x == 0.0:
        return -_inf
    return _nan


@elemental
def sqrt(x):
    if x >= 0.0:
        return math.sqrt(x)
    return _nan


@elemental
def pow(x, y):
    try:
        return math.pow(x, y)
    except OverflowError:
        return _inf
    except ValueError:
        return _nan


@elemental
def sin(x):
    try:
        return math.sin(x)
    except ValueError:
        return _nan


@elemental
def cos(x):
    try:
        return math.cos(x)
    except ValueError:
        return _nan


@elemental
def tan(x):
    try:
        return math.tan(x)
    except ValueError:
        return _nan


@elemental
def lgamma(x):
    try:
        return math.lgamma(x)
    except ValueError:
        # poles at non-positive integers
        return _inf
    except OverflowError:
        return _inf


def digamma(x):
    """Logarithmic derivative of the gamma function."""
    if x != x:
        return _nan
    if x <= 0.0:
        if x == math.floor(x):
            return _nan
        # reflection
        return digamma(1.0 - x) - math.pi / math.tan(math.pi * x)
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    f = 1.0 / (x * x)
    series = f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (
        1.0 / 240 - f * (1.0 / 132 - f * (691.0 / 32760 - f / 12.0))))))
    return acc + math.log(x) - 0.5 / x - series


@elemental
def logsumexp(x, y):
    """log(exp(x) + exp(y)) without overflow."""
    z = x
    if y > z:
        z = y
    if z == -_inf:
        return -_inf
    if z == _inf:
        return _inf
    return z + math.log(math.exp(x - z) + math.exp(y - z))


@elemental
def sigm(x):
    """Logistic sigmoid 1/(1+exp(-x))."""
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def _safe_div(a, b):
    try:
        return a / b
    except ZeroDivisionError:
        if a != a or a == 0.0:
            return _nan
        return math.copysign(_inf, a) * math.copysign(1.0, b)


def _pow_grad(value, x, y):
    dx = y * pow(x, y - 1.0)
    if x > 0.0:
        dy = value * math.log(x)
    elif x == 0.0 and y > 0.0:
        dy = 0.0
    else:
        dy = _nan
    return [dx, dy]


def _logsumexp_grad(_, x, y):
    z = exp(y - x)
    t = _safe_div(1.0, 1.0 + z)
    if z == _inf:
        return [0.0, 1.0]
    return [t, t * z]


register_elemental(exp, lambda v, _: [v])
register_elemental(log, lambda v, x: [_safe_div(1.0, x)])
register_elemental(sqrt, lambda v, x: [_safe_div(0.5, v)])
register_elemental(pow, _pow_grad)
register_elemental(sin, lambda v, x: [math.cos(x)])
register_elemental(cos, lambda v, x: [-math.sin(x)])
register_elemental(tan, lambda v, x: [1.0 + v * v])
register_elemental(lgamma, lambda v, x: [digamma(x)])
register_elemental(logsumexp, _logsumexp_grad)
register_elemental(sigm, lambda v, _: [v * (1.0 - v)])
