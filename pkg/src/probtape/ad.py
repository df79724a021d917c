"""Reverse-mode automatic differentiation on an operation tape.

Model code is written once against ordinary arithmetic. Called with plain
floats it runs at full speed and records nothing; called with
:class:`Tracked` scalars every arithmetic operation and elemental call is
appended to the owning :class:`Tape`, and a single backward sweep yields the
gradient of the result with respect to all parameters.
"""

import functools
import math
import threading
from collections import namedtuple

import numpy as np

__all__ = [
    "Tape",
    "Tracked",
    "TapeError",
    "ElementalError",
    "GradientResult",
    "register_elemental",
    "call_elemental",
    "elemental",
    "is_tracked",
    "value_of",
    "tsum",
    "gradient",
    "current_tape",
]


class TapeError(RuntimeError):
    """Operands recorded on different tapes were combined."""


class ElementalError(RuntimeError):
    """A non-arithmetic function was applied to a tracked scalar without a
    registered gradient."""


GradientResult = namedtuple("GradientResult", ["value", "gradient"])


def _div(a, b):
    # IEEE semantics instead of ZeroDivisionError
    try:
        return a / b
    except ZeroDivisionError:
        if a != a or a == 0.0:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)


class Tape:
    """Append-only record of scalar operations.

    Record ``i`` holds an operation kind, the indices of its operands (all
    smaller than ``i``), the local partial derivatives with respect to those
    operands, and the resulting value. :meth:`backward` fills ``adjoints``.
    """

    __slots__ = ("kinds", "args", "partials", "values", "adjoints")

    def __init__(self):
        self.kinds = []
        self.args = []
        self.partials = []
        self.values = []
        self.adjoints = []

    def __len__(self):
        return len(self.values)

    def clear(self):
        del self.kinds[:]
        del self.args[:]
        del self.partials[:]
        del self.values[:]
        del self.adjoints[:]

    def push(self, kind, value, args, partials):
        # Tracked.__add__ and __mul__ inline this body
        i = len(self.values)
        self.kinds.append(kind)
        self.args.append(args)
        self.partials.append(partials)
        self.values.append(value)
        return Tracked(value, i, self)

    def variable(self, value):
        """Record an independent variable (a leaf with no operands)."""
        return self.push("var", float(value), (), ())

    def constant(self, value):
        return self.push("const", float(value), (), ())

    def backward(self, out):
        """Propagate adjoints from ``out`` to every earlier record."""
        if out.tape is not self:
            raise TapeError("result was recorded on a different tape")
        adj = [0.0] * len(self.values)
        adj[out.index] = 1.0
        args = self.args
        partials = self.partials
        for i in range(out.index, -1, -1):
            a = adj[i]
            if a:
                for j, d in zip(args[i], partials[i]):
                    adj[j] += a * d
        self.adjoints = adj
        return adj


class Tracked:
    """A real value participating in tape recording."""

    __slots__ = ("value", "index", "tape")
    # make numpy scalars defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, value, index, tape):
        self.value = value
        self.index = index
        self.tape = tape

    def __repr__(self):
        return f"Tracked({self.value!r}, index={self.index})"

    def __float__(self):
        raise ElementalError(
            "a tracked scalar was converted to float; use a registered "
            "elemental instead of a plain math function")

    def __add__(self, other):
        tape = self.tape
        if type(other) is Tracked:
            if other.tape is not tape:
                raise TapeError("operands belong to different tapes")
            v = self.value + other.value
            args = (self.index, other.index)
            partials = (1.0, 1.0)
        else:
            try:
                v = self.value + float(other)
            except TypeError:
                return NotImplemented
            args = (self.index,)
            partials = (1.0,)
        # inlined Tape.push
        values = tape.values
        i = len(values)
        tape.kinds.append("add")
        tape.args.append(args)
        tape.partials.append(partials)
        values.append(v)
        return Tracked(v, i, tape)

    __radd__ = __add__

    def __sub__(self, other):
        if type(other) is Tracked:
            if other.tape is not self.tape:
                raise TapeError("operands belong to different tapes")
            return self.tape.push("sub", self.value - other.value,
                                  (self.index, other.index), (1.0, -1.0))
        try:
            c = float(other)
        except TypeError:
            return NotImplemented
        return self.tape.push("sub", self.value - c, (self.index,), (1.0,))

    def __rsub__(self, other):
        try:
            c = float(other)
        except TypeError:
            return NotImplemented
        return self.tape.push("sub", c - self.value, (self.index,), (-1.0,))

    def __mul__(self, other):
        tape = self.tape
        if type(other) is Tracked:
            if other.tape is not tape:
                raise TapeError("operands belong to different tapes")
            a = self.value
            b = other.value
            v = a * b
            args = (self.index, other.index)
            partials = (b, a)
        else:
            try:
                c = float(other)
            except TypeError:
                return NotImplemented
            v = self.value * c
            args = (self.index,)
            partials = (c,)
        values = tape.values
        i = len(values)
        tape.kinds.append("mul")
        tape.args.append(args)
        tape.partials.append(partials)
        values.append(v)
        return Tracked(v, i, tape)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if type(other) is Tracked:
            if other.tape is not self.tape:
                raise TapeError("operands belong to different tapes")
            b = other.value
            v = _div(self.value, b)
            return self.tape.push("div", v, (self.index, other.index),
                                  (_div(1.0, b), -_div(v, b)))
        try:
            c = float(other)
        except TypeError:
            return NotImplemented
        return self.tape.push("div", _div(self.value, c), (self.index,),
                              (_div(1.0, c),))

    def __rtruediv__(self, other):
        try:
            c = float(other)
        except TypeError:
            return NotImplemented
        b = self.value
        v = _div(c, b)
        return self.tape.push("div", v, (self.index,), (-_div(v, b),))

    def __neg__(self):
        return self.tape.push("neg", -self.value, (self.index,), (-1.0,))

    def __pos__(self):
        return self

    def __abs__(self):
        s = 1.0 if self.value >= 0 else -1.0
        return self.tape.push("abs", abs(self.value), (self.index,), (s,))

    def __pow__(self, other):
        from probtape.fmath import pow as _pow
        return _pow(self, other)

    def __rpow__(self, other):
        from probtape.fmath import pow as _pow
        return _pow(other, self)

    # comparisons look at values only; control flow is not differentiated
    def __lt__(self, other):
        return self.value < value_of(other)

    def __le__(self, other):
        return self.value <= value_of(other)

    def __gt__(self, other):
        return self.value > value_of(other)

    def __ge__(self, other):
        return self.value >= value_of(other)


def is_tracked(x):
    return type(x) is Tracked


def value_of(x):
    """The plain value of ``x`` whether or not it is tracked."""
    return x.value if type(x) is Tracked else x


def tsum(xs):
    """Sum in sequence order, recorded as a single n-ary operation.

    The value is bitwise identical to ``0.0 + xs[0] + xs[1] + ...``.
    """
    total = 0.0
    tape = None
    idx = []
    for x in xs:
        if type(x) is Tracked:
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise TapeError("operands belong to different tapes")
            idx.append(x.index)
            total += x.value
        else:
            total += x
    if tape is None:
        return total
    return tape.push("sum", total, tuple(idx), (1.0,) * len(idx))


# Elementals ----------------------------------------------------------------

_registry = {}
_registry_lock = threading.Lock()


def _key(f):
    return getattr(f, "__wrapped__", f)


def register_elemental(f, g):
    """Register ``g(value, *args) -> partials`` as the gradient of ``f``.

    ``f`` takes one or more scalar arguments and returns a scalar. Registering
    the same function again replaces the previous gradient.
    """
    with _registry_lock:
        _registry[_key(f)] = g


def lookup_elemental(f):
    return _registry.get(_key(f))


def _record(f, args):
    tape = None
    vals = []
    for a in args:
        if type(a) is Tracked:
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise TapeError("operands belong to different tapes")
            vals.append(a.value)
        else:
            vals.append(float(a))
    fn = _key(f)
    g = _registry.get(fn)
    if g is None:
        raise ElementalError(
            f"no gradient registered for elemental "
            f"{getattr(fn, '__qualname__', fn)!r}")
    v = fn(*vals)
    d = g(v, *vals)
    if len(d) != len(vals):
        raise ElementalError(
            f"gradient of {getattr(fn, '__qualname__', fn)!r} returned "
            f"{len(d)} partials for {len(vals)} arguments")
    if len(vals) == 1:
        return tape.push(fn.__name__, v, (args[0].index,), (d[0],))
    idx = []
    part = []
    for a, p in zip(args, d):
        if type(a) is Tracked:
            idx.append(a.index)
            part.append(p)
    return tape.push(fn.__name__, v, tuple(idx), tuple(part))


def call_elemental(f, *args):
    """Apply elemental ``f``; records one tape entry when any arg is tracked."""
    for a in args:
        if type(a) is Tracked:
            return _record(f, args)
    return _key(f)(*args)


def elemental(fn):
    """Decorate a scalar function so that calls on tracked arguments go
    through the elemental registry.

    The gradient is registered separately with :func:`register_elemental`;
    calling the function on a tracked scalar before registration raises
    :class:`ElementalError`.
    """
    registry = _registry
    name = fn.__name__

    @functools.wraps(fn)
    def wrapper(*args):
        if len(args) == 1:
            a = args[0]
            if type(a) is not Tracked:
                return fn(a)
            g = registry.get(fn)
            if g is None:
                return _record(fn, args)  # raises
            v = fn(a.value)
            d = g(v, a.value)
            if len(d) != 1:
                return _record(fn, args)  # raises
            return a.tape.push(name, v, (a.index,), (d[0],))
        for a in args:
            if type(a) is Tracked:
                return _record(fn, args)
        return fn(*args)
    return wrapper


# Gradients of models -------------------------------------------------------

_local = threading.local()


def current_tape():
    """The tape of the calling thread, created on first use."""
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = _local.tape = Tape()
    return tape


def gradient(model, params, tape=None):
    """Value and gradient of ``model.observe`` at ``params``.

    Runs one recording forward pass and one backward sweep. The tape is
    cleared afterwards so repeated calls do not accumulate records.
    """
    if tape is None:
        tape = current_tape()
    n = len(params)
    if n == 0:
        raise ValueError("parameter vector is empty")
    tape.clear()
    try:
        xs = [tape.variable(p) for p in params]
        out = model.observe(xs)
        grad = np.zeros(n)
        if type(out) is Tracked:
            adj = tape.backward(out)
            for i in range(n):
                grad[i] = adj[i]
            value = out.value
        else:
            value = float(out)
    finally:
        tape.clear()
    return GradientResult(value, grad)
