"""The model contract and helpers around it.

A model is any object with ``observe(x) -> float`` returning the
unnormalized log posterior density of the parameter vector ``x`` in nats.
Models declare their parameter count in ``dim``. Parameters are
unconstrained reals: positive quantities enter through ``exp`` and simplices
through ``softmax``, and no Jacobian correction is added for these
transformations.
"""

from probtape.ad import gradient

__all__ = ["Model", "Product", "compose_product", "func_grad", "ParamCursor",
           "DimensionError", "check_dim"]


class DimensionError(ValueError):
    """A parameter vector does not have the length a model expects."""


def check_dim(model, x):
    dim = getattr(model, "dim", None)
    if dim is not None and len(x) != dim:
        raise DimensionError(
            f"{type(model).__name__} expects {dim} parameters, got {len(x)}")


class Model:
    """Base class for models; subclasses implement :meth:`observe`."""

    dim = None

    def observe(self, x):
        raise NotImplementedError


class Product(Model):
    """Product of two independent models over adjacent parameter slices."""

    def __init__(self, a, b):
        if a.dim is None or b.dim is None:
            raise ValueError("both models must declare their dimension")
        self.a = a
        self.b = b
        self.dim = a.dim + b.dim

    def observe(self, x):
        check_dim(self, x)
        k = self.a.dim
        return self.a.observe(x[:k]) + self.b.observe(x[k:])


def compose_product(a, b):
    return Product(a, b)


def func_grad(model):
    """Return ``(objective, grad)`` closures for third-party optimizers.

    ``objective(x)`` is ``model.observe(x)``; ``grad(out, x)`` writes the
    gradient into ``out``. Minimizers should negate both.
    """

    def objective(x):
        return model.observe([float(v) for v in x])

    def grad(out, x):
        if len(out) != len(x):
            raise DimensionError(
                f"gradient buffer has length {len(out)}, parameters {len(x)}")
        g = gradient(model, x).gradient
        for i in range(len(g)):
            out[i] = g[i]

    return objective, grad


class ParamCursor:
    """Consumes a flat parameter vector block by block."""

    def __init__(self, x):
        self._x = x
        self.consumed = 0

    @property
    def remaining(self):
        return len(self._x) - self.consumed

    def take(self, k):
        if k < 0:
            raise ValueError(f"cannot take {k} parameters")
        if k > self.remaining:
            raise IndexError(
                f"requested {k} parameters but only {self.remaining} remain")
        start = self.consumed
        self.consumed += k
        return self._x[start:self.consumed]
