import json

import numpy as np
import pytest

from probtape.cli import bundled_data
from probtape.models import (EXAMPLE_DATA, ExampleModel, GMModel, LDAModel,
                             LRModel, SchoolsModel, StreamingModel, ReplaySource)


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of ``f`` at ``x``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(list(xp)) - f(list(xm))) / (2 * h)
    return g


def grad_close(g, fd, rtol=1e-5, atol=1e-7):
    """Elementwise relative agreement, absolute near zero."""
    g = np.asarray(g)
    fd = np.asarray(fd)
    err = np.abs(g - fd)
    scale = np.maximum(np.abs(g), np.abs(fd))
    return bool(np.all((err <= rtol * scale) | (err <= atol)))


class Quadratic:
    """observe(x) = -x0^2 / 2."""

    dim = 1

    def observe(self, x):
        return -0.5 * x[0] * x[0]


class StdNormal:
    """Independent standard normal target in ``dim`` dimensions."""

    def __init__(self, dim=1):
        self.dim = dim

    def observe(self, x):
        ll = 0.0
        for v in x:
            ll = ll - 0.5 * v * v
        return ll


def load_json(name):
    return json.loads(bundled_data(name).read_text())


@pytest.fixture
def example_model():
    return ExampleModel(EXAMPLE_DATA)


@pytest.fixture(scope="session")
def lda_model():
    d = load_json("lda")
    return LDAModel(d["K"], d["V"], d["M"], d["word"], d["doc"], d["alpha"], d["beta"])


def all_example_models():
    """(name, model, point sampler) for every shipped example model."""
    schools = load_json("schools")
    gmm = load_json("gmm")
    lr = load_json("lr")
    d = load_json("lda")
    # small LDA keeps finite-difference checks quick
    small_lda = LDAModel(2, 5, 4, d["word"][:30],
                         [1 + (i % 4) for i in range(30)], d["alpha"], d["beta"])
    return [
        ("example", ExampleModel(EXAMPLE_DATA)),
        ("streaming", StreamingModel(ReplaySource(EXAMPLE_DATA), 10)),
        ("schools", SchoolsModel(schools["y"], schools["sigma"])),
        ("lr", LRModel(lr["data"])),
        ("gmm", GMModel(gmm["data"], 2)),
        ("lda", small_lda),
    ]
