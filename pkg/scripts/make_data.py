"""Regenerate the bundled data sets in src/probtape/data/."""

import json
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "probtape" / "data"


def lda(rng, K=2, V=5, M=25, N=262):
    alpha = [1.0 / K] * K
    beta = [1.0 / V] * V
    phi = rng.dirichlet(beta, size=K)
    theta = rng.dirichlet(alpha, size=M)
    # split N word instances across M documents, at least one each
    lengths = 1 + rng.multinomial(N - M, [1.0 / M] * M)
    word, doc = [], []
    for m, n in enumerate(lengths):
        for _ in range(n):
            z = rng.choice(K, p=theta[m])
            word.append(int(rng.choice(V, p=phi[z])) + 1)
            doc.append(m + 1)
    return {"K": K, "V": V, "M": M, "N": N, "word": word, "doc": doc,
            "alpha": alpha, "beta": beta}


def gmm(rng, n=100):
    z = rng.random(n) < 0.4
    y = np.where(z, rng.normal(-1.5, 0.5, n), rng.normal(1.0, 0.7, n))
    return {"ncomp": 2, "data": [round(float(v), 4) for v in y]}


def lr(rng, n=100):
    x = rng.uniform(-1.0, 1.0, n)
    y = 3.0 + 2.0 * x + rng.normal(0.0, 0.1, n)
    return {"data": [[round(float(a), 4), round(float(b), 4)] for a, b in zip(x, y)]}


def main():
    rng = np.random.default_rng(20190101)
    OUT.mkdir(parents=True, exist_ok=True)
    sets = {
        "example.json": {"data": [-0.854, 1.067, -1.220, 0.818, -0.749,
                                  0.805, 1.443, 1.069, 1.426, 0.308]},
        "schools.json": {"J": 8,
                         "y": [28, 8, -3, 7, -1, 1, 18, 12],
                         "sigma": [15, 10, 16, 11, 9, 11, 10, 18]},
        "lda.json": lda(rng),
        "gmm.json": gmm(rng),
        "lr.json": lr(rng),
    }
    for name, obj in sets.items():
        (OUT / name).write_text(json.dumps(obj) + "\n")


if __name__ == "__main__":
    main()
