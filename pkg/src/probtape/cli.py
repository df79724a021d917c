"""Command-line driver: load a model's data, run inference, write samples.

Example::

    probtape run example --algo adam --rate 0.01 --iterations 1000
    probtape run schools --algo hmc --eps 0.1 --leapfrog 10 \\
        --iterations 1000 --out samples.csv

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

import argparse
import csv
import json
import logging
import math
import pathlib
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from probtape.mcmc import HMC, NUTS
from probtape.models import GMModel, LDAModel, LRModel, SchoolsModel, ExampleModel
from probtape.optimize import Adam, MomentumSGD, NonFiniteGradient

logger = logging.getLogger(__name__)

MODELS = ("example", "schools", "lr", "gmm", "lda")
ALGOS = ("adam", "sgd", "hmc", "nuts")
FORMATS = ("csv", "jsonl")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(ValueError):
    pass


class DataError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


@dataclass
class RunConfig:
    model: str
    algo: str
    iterations: int
    data: str = None
    rate: float = None
    decay: float = 0.0
    eps: float = 0.1
    leapfrog: int = 10
    max_depth: int = 10
    seed: int = 0
    out: str = None
    format: str = "csv"
    ncomp: int = 2

    def validate(self):
        if self.model not in MODELS:
            raise UsageError(
                f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.algo not in ALGOS:
            raise UsageError(
                f"unknown algorithm {self.algo!r}; choose from {', '.join(ALGOS)}")
        if self.format not in FORMATS:
            raise UsageError(
                f"unknown format {self.format!r}; choose from {', '.join(FORMATS)}")
        if self.iterations < 1:
            raise UsageError("--iterations must be at least 1")
        if self.algo in ("adam", "sgd"):
            if self.rate is not None and not self.rate > 0:
                raise UsageError("--rate must be positive")
            if self.algo == "sgd" and not 0 <= self.decay < 1:
                raise UsageError("--decay must be in [0, 1)")
        else:
            if not self.eps > 0:
                raise UsageError("--eps must be positive")
            if self.algo == "hmc" and self.leapfrog < 1:
                raise UsageError("--leapfrog must be at least 1")
            if self.algo == "nuts" and self.max_depth < 0:
                raise UsageError("--max-depth must be non-negative")
        if self.ncomp < 1:
            raise UsageError("--ncomp must be at least 1")


@dataclass
class RunSummary:
    model: str
    algo: str
    dim: int
    mean: list = None
    std: list = None
    estimate: list = None
    objective: float = None
    acceptance_rate: float = None
    divergences: int = None
    seconds: float = 0.0
    samples: int = 0
    extra: dict = field(default_factory=dict)


# Data loading ---------------------------------------------------------------

def _read_json(path):
    text = pathlib.Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None


def _read_numbers(path, per_line):
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != per_line:
                raise DataError(
                    f"{path}:{lineno}: expected {per_line} number(s), got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise DataError(f"{path}:{lineno}: not a number: {line!r}") from None
    return rows


def _is_json(path):
    if str(path).endswith(".json"):
        return True
    with open(path) as f:
        head = f.read(64).lstrip()
    return head.startswith("{")


def _fields(obj, path, names):
    if not isinstance(obj, dict):
        raise DataError(f"{path}: expected a JSON object with fields {', '.join(names)}")
    missing = [n for n in names if n not in obj]
    if missing:
        raise DataError(
            f"{path}: missing field(s) {', '.join(missing)}; expected "
            f"{', '.join(names)}")
    return [obj[n] for n in names]


def bundled_data(model_name):
    """Path of the data set shipped for ``model_name``."""
    return resources.files("probtape") / "data" / f"{model_name}.json"


def load_data(model_name, path=None, ncomp=2):
    """Build the named model from a data file (bundled data by default)."""
    if model_name not in MODELS:
        raise UsageError(
            f"unknown model {model_name!r}; choose from {', '.join(MODELS)}")
    if path is None:
        path = bundled_data(model_name)
    if not pathlib.Path(path).exists():
        raise DataError(f"{path}: no such file")
    try:
        return _build(model_name, path, ncomp)
    except DataError:
        raise
    except (ValueError, TypeError) as e:
        raise DataError(f"{path}: {e}") from None


def _build(name, path, ncomp):
    as_json = _is_json(path)
    if name in ("example", "gmm"):
        if as_json:
            obj = _read_json(path)
            (data,) = _fields(obj, path, ["data"])
            ncomp = obj.get("ncomp", ncomp) if name == "gmm" else ncomp
        else:
            data = [r[0] for r in _read_numbers(path, 1)]
        if len(data) == 0:
            raise DataError(f"{path}: at least one observation is required")
        if name == "example":
            return ExampleModel(data)
        return GMModel(data, int(ncomp))
    if name == "lr":
        if as_json:
            (data,) = _fields(_read_json(path), path, ["data"])
        else:
            data = _read_numbers(path, 2)
        if len(data) == 0:
            raise DataError(f"{path}: at least one (x, y) pair is required")
        if any(len(row) != 2 for row in data):
            raise DataError(f"{path}: every data row must be an [x, y] pair")
        return LRModel(data)
    if not as_json:
        raise DataError(f"{path}: {name} data must be a JSON object")
    obj = _read_json(path)
    if name == "schools":
        J, y, sigma = _fields(obj, path, ["J", "y", "sigma"])
        if len(y) != J or len(sigma) != J:
            raise DataError(f"{path}: y and sigma must have J={J} entries")
        return SchoolsModel(y, sigma)
    K, V, M, N, word, doc, alpha, beta = _fields(
        obj, path, ["K", "V", "M", "N", "word", "doc", "alpha", "beta"])
    if len(word) != N or len(doc) != N:
        raise DataError(f"{path}: word and doc must have N={N} entries")
    return LDAModel(K, V, M, word, doc, alpha, beta)


def initial_point(model):
    """Zeros, except mixture means spread apart to break label symmetry."""
    x = np.zeros(model.dim)
    if isinstance(model, GMModel):
        k = model.ncomp
        for j in range(k):
            x[2 * j] = j - (k - 1) / 2.0
    return x


# Output ---------------------------------------------------------------------

class _Writer:
    def __init__(self, path, fmt, dim):
        self.fmt = fmt
        self.dim = dim
        self.f = open(path, "w", newline="") if path else None
        if self.f is not None and fmt == "csv":
            self.csv = csv.writer(self.f, lineterminator="\n")
            self.csv.writerow([f"p{i}" for i in range(dim)] + ["ll"])

    def write(self, x, ll):
        if self.f is None:
            return
        vals = [float(v) for v in x] + [float(ll)]
        if self.fmt == "csv":
            self.csv.writerow([repr(v) for v in vals])
        else:
            obj = {f"p{i}": v for i, v in enumerate(vals[:-1])}
            obj["ll"] = vals[-1]
            self.f.write(json.dumps(obj) + "\n")

    def close(self):
        if self.f is not None:
            self.f.close()


def read_samples(path, fmt="csv"):
    """Read an output file back as an ``(n, dim + 1)`` array, ll last."""
    rows = []
    with open(path) as f:
        if fmt == "csv":
            reader = csv.reader(f)
            next(reader)
            rows = [[float(v) for v in row] for row in reader]
        else:
            for line in f:
                obj = json.loads(line)
                rows.append(list(obj.values()))
    return np.array(rows, dtype=float)


# Running --------------------------------------------------------------------

def run(config):
    config.validate()
    model = load_data(config.model, config.data, config.ncomp)
    x = initial_point(model)
    ll0 = model.observe(x.tolist())
    if not math.isfinite(ll0):
        raise NumericError(
            f"log-likelihood of model {config.model!r} is not finite at the "
            f"initial point")
    writer = _Writer(config.out, config.format, model.dim)
    start = time.perf_counter()
    try:
        if config.algo in ("adam", "sgd"):
            summary = _run_map(config, model, x, writer)
        else:
            summary = _run_mcmc(config, model, x, writer)
    finally:
        writer.close()
    summary.seconds = time.perf_counter() - start
    return summary


def _run_map(config, model, x, writer):
    if config.algo == "adam":
        opt = Adam(rate=config.rate if config.rate is not None else 0.01)
    else:
        opt = MomentumSGD(rate=config.rate if config.rate is not None else 0.01,
                          decay=config.decay)
    try:
        for _ in range(config.iterations):
            opt.step(model, x)
    except NonFiniteGradient as e:
        raise NumericError(f"model {config.model!r}: {e}") from None
    ll = model.observe(x.tolist())
    if not math.isfinite(ll):
        raise NumericError(f"model {config.model!r}: objective became non-finite")
    writer.write(x, ll)
    return RunSummary(config.model, config.algo, model.dim,
                      estimate=[float(v) for v in x], objective=float(ll),
                      samples=config.iterations)


def _run_mcmc(config, model, x, writer):
    if config.algo == "hmc":
        sampler = HMC(eps=config.eps, steps=config.leapfrog, seed=config.seed)
    else:
        sampler = NUTS(eps=config.eps, max_depth=config.max_depth,
                       seed=config.seed, adapt_steps=config.iterations // 10)
    samples = np.empty((config.iterations, model.dim))
    stream = sampler.sample(model, x)
    try:
        for i in range(config.iterations):
            q = stream.take()
            ll = model.observe(q.tolist())
            if not (math.isfinite(ll) and np.all(np.isfinite(q))):
                raise NumericError(
                    f"model {config.model!r}: non-finite sample at iteration {i}")
            samples[i] = q
            writer.write(q, ll)
    finally:
        stream.stop()
    stats = stream.stats
    summary = RunSummary(config.model, config.algo, model.dim,
                         mean=samples.mean(axis=0).tolist(),
                         std=samples.std(axis=0, ddof=1).tolist()
                         if config.iterations > 1 else [0.0] * model.dim,
                         acceptance_rate=stats.acceptance_rate,
                         divergences=stats.divergences,
                         samples=config.iterations)
    if config.algo == "nuts":
        summary.extra["eps"] = sampler.adapted_eps
    return summary


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="probtape", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run inference on a bundled model")
    r.add_argument("model_pos", nargs="?", metavar="MODEL",
                   help=f"one of {', '.join(MODELS)}")
    r.add_argument("--model", dest="model_opt")
    r.add_argument("--data", help="data file (default: bundled data set)")
    r.add_argument("--algo", required=True)
    r.add_argument("--iterations", type=int, default=1000)
    r.add_argument("--rate", type=float)
    r.add_argument("--decay", type=float, default=0.0)
    r.add_argument("--eps", type=float, default=0.1)
    r.add_argument("--leapfrog", type=int, default=10)
    r.add_argument("--max-depth", type=int, default=10)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--ncomp", type=int, default=2,
                   help="mixture components for gmm text data")
    r.add_argument("--out", help="sample/estimate output file")
    r.add_argument("--format", default="csv")
    sub.add_parser("models", help="list available models")
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "models":
        print("\n".join(MODELS))
        return EXIT_OK
    if args.model_pos and args.model_opt and args.model_pos != args.model_opt:
        parser.error("model given twice with different values")
    model = args.model_opt or args.model_pos
    if model is None:
        parser.error(f"a model is required; choose from {', '.join(MODELS)}")
    config = RunConfig(model=model, algo=args.algo, iterations=args.iterations,
                       data=args.data, rate=args.rate, decay=args.decay,
                       eps=args.eps, leapfrog=args.leapfrog,
                       max_depth=args.max_depth, seed=args.seed, out=args.out,
                       format=args.format, ncomp=args.ncomp)
    try:
        summary = run(config)
    except UsageError as e:
        print(f"probtape: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as e:
        print(f"probtape: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as e:
        print(f"probtape: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(asdict(summary), indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
