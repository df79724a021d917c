"""Hamiltonian Monte Carlo samplers delivering samples through a stream.

Sampling runs in a background thread and writes parameter vectors to a
bounded :class:`SampleStream`; the caller takes as many samples as it needs
and then stops the sampler::

    hmc = HMC(eps=0.1, steps=10, seed=1)
    stream = hmc.sample(model, x)
    for _ in range(5000):
        x = stream.take()
    hmc.stop()

Both samplers use an identity mass matrix.
"""

import logging
import math
import queue
import threading
import time
from dataclasses import dataclass

import numpy as np

from probtape.ad import Tape, gradient

__all__ = ["leapfrog", "HMC", "NUTS", "SampleStream", "StreamClosed",
           "Transition", "ChainStats", "DIVERGENCE_THRESHOLD"]

logger = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1000.0


class StreamClosed(Exception):
    """The stream was stopped or its producer finished."""


@dataclass
class ChainStats:
    proposals: int = 0
    accept_sum: float = 0.0
    divergences: int = 0

    @property
    def acceptance_rate(self):
        if self.proposals == 0:
            return math.nan
        return self.accept_sum / self.proposals


class SampleStream:
    """Bounded single-producer, single-consumer queue of samples.

    Every delivered sample is a private copy. After :meth:`stop` no further
    samples are produced and :meth:`take` raises :class:`StreamClosed`.
    """

    def __init__(self, capacity=64):
        self._queue = queue.Queue(maxsize=capacity)
        self._stop = threading.Event()
        self._done = threading.Event()
        self._thread = None
        self._error = None
        self.stats = ChainStats()

    @property
    def closed(self):
        return self._stop.is_set() or (self._done.is_set() and self._queue.empty())

    def qsize(self):
        return self._queue.qsize()

    def put(self, sample):
        """Producer side; blocks while full. Returns False once stopped."""
        while not self._stop.is_set():
            try:
                self._queue.put(sample, timeout=0.01)
                return True
            except queue.Full:
                pass
        return False

    def take(self, timeout=None):
        """Next sample; raises StreamClosed after stop or producer exit."""
        deadline = None if timeout is None else time.monotonic() + timeout
        while True:
            if self._stop.is_set():
                raise StreamClosed("stream was stopped")
            try:
                return self._queue.get(timeout=0.01)
            except queue.Empty:
                if self._error is not None:
                    raise self._error
                if self._done.is_set() and self._queue.empty():
                    raise StreamClosed("producer finished")
                if deadline is not None and time.monotonic() > deadline:
                    raise TimeoutError("no sample within timeout")

    def __iter__(self):
        while True:
            try:
                yield self.take()
            except StreamClosed:
                return

    def stop(self, timeout=5.0):
        """Halt the producer; idempotent."""
        self._stop.set()
        t = self._thread
        if t is not None and t is not threading.current_thread():
            t.join(timeout)

    @property
    def stopped(self):
        return self._stop.is_set()

    def _run(self, produce):
        try:
            produce(self)
        except Exception as e:  # surfaced to the consumer by take()
            logger.debug("sampler failed", exc_info=True)
            self._error = e
        finally:
            self._done.set()

    def _start(self, produce):
        self._thread = threading.Thread(target=self._run, args=(produce,),
                                        daemon=True)
        self._thread.start()


def _finite(ll, g):
    return math.isfinite(ll) and bool(np.all(np.isfinite(g)))


def leapfrog(model, q, p, eps, grad=None, tape=None):
    """One leapfrog step of size ``eps`` under the force grad log-likelihood.

    Returns ``(q, p, ll, grad)`` at the new position; inputs are not
    modified.
    """
    if len(q) != len(p):
        raise ValueError(f"position has length {len(q)}, momentum {len(p)}")
    if grad is None:
        grad = gradient(model, q, tape).gradient
    p = p + 0.5 * eps * grad
    q = q + eps * p
    ll, grad = gradient(model, q, tape)
    p = p + 0.5 * eps * grad
    return q, p, ll, grad


@dataclass
class Transition:
    """One HMC proposal with its end points."""

    q0: np.ndarray
    p0: np.ndarray
    ll0: float
    q1: np.ndarray
    p1: np.ndarray
    ll1: float
    grad1: np.ndarray
    accept_prob: float
    accepted: bool
    divergent: bool


class _Sampler:
    def __init__(self, seed=None, capacity=64):
        self.seed = seed
        self.capacity = capacity
        self.stream = None

    def sample(self, model, x, stream=None):
        """Start sampling from ``x`` in a background thread."""
        x = np.array(x, dtype=float)
        tape = Tape()
        ll, g = gradient(model, x, tape)
        if not _finite(ll, g):
            raise ValueError(
                f"log-likelihood of {type(model).__name__} is not finite at "
                f"the initial point ({ll})")
        if stream is None:
            stream = SampleStream(self.capacity)
        rng = np.random.default_rng(self.seed)
        self.stream = stream
        stream._start(lambda s: self._produce(s, model, x, ll, g, rng, tape))
        return stream

    def stop(self):
        if self.stream is not None:
            self.stream.stop()

    def draw(self, model, x, n):
        """Synchronously collect ``n`` samples into an ``(n, dim)`` array."""
        stream = self.sample(model, x)
        try:
            return np.array([stream.take() for _ in range(n)])
        finally:
            stream.stop()


class HMC(_Sampler):
    """Vanilla HMC with a fixed step size and number of leapfrog steps."""

    def __init__(self, eps=0.1, steps=10, seed=None, capacity=64):
        super().__init__(seed, capacity)
        if not eps > 0:
            raise ValueError("eps must be positive")
        if steps < 1:
            raise ValueError("steps must be at least 1")
        self.eps = eps
        self.steps = steps

    def transition(self, model, q, ll, grad, rng, tape=None):
        p0 = rng.standard_normal(len(q))
        h0 = -ll + 0.5 * p0.dot(p0)
        q1, p1, ll1, g1 = q, p0, ll, grad
        divergent = False
        for _ in range(self.steps):
            q1, p1, ll1, g1 = leapfrog(model, q1, p1, self.eps, g1, tape)
            if not _finite(ll1, g1):
                divergent = True
                break
        dh = -ll1 + 0.5 * p1.dot(p1) - h0
        if divergent or not math.isfinite(dh) or dh > DIVERGENCE_THRESHOLD:
            divergent = True
            prob = 0.0
        else:
            prob = math.exp(min(0.0, -dh))
        accepted = rng.random() < prob
        return Transition(q, p0, ll, q1, p1, ll1, g1, prob, accepted, divergent)

    def _produce(self, stream, model, q, ll, g, rng, tape):
        stats = stream.stats
        while not stream.stopped:
            t = self.transition(model, q, ll, g, rng, tape)
            stats.proposals += 1
            stats.accept_sum += 1.0 if t.accepted else 0.0
            stats.divergences += t.divergent
            if t.accepted:
                q, ll, g = t.q1, t.ll1, t.grad1
            if not stream.put(q.copy()):
                break


@dataclass
class _Tree:
    q_minus: np.ndarray
    p_minus: np.ndarray
    g_minus: np.ndarray
    q_plus: np.ndarray
    p_plus: np.ndarray
    g_plus: np.ndarray
    q: np.ndarray
    ll: float
    g: np.ndarray
    n: int
    s: bool
    alpha: float
    n_alpha: int
    divergent: bool


def _no_uturn(q_minus, q_plus, p_minus, p_plus):
    dq = q_plus - q_minus
    return dq.dot(p_minus) >= 0 and dq.dot(p_plus) >= 0


class NUTS(_Sampler):
    """No-U-Turn sampler (Hoffman and Gelman) with slice sampling.

    ``max_depth`` bounds the number of trajectory doublings; a depth of 0
    or 1 is a single leapfrog step. With ``adapt_steps > 0`` the step size
    is tuned by dual averaging towards ``target`` acceptance; warm-up
    iterations are not emitted.
    """

    def __init__(self, eps=0.1, max_depth=10, seed=None, adapt_steps=0,
                 target=0.8, capacity=64):
        super().__init__(seed, capacity)
        if not eps > 0:
            raise ValueError("eps must be positive")
        if max_depth < 0:
            raise ValueError("max_depth must be non-negative")
        self.eps = eps
        self.max_depth = max_depth
        self.adapt_steps = adapt_steps
        self.target = target
        # dual averaging shrinkage, as recommended by Hoffman and Gelman
        self.gamma = 0.05
        self.t0 = 10.0
        self.kappa = 0.75
        self.adapted_eps = None

    def _leaf(self, model, q, p, g, log_u, v, eps, joint0, tape):
        q1, p1, ll1, g1 = leapfrog(model, q, p, v * eps, g, tape)
        joint = ll1 - 0.5 * p1.dot(p1)
        if not (math.isfinite(joint) and np.all(np.isfinite(g1))):
            joint = -math.inf
        n = 1 if log_u <= joint else 0
        s = log_u < joint + DIVERGENCE_THRESHOLD
        alpha = math.exp(min(0.0, joint - joint0))
        return _Tree(q1, p1, g1, q1, p1, g1, q1, ll1, g1, n, s, alpha, 1,
                     not s)

    def _build(self, model, q, p, g, log_u, v, j, eps, joint0, rng, tape):
        if j == 0:
            return self._leaf(model, q, p, g, log_u, v, eps, joint0, tape)
        tree = self._build(model, q, p, g, log_u, v, j - 1, eps, joint0,
                           rng, tape)
        if not tree.s:
            return tree
        if v == -1:
            other = self._build(model, tree.q_minus, tree.p_minus,
                                tree.g_minus, log_u, v, j - 1, eps, joint0,
                                rng, tape)
            tree.q_minus, tree.p_minus, tree.g_minus = (
                other.q_minus, other.p_minus, other.g_minus)
        else:
            other = self._build(model, tree.q_plus, tree.p_plus, tree.g_plus,
                                log_u, v, j - 1, eps, joint0, rng, tape)
            tree.q_plus, tree.p_plus, tree.g_plus = (
                other.q_plus, other.p_plus, other.g_plus)
        total = tree.n + other.n
        if other.n > 0 and rng.random() < other.n / total:
            tree.q, tree.ll, tree.g = other.q, other.ll, other.g
        tree.alpha += other.alpha
        tree.n_alpha += other.n_alpha
        tree.divergent = tree.divergent or other.divergent
        tree.s = other.s and _no_uturn(tree.q_minus, tree.q_plus,
                                       tree.p_minus, tree.p_plus)
        tree.n = total
        return tree

    def transition(self, model, q, ll, g, eps, rng, tape=None):
        """One NUTS iteration; returns ``(q, ll, grad, accept_stat, divergent)``."""
        p0 = rng.standard_normal(len(q))
        joint0 = ll - 0.5 * p0.dot(p0)
        log_u = joint0 + math.log1p(-rng.random())
        q_minus = q_plus = q
        p_minus = p_plus = p0
        g_minus = g_plus = g
        q_new, ll_new, g_new = q, ll, g
        n = 1
        s = True
        j = 0
        alpha = 0.0
        n_alpha = 0
        divergent = False
        depth = max(self.max_depth, 1)
        while s and j < depth:
            v = -1 if rng.random() < 0.5 else 1
            if v == -1:
                tree = self._build(model, q_minus, p_minus, g_minus, log_u,
                                   v, j, eps, joint0, rng, tape)
                q_minus, p_minus, g_minus = tree.q_minus, tree.p_minus, tree.g_minus
            else:
                tree = self._build(model, q_plus, p_plus, g_plus, log_u, v,
                                   j, eps, joint0, rng, tape)
                q_plus, p_plus, g_plus = tree.q_plus, tree.p_plus, tree.g_plus
            alpha += tree.alpha
            n_alpha += tree.n_alpha
            divergent = divergent or tree.divergent
            if tree.s and tree.n > 0 and rng.random() < tree.n / n:
                q_new, ll_new, g_new = tree.q, tree.ll, tree.g
            n += tree.n
            s = tree.s and _no_uturn(q_minus, q_plus, p_minus, p_plus)
            j += 1
        return q_new, ll_new, g_new, alpha / n_alpha, divergent

    def find_reasonable_eps(self, model, q, ll, g, rng, tape=None):
        """Heuristic initial step size: double or halve until the one-step
        acceptance probability crosses 1/2."""
        eps = self.eps
        p = rng.standard_normal(len(q))
        joint0 = ll - 0.5 * p.dot(p)

        def log_ratio(eps):
            _, p1, ll1, _ = leapfrog(model, q, p, eps, g, tape)
            r = ll1 - 0.5 * p1.dot(p1) - joint0
            return r if math.isfinite(r) else -math.inf

        a = 1.0 if log_ratio(eps) > math.log(0.5) else -1.0
        for _ in range(100):
            r = log_ratio(eps)
            if not a * r > -a * math.log(2.0):
                break
            eps *= 2.0 ** a
        return eps

    def _produce(self, stream, model, q, ll, g, rng, tape):
        eps = self.eps
        if self.adapt_steps > 0:
            eps = self.find_reasonable_eps(model, q, ll, g, rng, tape)
            mu = math.log(10.0 * eps)
            h_bar = 0.0
            log_eps_bar = 0.0
            for m in range(1, self.adapt_steps + 1):
                if stream.stopped:
                    return
                q, ll, g, stat, _ = self.transition(model, q, ll, g, eps, rng, tape)
                w = 1.0 / (m + self.t0)
                h_bar = (1.0 - w) * h_bar + w * (self.target - stat)
                log_eps = mu - math.sqrt(m) / self.gamma * h_bar
                eta = m ** -self.kappa
                log_eps_bar = eta * log_eps + (1.0 - eta) * log_eps_bar
                eps = math.exp(log_eps)
            eps = math.exp(log_eps_bar)
        self.adapted_eps = eps
        stats = stream.stats
        while not stream.stopped:
            q, ll, g, stat, divergent = self.transition(model, q, ll, g, eps,
                                                        rng, tape)
            stats.proposals += 1
            stats.accept_sum += stat
            stats.divergences += divergent
            if not stream.put(q.copy()):
                break
