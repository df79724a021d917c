"""Example models: normal, streaming normal, eight schools, linear
regression, Gaussian mixture and latent Dirichlet allocation."""

from probtape.ad import tsum
from probtape.dist import Dirichlet, Normal, log_sum_exp, softmax
from probtape.fmath import exp, log, logsumexp
from probtape.model import Model, ParamCursor, check_dim

__all__ = ["ExampleModel", "StreamingModel", "ReplaySource",
           "SourceExhausted", "SchoolsModel", "LRModel", "GMModel",
           "LDAModel", "fetch_simplices", "EXAMPLE_DATA"]

EXAMPLE_DATA = [-0.854, 1.067, -1.220, 0.818, -0.749,
                0.805, 1.443, 1.069, 1.426, 0.308]


class ExampleModel(Model):
    """Unknown mean and log standard deviation of normal data.

    ``x = [mu, log sigma]`` with a unit normal prior on both.
    """

    dim = 2

    def __init__(self, data):
        if len(data) == 0:
            raise ValueError("ExampleModel needs at least one observation")
        self.data = [float(y) for y in data]

    def observe(self, x):
        check_dim(self, x)
        ll = Normal.logps(0.0, 1.0, x)
        ll += Normal.logps(x[0], exp(x[1]), self.data)
        return ll


class SourceExhausted(RuntimeError):
    """A streaming data source ran out during a batch."""


class ReplaySource:
    """Iterator cycling endlessly through a fixed list; counts pulls."""

    def __init__(self, data):
        if len(data) == 0:
            raise ValueError("cannot replay an empty data set")
        self.data = [float(y) for y in data]
        self.pulled = 0

    def __iter__(self):
        return self

    def __next__(self):
        y = self.data[self.pulled % len(self.data)]
        self.pulled += 1
        return y


class StreamingModel(Model):
    """The normal model reading ``batch`` observations per call from an
    iterator. A blocking iterator (for example ``iter(queue.get, None)``)
    makes ``observe`` wait for data."""

    dim = 2

    def __init__(self, source, batch):
        if batch < 1:
            raise ValueError("batch size must be at least 1")
        self.source = iter(source)
        self.batch = batch

    def observe(self, x):
        check_dim(self, x)
        ll = Normal.logps(0.0, 1.0, x)
        sigma = exp(x[1])
        for _ in range(self.batch):
            try:
                y = next(self.source)
            except StopIteration:
                raise SourceExhausted("data source ended during a batch") from None
            ll += Normal.logp(x[0], sigma, y)
        return ll


class SchoolsModel(Model):
    """Eight schools, non-centred: ``x = [mu, log tau, eta_1..eta_J]``.

    Only ``eta`` has a prior; ``mu`` and ``log tau`` are left with an
    improper flat prior.
    """

    def __init__(self, y, sigma):
        if len(y) != len(sigma):
            raise ValueError(f"got {len(y)} effects but {len(sigma)} standard errors")
        if len(y) == 0:
            raise ValueError("need at least one school")
        if any(not s > 0 for s in sigma):
            raise ValueError("standard errors must be positive")
        self.J = len(y)
        self.y = [float(v) for v in y]
        self.sigma = [float(s) for s in sigma]
        self.dim = 2 + self.J

    def observe(self, x):
        check_dim(self, x)
        mu = x[0]
        tau = exp(x[1])
        eta = x[2:]

        ll = Normal.logps(0.0, 1.0, eta)

        for i, y in enumerate(self.y):
            theta = mu + tau * eta[i]
            ll += Normal.logp(theta, self.sigma[i], y)
        return ll


class LRModel(Model):
    """Linear regression ``y ~ Normal(alpha + beta x, sigma)`` with
    ``x = [alpha, beta, log sigma]`` and a flat prior."""

    dim = 3

    def __init__(self, data):
        if len(data) == 0:
            raise ValueError("LRModel needs at least one (x, y) pair")
        self.data = [(float(a), float(b)) for a, b in data]

    def observe(self, x):
        check_dim(self, x)
        ll = 0.0
        alpha, beta = x[0], x[1]
        sigma = exp(x[2])
        for xi, yi in self.data:
            ll += Normal.logp(self.simulate(xi, alpha, beta), sigma, yi)
        return ll

    def simulate(self, x, alpha, beta):
        """Predicted y for input x."""
        y = alpha + beta * x
        return y


class GMModel(Model):
    """Mixture of ``ncomp`` normals with memberships summed out.

    ``x = [mu_1, log sigma_1, mu_2, log sigma_2, ...]``, unit normal prior.
    """

    def __init__(self, data, ncomp):
        if ncomp < 1:
            raise ValueError("need at least one component")
        if len(data) == 0:
            raise ValueError("GMModel needs at least one observation")
        self.data = [float(y) for y in data]
        self.ncomp = ncomp
        self.dim = 2 * ncomp

    def observe(self, x):
        check_dim(self, x)
        ll = 0.0
        ll += Normal.logps(0.0, 1.0, x)

        mu = [0.0] * self.ncomp
        sigma = [0.0] * self.ncomp
        for j in range(self.ncomp):
            mu[j] = x[2 * j]
            sigma[j] = exp(x[2 * j + 1])

        for y in self.data:
            for j in range(self.ncomp):
                lj = Normal.logp(mu[j], sigma[j], y)
                if j == 0:
                    l = lj
                else:
                    l = logsumexp(l, lj)
            ll += l
        return ll


def fetch_simplices(cursor, k, count):
    """Softmax the next ``count`` blocks of ``k`` raw parameters."""
    simplices = []
    for _ in range(count):
        row = [0.0] * k
        softmax(cursor.take(k), row)
        simplices.append(row)
    return simplices


class LDAModel(Model):
    """Latent Dirichlet allocation with ``K`` topics over ``V`` words.

    ``word`` and ``doc`` are 1-based, one entry per word instance. The
    parameters are ``M`` blocks of ``K`` then ``K`` blocks of ``V`` raw
    values, mapped to simplices by softmax.
    """

    def __init__(self, K, V, M, word, doc, alpha, beta):
        if len(word) != len(doc):
            raise ValueError(f"{len(word)} words but {len(doc)} doc indices")
        if len(alpha) != K or len(beta) != V:
            raise ValueError("alpha must have K entries and beta V entries")
        for w in word:
            if not 1 <= w <= V:
                raise ValueError(f"word index {w} outside 1..{V}")
        for d in doc:
            if not 1 <= d <= M:
                raise ValueError(f"doc index {d} outside 1..{M}")
        self.K, self.V, self.M, self.N = K, V, M, len(word)
        self.word = [int(w) for w in word]
        self.doc = [int(d) for d in doc]
        self.alpha = [float(a) for a in alpha]
        self.beta = [float(b) for b in beta]
        self.dim = M * K + K * V

    def observe(self, x):
        check_dim(self, x)
        ll = 0.0

        # regularize the raw parameters
        ll += Normal.logps(0.0, 1.0, x)
        px = ParamCursor(x)
        theta = fetch_simplices(px, self.K, self.M)
        phi = fetch_simplices(px, self.V, self.K)

        ll += Dirichlet(self.K).logps(self.alpha, theta)
        ll += Dirichlet(self.V).logps(self.beta, phi)

        # each log is taken once rather than once per word instance
        log_theta = [[log(t) for t in row] for row in theta]
        log_phi = [[log(p) for p in row] for row in phi]

        gamma = [0.0] * self.K
        terms = []
        for n in range(self.N):
            d = self.doc[n] - 1
            w = self.word[n] - 1
            for k in range(self.K):
                gamma[k] = log_theta[d][k] + log_phi[k][w]
            terms.append(log_sum_exp(gamma))
        ll += tsum(terms)
        return ll
