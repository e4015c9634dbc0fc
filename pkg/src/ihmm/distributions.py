"""Random-variate generation and conjugate-family computations.

Every sampler in the package reduces to the primitives in this module. All
functions take an explicit ``numpy.random.Generator`` so that a fixed seed
yields an identical variate sequence, and all densities are returned in log
space (products over long sequences underflow otherwise). Categorical draws
use inverse-CDF over the stored order, which pins tie-breaking under a fixed
seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DirichletParams",
    "NIGParams",
    "GaussianStats",
    "DiscreteStats",
    "sample_dirichlet",
    "sample_beta",
    "sample_gamma",
    "sample_categorical",
    "sample_categorical_log",
    "sample_antoniak",
    "posterior_predictive",
    "posterior_sample_phi",
    "nig_posterior",
    "nig_predictive_logpdf",
    "normal_logpdf",
]

_LOG_2PI = math.log(2.0 * math.pi)


def _check_positive(name: str, value: float) -> None:
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class DirichletParams:
    """Concentration vector of a Dirichlet distribution (all entries > 0)."""

    concentrations: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.concentrations, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("concentrations must be a non-empty 1-d sequence")
        if not (np.isfinite(c).all() and (c > 0).all()):
            raise ValueError("concentrations must be positive and finite")
        object.__setattr__(self, "concentrations", c)

    @property
    def size(self) -> int:
        return self.concentrations.size

    @property
    def total(self) -> float:
        return float(self.concentrations.sum())


@dataclass(frozen=True)
class NIGParams:
    """Normal-inverse-gamma prior for a Gaussian with unknown mean and variance.

    The variance follows InvGamma(shape, rate) with ``rate`` the inverse-scale
    convention, and the mean given the variance follows
    Normal(mean_loc, variance / mean_precision_scale).
    """

    mean_loc: float
    mean_precision_scale: float
    shape: float
    rate: float

    def __post_init__(self):
        if not np.isfinite(self.mean_loc):
            raise ValueError("mean_loc must be finite")
        _check_positive("mean_precision_scale", self.mean_precision_scale)
        _check_positive("shape", self.shape)
        _check_positive("rate", self.rate)


@dataclass
class GaussianStats:
    """Sufficient statistics (count, sum, sum of squares) for Gaussian data."""

    n: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be nonnegative")
        if self.n == 0 and (self.total != 0.0 or self.total_sq != 0.0):
            raise ValueError("empty stats must have zero sums")

    @classmethod
    def from_data(cls, values) -> "GaussianStats":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return cls()
        return cls(n=int(v.size), total=float(v.sum()), total_sq=float((v * v).sum()))

    def add(self, y: float) -> None:
        self.n += 1
        self.total += y
        self.total_sq += y * y

    def remove(self, y: float) -> None:
        if self.n <= 0:
            raise ValueError("cannot remove from empty stats")
        self.n -= 1
        if self.n == 0:
            # reset exactly so incremental updates match batch recomputation
            self.total = 0.0
            self.total_sq = 0.0
        else:
            self.total -= y
            self.total_sq -= y * y


@dataclass
class DiscreteStats:
    """Per-symbol counts for categorical data over a fixed finite alphabet."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("counts must be a non-empty 1-d sequence")
        if (c < 0).any():
            raise ValueError("counts must be nonnegative")
        self.counts = c

    @classmethod
    def empty(cls, alphabet_size: int) -> "DiscreteStats":
        return cls(np.zeros(alphabet_size, dtype=np.int64))

    @classmethod
    def from_data(cls, symbols, alphabet_size: int) -> "DiscreteStats":
        s = np.asarray(symbols, dtype=np.int64)
        if s.size and (s.min() < 0 or s.max() >= alphabet_size):
            raise ValueError("symbol outside alphabet")
        return cls(np.bincount(s, minlength=alphabet_size).astype(np.int64))

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def add(self, symbol: int) -> None:
        self.counts[symbol] += 1

    def remove(self, symbol: int) -> None:
        if self.counts[symbol] <= 0:
            raise ValueError("cannot remove unseen symbol")
        self.counts[symbol] -= 1


def _logsumexp(a: np.ndarray) -> float:
    m = np.max(a)
    if m == -np.inf:
        return -np.inf
    return float(m + np.log(np.exp(a - m).sum()))


def _log_gamma_variates(shapes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Log of Gamma(shape) draws via the small-shape boost
    Gamma(a) = Gamma(a + 1) * U^(1/a), exact and underflow-free."""
    g = rng.standard_gamma(shapes + 1.0)
    u = rng.random(shapes.size)
    return np.log(g) + np.log(u) / shapes


def sample_dirichlet(params: DirichletParams, rng: np.random.Generator) -> np.ndarray:
    """Draw a probability vector from Dirichlet(params).

    Normalizes boosted log-gamma variates, so tiny concentrations cannot
    underflow to an all-zero gamma vector.
    """
    logx = _log_gamma_variates(params.concentrations, rng)
    x = np.exp(logx - logx.max())
    return x / x.sum()


def stick_fractions(a: float, b: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Beta(a, b) draws that stay well defined for arbitrarily tiny shapes.

    Built from boosted log-gamma variates; in the regime where both shapes
    underflow past floats entirely, falls back to the expected proportion.
    """
    if not (a >= 0 and b >= 0 and np.isfinite(a) and np.isfinite(b)) or a + b == 0:
        raise ValueError(f"invalid beta shapes ({a!r}, {b!r})")
    if a == 0 or b == 0:
        return np.full(size, 1.0 if b == 0 else 0.0)
    log_ga = _log_gamma_variates(np.full(size, float(a)), rng)
    log_gb = _log_gamma_variates(np.full(size, float(b)), rng)
    with np.errstate(invalid="ignore", over="ignore"):
        frac = 1.0 / (1.0 + np.exp(log_gb - log_ga))
    bad = ~np.isfinite(frac)
    if bad.any():
        frac[bad] = a / (a + b)
    return frac


def sample_beta(a: float, b: float, rng: np.random.Generator) -> float:
    _check_positive("a", a)
    _check_positive("b", b)
    return float(rng.beta(a, b))


def sample_gamma(shape: float, rate: float, rng: np.random.Generator) -> float:
    """Gamma variate in the shape/rate parameterization (mean shape/rate)."""
    _check_positive("shape", shape)
    _check_positive("rate", rate)
    return float(rng.standard_gamma(shape) / rate)


def sample_categorical(weights, rng: np.random.Generator) -> int:
    """Draw an index proportional to (possibly unnormalized) weights."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-d sequence")
    if not np.isfinite(w).all() or (w < 0).any():
        raise ValueError("weights must be finite and nonnegative")
    c = np.cumsum(w)
    total = c[-1]
    if total <= 0:
        raise ValueError("categorical weights sum to zero")
    idx = int(np.searchsorted(c, rng.random() * total, side="right"))
    return min(idx, w.size - 1)


def sample_categorical_log(log_weights, rng: np.random.Generator) -> int:
    """Categorical draw from unnormalized log weights (log-sum-exp shift)."""
    lw = np.asarray(log_weights, dtype=float)
    m = np.max(lw)
    if m == -np.inf or np.isnan(m):
        raise ValueError("all categorical log-weights are -inf")
    return sample_categorical(np.exp(lw - m), rng)


def sample_antoniak(n: int, concentration: float, rng: np.random.Generator) -> int:
    """Number of occupied tables after seating ``n`` customers in a Chinese
    restaurant process with the given concentration.

    Customer i (0-based) opens a new table with probability c / (c + i), so
    the table count is a sum of independent Bernoullis. This is exact in
    distribution and O(n), and never materializes Stirling numbers (which
    overflow long before the transition counts seen in long sequences).
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    _check_positive("concentration", concentration)
    if n == 0:
        return 0
    p_new = concentration / (concentration + np.arange(n))
    return int((rng.random(n) < p_new).sum())


def nig_posterior(stats: GaussianStats, base: NIGParams) -> NIGParams:
    """Standard conjugate update of normal-inverse-gamma hyperparameters."""
    n = stats.n
    if n == 0:
        return base
    mean = stats.total / n
    lam_n = base.mean_precision_scale + n
    loc_n = (base.mean_precision_scale * base.mean_loc + stats.total) / lam_n
    ss = max(stats.total_sq - stats.total * stats.total / n, 0.0)
    rate_n = (
        base.rate
        + 0.5 * ss
        + 0.5 * base.mean_precision_scale * n * (mean - base.mean_loc) ** 2 / lam_n
    )
    return NIGParams(loc_n, lam_n, base.shape + 0.5 * n, rate_n)


def nig_predictive_logpdf(y, params: NIGParams):
    """Student-t log-density implied by integrating a Gaussian against NIG.

    Broadcasts over array-valued ``y``.
    """
    df = 2.0 * params.shape
    scale_sq = (
        params.rate
        * (params.mean_precision_scale + 1.0)
        / (params.shape * params.mean_precision_scale)
    )
    z_sq = (np.asarray(y) - params.mean_loc) ** 2 / scale_sq
    out = (
        math.lgamma(0.5 * (df + 1.0))
        - math.lgamma(0.5 * df)
        - 0.5 * math.log(df * math.pi * scale_sq)
        - 0.5 * (df + 1.0) * np.log1p(z_sq / df)
    )
    return float(out) if np.isscalar(y) or np.ndim(y) == 0 else out


def normal_logpdf(y, mean, var):
    """Elementwise Gaussian log-density; broadcasts over numpy inputs."""
    return -0.5 * (_LOG_2PI + np.log(var) + (y - mean) ** 2 / var)


def posterior_predictive(stats, base, y) -> float:
    """Log-density (or log-mass) of one observation under the posterior
    predictive implied by conjugate sufficient statistics.

    With empty statistics this is the prior predictive, which is exactly the
    marginal likelihood used when proposing a transition to a fresh state.
    """
    if isinstance(base, NIGParams):
        if not isinstance(stats, GaussianStats):
            raise ValueError("continuous base requires GaussianStats")
        return nig_predictive_logpdf(float(y), nig_posterior(stats, base))
    if isinstance(base, DirichletParams):
        if not isinstance(stats, DiscreteStats):
            raise ValueError("discrete base requires DiscreteStats")
        if stats.counts.size != base.size:
            raise ValueError("stats and base alphabet sizes differ")
        sym = int(y)
        if sym < 0 or sym >= base.size:
            raise ValueError(f"symbol {sym} outside alphabet of size {base.size}")
        num = stats.counts[sym] + base.concentrations[sym]
        den = stats.n + base.total
        return float(np.log(num) - np.log(den))
    raise ValueError(f"unsupported base measure {type(base).__name__}")


def posterior_sample_phi(stats, base, rng: np.random.Generator):
    """Draw an emission parameter from its conjugate posterior.

    Returns ``(mean, variance)`` for the NIG family and a probability vector
    for the Dirichlet family; with empty statistics this samples the prior.
    """
    if isinstance(base, NIGParams):
        if not isinstance(stats, GaussianStats):
            raise ValueError("continuous base requires GaussianStats")
        post = nig_posterior(stats, base)
        var = post.rate / rng.standard_gamma(post.shape)
        mean = rng.normal(post.mean_loc, math.sqrt(var / post.mean_precision_scale))
        return float(mean), float(var)
    if isinstance(base, DirichletParams):
        if not isinstance(stats, DiscreteStats):
            raise ValueError("discrete base requires DiscreteStats")
        if stats.counts.size != base.size:
            raise ValueError("stats and base alphabet sizes differ")
        return sample_dirichlet(
            DirichletParams(base.concentrations + stats.counts), rng
        )
    raise ValueError(f"unsupported base measure {type(base).__name__}")
