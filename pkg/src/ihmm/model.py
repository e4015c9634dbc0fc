"""Lazily instantiated HDP-HMM state and its stick-breaking growth operations.

The model keeps only the K states currently in use. The shared base measure
stores K stick weights plus one explicit remainder for the infinitely many
unrepresented states, and every transition row carries a matching aggregate
remainder entry in its last column. Growing the model by one state breaks a
piece off each remainder; shrinking folds unused mass back in. Both
directions conserve probability mass exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    DirichletParams,
    NIGParams,
    DiscreteStats,
    GaussianStats,
    normal_logpdf,
    posterior_predictive,
    posterior_sample_phi,
    sample_beta,
    sample_dirichlet,
    stick_fractions,
)

__all__ = [
    "MASS_TOL",
    "SharedBase",
    "TransitionModel",
    "NormalEmissions",
    "CategoricalEmissions",
    "make_emissions",
    "Hyperparams",
    "ChainState",
    "extend_beta",
    "extend_rows",
    "new_row",
    "add_state",
    "joint_log_likelihood",
    "initial_distribution",
    "empty_chain",
]

logger = logging.getLogger(__name__)

MASS_TOL = 1e-12
_REMAINDER_FLOOR = 1e-300

CHAIN_SCHEMA = "ihmm-chain-v1"


@dataclass
class SharedBase:
    """Shared stick weights over active states plus explicit remainder mass."""

    beta: np.ndarray
    rem: float

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)

    @property
    def k(self) -> int:
        return self.beta.size

    def full(self) -> np.ndarray:
        """Weights including the remainder cell, length K + 1."""
        return np.append(self.beta, self.rem)

    def validate(self) -> None:
        if (self.beta < 0).any() or self.rem <= 0:
            raise ValueError("base weights must be nonnegative with positive remainder")
        total = self.beta.sum() + self.rem
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"base mass {total} deviates from 1 beyond tolerance")

    def copy(self) -> "SharedBase":
        return SharedBase(self.beta.copy(), self.rem)


@dataclass
class TransitionModel:
    """K transition rows of length K + 1; the last column aggregates the
    probability of moving to any unrepresented state."""

    rows: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.ndim != 2 or self.rows.shape[1] < 1:
            raise ValueError("rows must be a 2-d array with a remainder column")

    @property
    def k(self) -> int:
        return self.rows.shape[0]

    def validate(self) -> None:
        # mid-expansion a row block may be one column wider than square;
        # a settled chain has shape (K, K + 1), checked by ChainState
        if (self.rows < 0).any():
            raise ValueError("transition probabilities must be nonnegative")
        sums = self.rows.sum(axis=1)
        if self.k and np.abs(sums - 1.0).max() > MASS_TOL:
            raise ValueError("transition rows must sum to 1")

    def copy(self) -> "TransitionModel":
        return TransitionModel(self.rows.copy())


class NormalEmissions:
    """Gaussian emissions with a normal-inverse-gamma base measure."""

    family = "normal"

    def __init__(self, base: NIGParams, mean=(), var=()):
        self.base = base
        self.mean = np.asarray(mean, dtype=float)
        self.var = np.asarray(var, dtype=float)
        self._empty_stats = GaussianStats()

    @property
    def k(self) -> int:
        return self.mean.size

    def validate(self) -> None:
        if self.mean.size != self.var.size:
            raise ValueError("mean and variance counts differ")
        if (self.var <= 0).any() or not np.isfinite(self.mean).all():
            raise ValueError("emission parameters out of support")

    def log_lik(self, y_t: float) -> np.ndarray:
        return normal_logpdf(y_t, self.mean, self.var)

    def log_lik_one(self, y_t: float, k: int) -> float:
        return float(normal_logpdf(y_t, self.mean[k], self.var[k]))

    def loglik_matrix(self, y: np.ndarray) -> np.ndarray:
        return normal_logpdf(np.asarray(y, dtype=float)[:, None], self.mean, self.var)

    def prior_predictive_log(self, y_t: float) -> float:
        return posterior_predictive(self._empty_stats, self.base, y_t)

    def prior_predictive_many(self, y: np.ndarray) -> np.ndarray:
        from .distributions import nig_predictive_logpdf

        return nig_predictive_logpdf(np.asarray(y, dtype=float), self.base)

    def append_prior_draw(self, rng: np.random.Generator) -> None:
        mean, var = posterior_sample_phi(self._empty_stats, self.base, rng)
        self.mean = np.append(self.mean, mean)
        self.var = np.append(self.var, var)

    def state_stats(self, y: np.ndarray, trajectory: np.ndarray, k: int) -> GaussianStats:
        return GaussianStats.from_data(np.asarray(y)[trajectory == k])

    def set_phi(self, k: int, phi) -> None:
        self.mean[k], self.var[k] = phi

    def keep(self, mask: np.ndarray) -> None:
        self.mean = self.mean[mask]
        self.var = self.var[mask]

    def permute(self, order: np.ndarray) -> None:
        self.mean = self.mean[order]
        self.var = self.var[order]

    def sample_obs(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.mean[states], np.sqrt(self.var[states]))

    def copy(self) -> "NormalEmissions":
        return NormalEmissions(self.base, self.mean.copy(), self.var.copy())

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "base": {
                "mean_loc": self.base.mean_loc,
                "mean_precision_scale": self.base.mean_precision_scale,
                "shape": self.base.shape,
                "rate": self.base.rate,
            },
            "mean": self.mean.tolist(),
            "var": self.var.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalEmissions":
        return cls(NIGParams(**d["base"]), d["mean"], d["var"])


class CategoricalEmissions:
    """Categorical emissions over a fixed alphabet with a Dirichlet base."""

    family = "categorical"

    def __init__(self, base: DirichletParams, probs=None, alphabet: str | None = None):
        self.base = base
        if probs is None:
            probs = np.zeros((0, base.size))
        self.probs = np.asarray(probs, dtype=float).reshape(-1, base.size)
        self.alphabet = alphabet
        self._empty_stats = DiscreteStats.empty(base.size)

    @property
    def k(self) -> int:
        return self.probs.shape[0]

    @property
    def alphabet_size(self) -> int:
        return self.base.size

    def validate(self) -> None:
        if self.probs.size and (
            (self.probs < 0).any()
            or np.abs(self.probs.sum(axis=1) - 1.0).max() > MASS_TOL
        ):
            raise ValueError("emission rows must be probability vectors")

    def log_lik(self, y_t: int) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.probs[:, int(y_t)])

    def log_lik_one(self, y_t: int, k: int) -> float:
        with np.errstate(divide="ignore"):
            return float(np.log(self.probs[k, int(y_t)]))

    def loglik_matrix(self, y: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.probs[:, np.asarray(y, dtype=np.int64)].T)

    def prior_predictive_log(self, y_t: int) -> float:
        return posterior_predictive(self._empty_stats, self.base, y_t)

    def prior_predictive_many(self, y: np.ndarray) -> np.ndarray:
        c = self.base.concentrations
        return np.log(c[np.asarray(y, dtype=np.int64)] / c.sum())

    def append_prior_draw(self, rng: np.random.Generator) -> None:
        row = posterior_sample_phi(self._empty_stats, self.base, rng)
        self.probs = np.vstack([self.probs, row])

    def state_stats(self, y: np.ndarray, trajectory: np.ndarray, k: int) -> DiscreteStats:
        return DiscreteStats.from_data(np.asarray(y)[trajectory == k], self.alphabet_size)

    def set_phi(self, k: int, phi) -> None:
        self.probs[k] = phi

    def keep(self, mask: np.ndarray) -> None:
        self.probs = self.probs[mask]

    def permute(self, order: np.ndarray) -> None:
        self.probs = self.probs[order]

    def sample_obs(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        cum = np.cumsum(self.probs[states], axis=1)
        u = rng.random(len(states)) * cum[:, -1]
        return (u[:, None] >= cum).sum(axis=1).astype(np.int64)

    def copy(self) -> "CategoricalEmissions":
        return CategoricalEmissions(self.base, self.probs.copy(), self.alphabet)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "base": {"concentrations": self.base.concentrations.tolist()},
            "probs": self.probs.tolist(),
            "alphabet": self.alphabet,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CategoricalEmissions":
        return cls(
            DirichletParams(np.asarray(d["base"]["concentrations"])),
            np.asarray(d["probs"]),
            d.get("alphabet"),
        )


def make_emissions(base) -> NormalEmissions | CategoricalEmissions:
    if isinstance(base, NIGParams):
        return NormalEmissions(base)
    if isinstance(base, DirichletParams):
        return CategoricalEmissions(base)
    raise ValueError(f"unsupported base measure {type(base).__name__}")


def emissions_from_dict(d: dict):
    if d["family"] == "normal":
        return NormalEmissions.from_dict(d)
    if d["family"] == "categorical":
        return CategoricalEmissions.from_dict(d)
    raise ValueError(f"unknown emission family {d['family']!r}")


@dataclass
class Hyperparams:
    """Concentrations, stickiness, and the constants of their hyperpriors."""

    alpha: float
    gamma: float
    kappa: float = 0.0
    sticky: bool = False
    a_gamma: float = 1.0
    b_gamma: float = 1.0
    a_s: float = 1.0
    b_s: float = 1.0
    a_kappa: float = 10.0
    b_kappa: float = 10.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.gamma > 0):
            raise ValueError("alpha and gamma must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.kappa > 0 and not self.sticky:
            raise ValueError("kappa > 0 requires the sticky flag")
        for name in ("a_gamma", "b_gamma", "a_s", "b_s", "a_kappa", "b_kappa"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def copy(self) -> "Hyperparams":
        return Hyperparams(**self.__dict__)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ChainState:
    """Full MCMC state: trajectory, shared base, transitions, emissions,
    hyperparameters, and an iteration counter."""

    trajectory: np.ndarray
    base: SharedBase
    trans: TransitionModel
    emissions: NormalEmissions | CategoricalEmissions
    hyper: Hyperparams
    iteration: int = 0

    def __post_init__(self):
        self.trajectory = np.asarray(self.trajectory, dtype=np.int64)

    @property
    def k(self) -> int:
        return self.base.k

    def validate(self) -> None:
        self.base.validate()
        self.trans.validate()
        self.emissions.validate()
        if not (self.base.k == self.trans.k == self.emissions.k):
            raise ValueError("active state count disagrees across components")
        if self.trans.rows.shape != (self.k, self.k + 1):
            raise ValueError("transition rows must have shape (K, K + 1)")
        if self.trajectory.size and (
            self.trajectory.min() < 0 or self.trajectory.max() >= self.k
        ):
            raise ValueError("trajectory references an inactive state")

    def copy(self) -> "ChainState":
        return ChainState(
            self.trajectory.copy(),
            self.base.copy(),
            self.trans.copy(),
            self.emissions.copy(),
            self.hyper.copy(),
            self.iteration,
        )

    def to_dict(self) -> dict:
        return {
            "schema": CHAIN_SCHEMA,
            "trajectory": self.trajectory.tolist(),
            "beta": self.base.beta.tolist(),
            "beta_rem": self.base.rem,
            "rows": self.trans.rows.tolist(),
            "emissions": self.emissions.to_dict(),
            "hyper": self.hyper.to_dict(),
            "iteration": self.iteration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChainState":
        if d.get("schema") != CHAIN_SCHEMA:
            raise ValueError(f"unsupported chain schema {d.get('schema')!r}")
        k = len(d["beta"])
        rows = np.asarray(d["rows"], dtype=float).reshape(k, k + 1)
        chain = cls(
            np.asarray(d["trajectory"], dtype=np.int64),
            SharedBase(np.asarray(d["beta"]), float(d["beta_rem"])),
            TransitionModel(rows),
            emissions_from_dict(d["emissions"]),
            Hyperparams(**d["hyper"]),
            int(d["iteration"]),
        )
        chain.validate()
        return chain


def initial_distribution(base: SharedBase) -> np.ndarray:
    """Distribution of the first state, length K + 1 including the remainder.

    The model draws the first state directly from the shared base measure;
    this function is the single place that convention lives.
    """
    return base.full()


def _guarded(beta: np.ndarray, rem: float) -> SharedBase:
    if rem < _REMAINDER_FLOOR:
        logger.warning("base remainder underflow (%.3e); renormalizing", rem)
        rem = _REMAINDER_FLOOR
        total = beta.sum() + rem
        return SharedBase(beta / total, rem / total)
    return SharedBase(beta, rem)


def extend_beta(base: SharedBase, gamma: float, rng: np.random.Generator) -> SharedBase:
    """Break one stick off the base remainder, growing K by one."""
    frac = sample_beta(1.0, gamma, rng)
    new_mass = base.rem * frac
    new_rem = base.rem - new_mass
    return _guarded(np.append(base.beta, new_mass), new_rem)


def extend_rows(
    trans: TransitionModel, base: SharedBase, alpha: float, rng: np.random.Generator
) -> TransitionModel:
    """Give every existing row a column for the newly added state.

    ``base`` must already be extended to K + 1 entries. Each row splits its
    aggregate remainder into (new column, new remainder) with a Beta draw
    whose parameters come from the freshly broken base stick; existing
    entries are copied unchanged.
    """
    k_old = trans.k
    if base.k != k_old + 1:
        raise ValueError("base must be extended before the rows")
    if k_old == 0:
        return TransitionModel(np.zeros((0, 2)))
    frac = stick_fractions(alpha * base.beta[-1], alpha * base.rem, k_old, rng)
    old_rem = trans.rows[:, -1]
    new_col = old_rem * frac
    # exact-zero row remainders are fine: no Beta shape ever derives from them
    new_rem = old_rem - new_col
    return TransitionModel(np.column_stack([trans.rows[:, :-1], new_col, new_rem]))


def new_row(
    base: SharedBase,
    hyper: Hyperparams,
    self_index: int | None,
    rng: np.random.Generator,
) -> np.ndarray:
    """Transition row for a fresh state: Dirichlet around the shared base,
    with the self-transition bias added to one concentration when sticky."""
    conc = hyper.alpha * base.full()
    if self_index is not None:
        if not 0 <= self_index < base.k:
            raise ValueError("self_index must name an active state")
        conc = conc.copy()
        conc[self_index] += hyper.kappa
    return sample_dirichlet(DirichletParams(conc), rng)


def add_state(chain: ChainState, rng: np.random.Generator) -> int:
    """Grow the chain by one active state; returns the new state's index.

    Composes the base-stick break, the per-row column split, a fresh
    transition row, and a fresh emission parameter from the base measure.
    """
    chain.base = extend_beta(chain.base, chain.hyper.gamma, rng)
    trans = extend_rows(chain.trans, chain.base, chain.hyper.alpha, rng)
    new_index = chain.base.k - 1
    row = new_row(chain.base, chain.hyper, new_index, rng)
    chain.trans = TransitionModel(np.vstack([trans.rows, row[None, :]]))
    chain.emissions.append_prior_draw(rng)
    return new_index


def joint_log_likelihood(chain: ChainState, y: np.ndarray) -> float:
    """Log of the product of transition and emission terms along the
    trajectory, with the first state scored against the shared base."""
    s = chain.trajectory
    y = np.asarray(y)
    if s.size != len(y) or s.size == 0:
        raise ValueError("trajectory and observations must share a positive length")
    if s.min() < 0 or s.max() >= chain.k:
        raise ValueError("trajectory references an inactive state")
    with np.errstate(divide="ignore"):
        ll = float(np.log(chain.base.beta[s[0]]))
        ll += float(np.log(chain.trans.rows[s[:-1], s[1:]]).sum())
    ll += float(chain.emissions.loglik_matrix(y)[np.arange(s.size), s].sum())
    return ll


def empty_chain(emission_base, hyper: Hyperparams) -> ChainState:
    """Chain with zero active states and all mass in the remainders."""
    return ChainState(
        trajectory=np.zeros(0, dtype=np.int64),
        base=SharedBase(np.zeros(0), 1.0),
        trans=TransitionModel(np.zeros((0, 1))),
        emissions=make_emissions(emission_base),
        hyper=hyper,
    )
