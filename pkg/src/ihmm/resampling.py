"""Conditional resampling of everything except the trajectory.

Given a freshly resampled trajectory this module redraws the shared base
weights, the transition rows, the emission parameters, and the three
concentration hyperparameters from their full conditionals, using the
table-count auxiliary variables of the Chinese restaurant franchise. It also
owns active-state bookkeeping: extracting transition counts, pruning states
the trajectory no longer uses, and canonical relabeling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import (
    DirichletParams,
    sample_antoniak,
    sample_beta,
    sample_dirichlet,
    sample_gamma,
)
from .model import (
    ChainState,
    Hyperparams,
    SharedBase,
    TransitionModel,
)

__all__ = [
    "TransitionCounts",
    "TableCounts",
    "transition_counts",
    "resample_tables",
    "resample_beta",
    "resample_rows",
    "resample_emissions",
    "resample_hypers",
    "prune_inactive",
    "canonical_relabel",
]

_AUX_ROUNDS = 2


@dataclass
class TransitionCounts:
    """Pairwise transition counts plus a one-hot count for the first state."""

    n: np.ndarray
    init: np.ndarray

    @property
    def k(self) -> int:
        return self.n.shape[0]

    def validate(self, t_len: int) -> None:
        if self.n.sum() + self.init.sum() != t_len:
            raise ValueError("counts do not account for every position")


def transition_counts(trajectory: np.ndarray, k: int) -> TransitionCounts:
    """Exact, deterministic count extraction from a trajectory."""
    s = np.asarray(trajectory, dtype=np.int64)
    if s.size == 0:
        return TransitionCounts(np.zeros((k, k), np.int64), np.zeros(k, np.int64))
    if s.min() < 0 or s.max() >= k:
        raise ValueError("trajectory references an inactive state")
    n = np.zeros((k, k), dtype=np.int64)
    np.add.at(n, (s[:-1], s[1:]), 1)
    init = np.zeros(k, dtype=np.int64)
    init[s[0]] = 1
    return TransitionCounts(n, init)


@dataclass
class TableCounts:
    """Franchise table counts linking row counts to the shared base.

    ``m`` holds the raw per-(row, state) table counts. In the sticky case
    ``override`` counts, per state, the self-transition tables that exist
    only because of the stickiness bias; those are excluded from the shared
    base's conditional. ``init`` passes the first-state count through.
    """

    m: np.ndarray
    override: np.ndarray
    init: np.ndarray

    def adjusted_column_sums(self) -> np.ndarray:
        return self.m.sum(axis=0) - self.override

    def total_tables(self) -> int:
        return int(self.m.sum())


def resample_tables(
    counts: TransitionCounts,
    base: SharedBase,
    hyper: Hyperparams,
    rng: np.random.Generator,
) -> TableCounts:
    """Draw table counts for every (row, state) cell with customers.

    Cell (j, k) seats n_jk customers in a restaurant with concentration
    alpha * beta_k, plus the stickiness bias on the diagonal. Sticky
    self-transition tables are then split off as overrides with the usual
    Binomial thinning.
    """
    k = counts.k
    m = np.zeros((k, k), dtype=np.int64)
    override = np.zeros(k, dtype=np.int64)
    for j in range(k):
        for l in np.nonzero(counts.n[j])[0]:
            conc = hyper.alpha * base.beta[l]
            if j == l:
                conc += hyper.kappa
            m[j, l] = sample_antoniak(int(counts.n[j, l]), conc, rng)
    if hyper.sticky and hyper.kappa > 0:
        for j in range(k):
            if m[j, j] > 0:
                p = hyper.kappa / (hyper.kappa + hyper.alpha * base.beta[j])
                override[j] = rng.binomial(m[j, j], p)
    return TableCounts(m, override, counts.init.copy())


def _dirichlet_allow_zero(conc: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Dirichlet draw where zero concentrations pin cells to exactly zero."""
    pos = conc > 0
    if pos.all():
        return sample_dirichlet(DirichletParams(conc), rng)
    out = np.zeros(conc.size)
    out[pos] = sample_dirichlet(DirichletParams(conc[pos]), rng)
    return out


def resample_beta(
    tables: TableCounts, gamma: float, rng: np.random.Generator
) -> SharedBase:
    """Shared base conditional: Dirichlet over override-adjusted column sums
    (plus the first-state count) with ``gamma`` on the remainder."""
    raw_col = tables.m.sum(axis=0) + tables.init
    if (raw_col == 0).any():
        dead = int(np.nonzero(raw_col == 0)[0][0])
        raise ValueError(
            f"state {dead} has no tables; it should have been pruned first"
        )
    # adjusted sums may still contain zeros when every self-transition table
    # of a state was an override; those cells are pinned to exactly zero
    col = tables.adjusted_column_sums() + tables.init
    draw = _dirichlet_allow_zero(np.append(col, gamma).astype(float), rng)
    return SharedBase(draw[:-1], float(draw[-1]))


def resample_rows(
    counts: TransitionCounts,
    base: SharedBase,
    hyper: Hyperparams,
    rng: np.random.Generator,
) -> TransitionModel:
    """Row conditionals: counts plus alpha-scaled base weights, stickiness on
    the diagonal, and the alpha-scaled base remainder in the last cell."""
    k = counts.k
    if base.k != k:
        raise ValueError("counts and base disagree on the state count")
    conc = counts.n + hyper.alpha * base.beta[None, :]
    if hyper.sticky:
        conc = conc + hyper.kappa * np.eye(k)
    conc = np.column_stack([conc, np.full(k, hyper.alpha * base.rem)])
    rows = np.empty((k, k + 1))
    for j in range(k):
        rows[j] = _dirichlet_allow_zero(conc[j], rng)
    return TransitionModel(rows)


def resample_emissions(
    trajectory: np.ndarray,
    y: np.ndarray,
    emissions,
    rng: np.random.Generator,
):
    """Per-state conjugate posterior draws given the assigned observations."""
    from .distributions import posterior_sample_phi

    out = emissions.copy()
    for k in range(emissions.k):
        stats = emissions.state_stats(y, trajectory, k)
        out.set_phi(k, posterior_sample_phi(stats, emissions.base, rng))
    return out


def _resample_dp_concentration(
    k: int,
    customers: int,
    a: float,
    b: float,
    current: float,
    rng: np.random.Generator,
) -> float:
    """Top-level concentration given cluster and customer counts, via the
    standard Beta auxiliary and two-component Gamma mixture."""
    if customers == 0:
        return sample_gamma(a, b, rng)
    value = current
    for _ in range(_AUX_ROUNDS):
        eta = sample_beta(value + 1.0, customers, rng)
        rate = b - math.log(eta)
        odds = (a + k - 1.0) / (customers * rate)
        shape = a + k if rng.random() < odds / (1.0 + odds) else a + k - 1.0
        value = sample_gamma(shape, rate, rng)
    return value


def _resample_group_concentration(
    group_sizes: np.ndarray,
    total_tables: int,
    a: float,
    b: float,
    current: float,
    rng: np.random.Generator,
) -> float:
    """Group-level concentration given per-row customer counts and the total
    table count, via per-row Beta and Bernoulli auxiliaries."""
    sizes = group_sizes[group_sizes > 0].astype(float)
    if sizes.size == 0 or total_tables == 0:
        return sample_gamma(a, b, rng)
    value = current
    for _ in range(_AUX_ROUNDS):
        w = rng.beta(value + 1.0, sizes)
        s = rng.random(sizes.size) < sizes / (sizes + value)
        value = sample_gamma(
            a + total_tables - int(s.sum()), b - float(np.log(w).sum()), rng
        )
    return value


def resample_hypers(
    chain: ChainState, tables: TableCounts, rng: np.random.Generator
) -> Hyperparams:
    """Fresh concentrations from their full conditionals.

    The shared-base concentration sees the adjusted tables plus the
    first-state draw as its customers; the row-level concentration (alpha
    plus kappa when sticky) sees the raw tables; the sticky ratio comes from
    its Beta conditional over override counts, after which alpha and kappa
    are recovered.
    """
    hyper = chain.hyper
    counts = transition_counts(chain.trajectory, chain.k)
    top_customers = int(tables.adjusted_column_sums().sum() + tables.init.sum())
    gamma = _resample_dp_concentration(
        chain.k, top_customers, hyper.a_gamma, hyper.b_gamma, hyper.gamma, rng
    )
    group_sizes = counts.n.sum(axis=1)
    total_tables = tables.total_tables()
    strength = _resample_group_concentration(
        group_sizes,
        total_tables,
        hyper.a_s,
        hyper.b_s,
        hyper.alpha + hyper.kappa,
        rng,
    )
    if hyper.sticky:
        overrides = int(tables.override.sum())
        rho = sample_beta(
            hyper.a_kappa + overrides,
            hyper.b_kappa + total_tables - overrides,
            rng,
        )
        alpha, kappa = (1.0 - rho) * strength, rho * strength
    else:
        alpha, kappa = strength, 0.0
    new = hyper.copy()
    new.alpha, new.gamma, new.kappa = alpha, gamma, kappa
    return new


def prune_inactive(chain: ChainState) -> ChainState:
    """Drop states the trajectory no longer uses, folding their base mass
    into the remainder and their row/column mass into the row remainders.

    Surviving states keep their relative order; the trajectory is
    reindexed in place. The joint log-likelihood of the trajectory is
    untouched because no used quantity changes.
    """
    used = np.unique(chain.trajectory)
    k = chain.k
    if used.size == k:
        return chain
    keep = np.zeros(k, dtype=bool)
    keep[used] = True
    dropped = ~keep

    chain.base = SharedBase(
        chain.base.beta[keep], chain.base.rem + float(chain.base.beta[dropped].sum())
    )
    rows = chain.trans.rows[keep]
    new_rem = rows[:, -1] + rows[:, :-1][:, dropped].sum(axis=1)
    chain.trans = TransitionModel(np.column_stack([rows[:, :-1][:, keep], new_rem]))
    chain.emissions.keep(keep)

    relabel = np.cumsum(keep) - 1
    chain.trajectory = relabel[chain.trajectory]
    return chain


def canonical_relabel(chain: ChainState) -> ChainState:
    """Relabel states by order of first appearance in the trajectory.

    Requires every active state to appear (i.e. a pruned chain). Makes
    state-indexed statistics comparable across chains and against forward
    simulation.
    """
    s = chain.trajectory
    _, first_pos = np.unique(s, return_index=True)
    if first_pos.size != chain.k:
        raise ValueError("canonical relabeling requires a pruned chain")
    order = s[np.sort(first_pos)]
    inverse = np.empty(chain.k, dtype=np.int64)
    inverse[order] = np.arange(chain.k)

    chain.base = SharedBase(chain.base.beta[order], chain.base.rem)
    rows = chain.trans.rows
    chain.trans = TransitionModel(
        np.column_stack([rows[np.ix_(order, order)], rows[order, -1]])
    )
    chain.emissions.permute(order)
    chain.trajectory = inverse[s]
    return chain
