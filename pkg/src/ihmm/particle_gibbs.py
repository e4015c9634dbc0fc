"""Infinite-state particle Gibbs trajectory resampling.

One sweep runs a conditional sequential Monte Carlo pass with the chain's
current trajectory clamped into the last particle slot, optionally refreshing
that particle's ancestry link each step (ancestor sampling), and returns a
trajectory drawn from the final weights. Whenever a particle proposes the
aggregate remainder cell, the chain is grown in place by one state, so the
sweep never truncates the state space.

Proposals come in two flavors: ``prior`` draws the next state from the
transition row alone (cost independent of everything but the draw), while
``posterior`` tilts the row by the emission likelihood, scoring the remainder
cell with the base measure's prior predictive. In posterior mode the weight
increment is the one-step predictive normalizer, identical for every index
the proposal can return.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import sample_categorical, sample_categorical_log
from .errors import NumericalError
from .model import ChainState, add_state, initial_distribution

__all__ = ["SweepConfig", "propose", "step_weight", "ancestor_resample", "pg_sweep"]

PROPOSALS = ("prior", "posterior")


@dataclass
class SweepConfig:
    """Knobs of one particle Gibbs sweep.

    ``allow_new_states`` exists for tests that clamp the model to a fixed
    finite state space; production sweeps leave it on.
    """

    n_particles: int = 10
    proposal: str = "posterior"
    ancestor_sampling: bool = True
    seed: int | None = None
    allow_new_states: bool = True

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("need at least 2 particles (one is clamped)")
        if self.proposal not in PROPOSALS:
            raise ValueError(f"proposal must be one of {PROPOSALS}")


def propose(
    mode: str,
    row: np.ndarray,
    y_t,
    emissions,
    rng: np.random.Generator,
    log_f: np.ndarray | None = None,
    allow_new: bool = True,
) -> tuple[int, float]:
    """Draw a next-state index from one transition row.

    ``row`` has length K + 1 with the aggregate remainder last; a returned
    index of K means "create a new state". The second element is the log
    proposal mass of the returned index. ``log_f`` may carry precomputed
    per-state emission log-likelihoods to avoid recomputation inside sweeps.
    """
    if mode not in PROPOSALS:
        raise ValueError(f"proposal must be one of {PROPOSALS}")
    k = row.size - 1
    if mode == "prior":
        if allow_new:
            idx = sample_categorical(row, rng)
            return idx, float(np.log(row[idx]))
        idx = sample_categorical(row[:k], rng)
        return idx, float(np.log(row[idx]) - np.log(row[:k].sum()))

    if log_f is None:
        log_f = emissions.log_lik(y_t)
    log_new = emissions.prior_predictive_log(y_t) if allow_new else -np.inf
    shift = max(log_f.max() if k else -np.inf, log_new)
    if not np.isfinite(shift):
        raise NumericalError("posterior proposal has no admissible state")
    cells = row[:k] * np.exp(log_f - shift)
    if allow_new:
        cells = np.append(cells, row[k] * np.exp(log_new - shift))
    total = cells.sum()
    if total <= 0 or not np.isfinite(total):
        raise NumericalError("posterior proposal has no admissible state")
    idx = sample_categorical(cells, rng)
    return idx, float(np.log(cells[idx]) - np.log(total))


def step_weight(mode: str, log_pi: float, log_f: float, log_q: float) -> float:
    """Log weight increment pi * f / q for one particle and time step.

    In prior mode pi and q cancel and this is the emission log-likelihood; in
    posterior mode it equals the log predictive normalizer, independent of
    the sampled index.
    """
    if mode not in PROPOSALS:
        raise ValueError(f"proposal must be one of {PROPOSALS}")
    return log_pi + log_f - log_q


def ancestor_resample(
    log_weights: np.ndarray,
    rows: np.ndarray,
    ref_state: int,
    rng: np.random.Generator,
) -> int:
    """Resample the clamped particle's ancestry link.

    ``rows`` holds one transition row per particle (each particle's previous
    state's row); the link weight is the particle's running weight times the
    probability of moving to the reference state next.
    """
    with np.errstate(divide="ignore"):
        log_tilde = np.asarray(log_weights, dtype=float) + np.log(rows[:, ref_state])
    if np.max(log_tilde) == -np.inf:
        raise NumericalError("all ancestor weights vanished")
    return sample_categorical_log(log_tilde, rng)


class _LikCache:
    """Per-step emission log-likelihoods plus the prior predictive, grown
    lazily as the model acquires states mid-sweep."""

    def __init__(self, emissions, y):
        self.emissions = emissions
        self.matrix = emissions.loglik_matrix(y)
        self.prior_pred = emissions.prior_predictive_many(y)
        self.t = -1
        self.vec = None
        self.yt = None

    def at(self, t: int) -> np.ndarray:
        if t != self.t:
            self.t = t
            base = self.matrix[t]
            k = self.emissions.k
            if k > base.size:
                extra = [
                    self.emissions.log_lik_one(self.yt, j)
                    for j in range(base.size, k)
                ]
                base = np.append(base, extra)
            self.vec = base
        return self.vec

    def grow(self, y_t, new_index: int) -> None:
        self.vec = np.append(self.vec, self.emissions.log_lik_one(y_t, new_index))

    def set_obs(self, y_t):
        self.yt = y_t


def pg_sweep(
    chain: ChainState,
    y: np.ndarray,
    cfg: SweepConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """One conditional SMC pass; returns a freshly sampled trajectory.

    The chain's current trajectory is the clamped reference. The chain is
    mutated only by lazy state creation; callers install the returned
    trajectory and prune unused states afterwards.

    Free particles within a time step are proposed in one vectorized batch;
    when a batch contains a remainder-cell draw, the batch is committed up to
    and including the first such draw (those draws are distributed exactly as
    sequential ones, since the model is unchanged up to that point), the new
    state is created, and the rest of the batch is redrawn against the grown
    model. Proposing the remainder twice in one step therefore creates two
    distinct states.
    """
    y = np.asarray(y)
    t_len = len(y)
    ref = chain.trajectory
    if ref.size != t_len:
        raise ValueError("observation length does not match the reference trajectory")
    n = cfg.n_particles
    mode = cfg.proposal
    allow_new = cfg.allow_new_states

    positions = np.zeros((n, t_len), dtype=np.int64)
    ancestors = np.zeros((n, t_len), dtype=np.int64)
    log_w = np.zeros(n)
    lik = _LikCache(chain.emissions, y)

    def advance_batch(ids: np.ndarray, t: int) -> None:
        """Fill positions and weights at time t for the free particles ``ids``."""
        start = 0
        while start < ids.size:
            active = ids[start:]
            k = chain.k
            log_f = lik.at(t)
            if t == 0:
                rows_a = np.broadcast_to(
                    initial_distribution(chain.base), (active.size, k + 1)
                )
            else:
                prev = positions[ancestors[active, t], t - 1]
                rows_a = chain.trans.rows[prev]
            if mode == "posterior":
                log_new = lik.prior_pred[t] if allow_new else -np.inf
                shift = max(log_f.max() if k else -np.inf, log_new)
                if not np.isfinite(shift):
                    raise NumericalError("posterior proposal has no admissible state")
                cells = rows_a[:, :k] * np.exp(log_f - shift)
                if allow_new:
                    cells = np.column_stack(
                        [cells, rows_a[:, k] * np.exp(log_new - shift)]
                    )
                totals = cells.sum(axis=1)
                if (totals <= 0).any() or not np.isfinite(totals).all():
                    raise NumericalError("posterior proposal has no admissible state")
                cums = np.cumsum(cells, axis=1)
                batch_w = np.log(totals) + shift
            else:
                cums = np.cumsum(rows_a if allow_new else rows_a[:, :k], axis=1)
                totals = cums[:, -1]
                batch_w = None
            draws = rng.random(active.size) * totals
            drawn = np.minimum(
                (cums < draws[:, None]).sum(axis=1), cums.shape[1] - 1
            )
            hits = np.nonzero(drawn == k)[0] if allow_new else np.empty(0, np.int64)
            commit = int(hits[0]) + 1 if hits.size else active.size
            plain = commit - 1 if hits.size else commit
            if plain:
                pids = active[:plain]
                positions[pids, t] = drawn[:plain]
                if mode == "posterior":
                    log_w[pids] = batch_w[:plain]
                else:
                    log_w[pids] = log_f[drawn[:plain]]
                    if not allow_new:
                        log_w[pids] += np.log(totals[:plain])
            if hits.size:
                pid = active[plain]
                state = add_state(chain, rng)
                lik.grow(y[t], state)
                positions[pid, t] = state
                if mode == "posterior":
                    log_w[pid] = batch_w[plain]
                else:
                    log_w[pid] = lik.vec[state]
            start += commit

    def reference_weight(t: int, row: np.ndarray) -> float:
        """Weight of the clamped particle, same formula as free particles."""
        state = ref[t]
        log_f = lik.at(t)
        if mode == "prior":
            lw = float(log_f[state])
            if not allow_new:
                lw += float(np.log(row[: row.size - 1].sum()))
            return lw
        k = row.size - 1
        log_new = lik.prior_pred[t] if allow_new else -np.inf
        shift = max(log_f.max(), log_new)
        if not np.isfinite(shift):
            raise NumericalError("reference particle weight vanished")
        total = (row[:k] * np.exp(log_f - shift)).sum()
        if allow_new:
            total += row[k] * np.exp(log_new - shift)
        if total <= 0:
            raise NumericalError("reference particle weight vanished")
        return float(np.log(total) + shift)

    free = np.arange(n - 1)
    for t in range(t_len):
        lik.set_obs(y[t])
        if t > 0:
            prev_w = log_w.copy()
            weights = np.exp(prev_w - prev_w.max())
            cum = np.cumsum(weights)
            draws = rng.random(n - 1) * cum[-1]
            ancestors[: n - 1, t] = np.minimum(
                np.searchsorted(cum, draws, side="right"), n - 1
            )
            if cfg.ancestor_sampling:
                prev_rows = chain.trans.rows[positions[:, t - 1]]
                ancestors[n - 1, t] = ancestor_resample(prev_w, prev_rows, ref[t], rng)
            else:
                ancestors[n - 1, t] = n - 1
        advance_batch(free, t)
        positions[n - 1, t] = ref[t]
        if t == 0:
            ref_row = initial_distribution(chain.base)
        else:
            ref_row = chain.trans.rows[positions[ancestors[n - 1, t], t - 1]]
        log_w[n - 1] = reference_weight(t, ref_row)
        assert positions[n - 1, t] == ref[t], "clamping invariant violated"

    chosen = sample_categorical_log(log_w, rng)
    out = np.empty(t_len, dtype=np.int64)
    idx = chosen
    for t in range(t_len - 1, -1, -1):
        out[t] = positions[idx, t]
        idx = ancestors[idx, t]
    return out
