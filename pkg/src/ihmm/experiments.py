"""Data pipelines, diagnostics, and run orchestration.

Everything a desk-scale experiment needs around the samplers: synthetic
sequence generation, ingestion of numeric time series and character data,
per-iteration diagnostics written as CSV records, held-out predictive
scoring over posterior checkpoints, and a wall-clock scaling harness for the
per-sweep cost of each sampler.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .baselines import beam_sweep, gibbs_sweep
from .errors import DataError
from .model import (
    ChainState,
    Hyperparams,
    add_state,
    empty_chain,
    joint_log_likelihood,
)
from .particle_gibbs import SweepConfig, pg_sweep
from .resampling import (
    prune_inactive,
    resample_beta,
    resample_emissions,
    resample_hypers,
    resample_rows,
    resample_tables,
    transition_counts,
)

__all__ = [
    "SyntheticSpec",
    "generate_synthetic",
    "ingest_timeseries",
    "ingest_text",
    "decode_symbols",
    "predictive_log_likelihood",
    "forward_loglik",
    "diagnostics",
    "RunRecord",
    "RECORD_FIELDS",
    "SAMPLER_IDS",
    "init_chain",
    "mcmc_iteration",
    "run_mcmc",
    "bench_sweep_times",
    "fit_loglog_slope",
]

RECORD_FIELDS = ("iteration", "K_active", "jll", "seconds")
SAMPLER_IDS = ("pg", "pg-as", "beam", "gibbs")


@dataclass(frozen=True)
class SyntheticSpec:
    """Markov chain with a fixed self-transition probability, the rest of
    each row uniform, and Gaussian emissions at per-state means."""

    k_true: int
    t_len: int
    self_prob: float
    means: tuple
    std: float
    seed: int = 0

    def __post_init__(self):
        if self.k_true < 2:
            raise ValueError(
                "k_true must be at least 2 (self_prob < 1 leaks mass otherwise)"
            )
        if not 0.0 < self.self_prob < 1.0:
            raise ValueError("self_prob must lie strictly between 0 and 1")
        if len(self.means) != self.k_true:
            raise ValueError("means must list one value per state (k_true)")
        if self.std <= 0:
            raise ValueError("std must be positive")


def generate_synthetic(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """Sample (observations, true trajectory) from the spec; reproducible
    from the spec's seed."""
    rng = np.random.default_rng(spec.seed)
    k = spec.k_true
    trans = np.full((k, k), (1.0 - spec.self_prob) / max(k - 1, 1))
    np.fill_diagonal(trans, spec.self_prob)
    cum = np.cumsum(trans, axis=1)
    states = np.empty(spec.t_len, dtype=np.int64)
    states[0] = rng.integers(k)
    draws = rng.random(spec.t_len - 1)
    for t in range(1, spec.t_len):
        states[t] = np.searchsorted(cum[states[t - 1]], draws[t - 1], side="right")
    obs = rng.normal(np.asarray(spec.means)[states], spec.std)
    return obs, states


def ingest_timeseries(
    raw,
    subsample: int = 1,
    truncate: int | None = None,
    shift: float = 0.0,
) -> np.ndarray:
    """Subsample, truncate, log-transform, and standardize a positive series.

    ``shift`` is added before the log for recordings with a known offset.
    """
    if subsample < 1:
        raise ValueError("subsample must be at least 1")
    v = np.asarray(raw, dtype=float)[::subsample]
    if truncate is not None:
        v = v[:truncate]
    v = v + shift
    bad = np.nonzero(v <= 0)[0]
    if bad.size:
        raise DataError(
            f"{bad.size} non-positive values after shift "
            f"(first at subsampled index {bad[0]})"
        )
    v = np.log(v)
    sd = v.std()
    if sd == 0 or v.size < 2:
        raise DataError("series is constant; cannot standardize")
    return (v - v.mean()) / sd


def ingest_text(
    text: str, train_len: int, test_len: int
) -> tuple[np.ndarray, np.ndarray, str]:
    """Encode characters as alphabet indices and split train/test
    contiguously. The alphabet is built from the full text."""
    if len(text) < train_len + test_len:
        raise DataError(
            f"need {train_len + test_len} characters, got {len(text)}"
        )
    alphabet = "".join(sorted(set(text)))
    lookup = {c: i for i, c in enumerate(alphabet)}
    symbols = np.fromiter((lookup[c] for c in text), dtype=np.int64, count=len(text))
    return symbols[:train_len], symbols[train_len : train_len + test_len], alphabet


def decode_symbols(symbols, alphabet: str) -> str:
    return "".join(alphabet[i] for i in symbols)


def forward_loglik(chain: ChainState, y_test) -> float:
    """Log-probability of held-out data under one posterior sample.

    Filters over the sample's active states plus one absorbing pseudo-state
    that aggregates the remainder and emits from the base measure's prior
    predictive.
    """
    y_test = np.asarray(y_test)
    k = chain.k
    init = np.log(np.append(chain.base.beta, chain.base.rem))
    trans = np.zeros((k + 1, k + 1))
    trans[:k] = chain.trans.rows
    trans[k, k] = 1.0
    with np.errstate(divide="ignore"):
        log_trans = np.log(trans)
        ll = np.column_stack(
            [
                chain.emissions.loglik_matrix(y_test),
                [chain.emissions.prior_predictive_log(v) for v in y_test],
            ]
        )
    msg = init + ll[0]
    for t in range(1, len(y_test)):
        msg = logsumexp(msg[:, None] + log_trans, axis=0) + ll[t]
    return float(logsumexp(msg))


def predictive_log_likelihood(samples, y_test) -> tuple[float, float, list]:
    """Average held-out log-probability across posterior samples.

    Returns (mean, standard deviation, per-sample values).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one posterior sample")
    y_test = np.asarray(y_test)
    if y_test.size == 0:
        raise ValueError("test observations are empty")
    values = [forward_loglik(c, y_test) for c in samples]
    return float(np.mean(values)), float(np.std(values)), values


def diagnostics(chain: ChainState, y) -> tuple[int, float]:
    """(number of states the trajectory uses, joint log-likelihood)."""
    return int(np.unique(chain.trajectory).size), joint_log_likelihood(chain, y)


@dataclass
class RunRecord:
    """One CSV row of a fit: iteration index, active-state count, joint
    log-likelihood, and wall-clock seconds for the iteration."""

    iteration: int
    K_active: int
    jll: float
    seconds: float

    def to_row(self) -> list:
        return [self.iteration, self.K_active, repr(self.jll), repr(self.seconds)]

    @classmethod
    def from_row(cls, row) -> "RunRecord":
        return cls(int(row[0]), int(row[1]), float(row[2]), float(row[3]))


def init_chain(
    y,
    emission_base,
    hyper: Hyperparams,
    init_k: int,
    rng: np.random.Generator,
) -> ChainState:
    """Starting chain for a fit: ``init_k`` lazily grown states, an i.i.d.
    uniform trajectory over them, and parameters redrawn from their
    conditionals given that trajectory (prior stick draws can carry
    floating-point-zero cells for deep-tail states, which an arbitrary
    starting trajectory must not step through)."""
    if init_k < 1:
        raise ValueError("init_k must be at least 1")
    chain = empty_chain(emission_base, hyper)
    for _ in range(init_k):
        add_state(chain, rng)
    chain.trajectory = rng.integers(0, init_k, size=len(np.asarray(y))).astype(np.int64)
    counts = transition_counts(chain.trajectory, chain.k)
    tables = resample_tables(counts, chain.base, chain.hyper, rng)
    chain.base = resample_beta(tables, chain.hyper.gamma, rng)
    chain.trans = resample_rows(counts, chain.base, chain.hyper, rng)
    chain.emissions = resample_emissions(chain.trajectory, y, chain.emissions, rng)
    chain.validate()
    return chain


def make_sweep_fn(sampler_id: str, sweep_cfg: SweepConfig):
    """Closure (chain, y, rng) -> trajectory for a sampler id."""
    if sampler_id not in SAMPLER_IDS:
        raise ValueError(f"unknown sampler {sampler_id!r}; expected {SAMPLER_IDS}")
    if sampler_id in ("pg", "pg-as"):
        cfg = SweepConfig(
            n_particles=sweep_cfg.n_particles,
            proposal=sweep_cfg.proposal,
            ancestor_sampling=(sampler_id == "pg-as"),
            allow_new_states=sweep_cfg.allow_new_states,
        )
        return lambda chain, y, rng: pg_sweep(chain, y, cfg, rng)
    if sampler_id == "beam":
        return lambda chain, y, rng: beam_sweep(chain, y, rng)
    return lambda chain, y, rng: gibbs_sweep(chain, y, rng)


def mcmc_iteration(chain: ChainState, y, sweep_fn, rng: np.random.Generator) -> None:
    """One full update: trajectory, prune, base, rows, emissions, hypers.

    Pruning runs right after the trajectory move so that every remaining
    state has tables in the base conditional.
    """
    chain.trajectory = sweep_fn(chain, y, rng)
    prune_inactive(chain)
    counts = transition_counts(chain.trajectory, chain.k)
    tables = resample_tables(counts, chain.base, chain.hyper, rng)
    chain.base = resample_beta(tables, chain.hyper.gamma, rng)
    chain.trans = resample_rows(counts, chain.base, chain.hyper, rng)
    chain.emissions = resample_emissions(chain.trajectory, y, chain.emissions, rng)
    chain.hyper = resample_hypers(chain, tables, rng)
    chain.iteration += 1


def run_mcmc(
    chain: ChainState,
    y,
    sampler_id: str,
    iterations: int,
    rng: np.random.Generator,
    sweep_cfg: SweepConfig | None = None,
    on_record=None,
):
    """Drive ``iterations`` full updates, yielding a RunRecord per iteration."""
    sweep_fn = make_sweep_fn(sampler_id, sweep_cfg or SweepConfig())
    records = []
    for _ in range(iterations):
        t0 = time.perf_counter()
        mcmc_iteration(chain, y, sweep_fn, rng)
        dt = time.perf_counter() - t0
        k_active, jll = diagnostics(chain, y)
        rec = RunRecord(chain.iteration, k_active, jll, dt)
        records.append(rec)
        if on_record is not None:
            on_record(rec, chain)
    return records


def _bench_chain(k: int, t_len: int, seed: int):
    """Dense synthetic model with a vanishing remainder, plus data drawn
    from it, for timing sweeps at a fixed state count."""
    from .distributions import NIGParams
    from .model import SharedBase, TransitionModel, make_emissions

    rng = np.random.default_rng(seed)
    rem = 1e-12
    beta = rng.dirichlet(np.ones(k)) * (1.0 - rem)
    rows = rng.dirichlet(np.ones(k), size=k) * (1.0 - rem)
    rows = np.column_stack([rows, np.full(k, rem)])
    base = NIGParams(0.0, 0.125, 2.0, 0.5)
    emissions = make_emissions(base)
    emissions.mean = np.linspace(-3.0, 3.0, k)
    emissions.var = np.full(k, 0.25)
    hyper = Hyperparams(alpha=1.0, gamma=1.0)
    states = np.empty(t_len, dtype=np.int64)
    cum = np.cumsum(rows[:, :k], axis=1)
    states[0] = rng.integers(k)
    for t in range(1, t_len):
        states[t] = min(
            int(np.searchsorted(cum[states[t - 1]], rng.random() * cum[states[t - 1], -1])),
            k - 1,
        )
    yv = rng.normal(emissions.mean[states], np.sqrt(emissions.var[states]))
    chain = ChainState(states, SharedBase(beta, rem), TransitionModel(rows), emissions, hyper)
    return chain, yv


def bench_sweep_times(
    sampler_id: str,
    k_grid,
    t_len: int = 500,
    n_particles: int = 10,
    proposal: str = "posterior",
    reps: int = 10,
    seed: int = 0,
) -> list[tuple[int, float]]:
    """Median per-sweep wall-clock over a grid of state counts.

    Model parameters are held fixed (no hyperparameter resampling) and lazy
    expansion is effectively off: the remainders carry vanishing mass.
    """
    out = []
    for k in k_grid:
        chain, yv = _bench_chain(k, t_len, seed)
        cfg = SweepConfig(
            n_particles=n_particles,
            proposal=proposal,
            ancestor_sampling=(sampler_id == "pg-as"),
            allow_new_states=False,
        )
        sweep_fn = make_sweep_fn(sampler_id, cfg)
        rng = np.random.default_rng(seed + 1)
        for _ in range(2):  # warm up (JIT, caches)
            chain.trajectory = sweep_fn(chain, yv, rng)
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            chain.trajectory = sweep_fn(chain, yv, rng)
            times.append(time.perf_counter() - t0)
        out.append((int(k), float(np.median(times))))
    return out


def fit_loglog_slope(pairs) -> float:
    """Least-squares slope of log(time) against log(K)."""
    ks = np.log([p[0] for p in pairs])
    ts = np.log([p[1] for p in pairs])
    return float(np.polyfit(ks, ts, 1)[0])
