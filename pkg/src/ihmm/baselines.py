"""Beam-sampling and single-site Gibbs baselines for trajectory resampling.

Both operate on the same lazily instantiated chain as the particle Gibbs
sweep. The beam sampler draws one slice variable per time step under the
incumbent transition probability, grows the model until no admissible
transition can hide in a remainder, then runs an exact forward filter and
backward sampler over the sliced finite model. The filter is the quadratic
part: each step touches every (state, state) pair, so dense models cost
K^2 per step, and it is compiled with numba to keep that cost honest at
small K.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .distributions import sample_categorical_log
from .errors import NumericalError
from .model import ChainState, add_state

__all__ = ["beam_sweep", "gibbs_sweep"]

_MAX_EXPANSIONS = 10_000
# Expansion never chases slice variables below this: unrepresented mass under
# it is beyond any statistical resolution, and floating-point stick breaking
# cannot meaningfully subdivide it anyway.
_SLICE_FLOOR = 1e-18


@njit(cache=True)
def _beam_filter_sample(pi, logpi, beta0, logbeta0, loglik, u, unif, out):
    """Sliced forward filter and backward sampler, all in log space.

    Returns 0 on success, -(t + 1) if time step t has no admissible state.
    """
    t_len, k = loglik.shape
    logm = np.empty((t_len, k))
    mx = -np.inf
    for j in range(k):
        v = logbeta0[j] + loglik[0, j] if beta0[j] > u[0] else -np.inf
        logm[0, j] = v
        if v > mx:
            mx = v
    if mx == -np.inf:
        return -1
    for j in range(k):
        logm[0, j] -= mx
    for t in range(1, t_len):
        ut = u[t]
        mx = -np.inf
        for j2 in range(k):
            m = -np.inf
            for j1 in range(k):
                if pi[j1, j2] > ut:
                    v = logm[t - 1, j1] + logpi[j1, j2]
                    if v > m:
                        m = v
            if m == -np.inf:
                logm[t, j2] = -np.inf
                continue
            s = 0.0
            for j1 in range(k):
                if pi[j1, j2] > ut:
                    s += np.exp(logm[t - 1, j1] + logpi[j1, j2] - m)
            v = m + np.log(s) + loglik[t, j2]
            logm[t, j2] = v
            if v > mx:
                mx = v
        if mx == -np.inf:
            return -(t + 1)
        for j2 in range(k):
            logm[t, j2] -= mx
    w = np.empty(k)
    for t in range(t_len - 1, -1, -1):
        mx = -np.inf
        for j in range(k):
            v = logm[t, j]
            if t < t_len - 1:
                nxt = out[t + 1]
                v = v + logpi[j, nxt] if pi[j, nxt] > u[t + 1] else -np.inf
            w[j] = v
            if v > mx:
                mx = v
        if mx == -np.inf:
            return -(t + 1)
        tot = 0.0
        for j in range(k):
            w[j] = np.exp(w[j] - mx)
            tot += w[j]
        r = unif[t] * tot
        acc = 0.0
        idx = k - 1
        for j in range(k):
            acc += w[j]
            if r < acc:
                idx = j
                break
        out[t] = idx
    return 0


def beam_sweep(
    chain: ChainState,
    y: np.ndarray,
    rng: np.random.Generator,
    u_scale: float | None = None,
    return_u: bool = False,
):
    """One beam-sampling pass; returns a freshly sampled trajectory.

    Slice variables are uniform on (0, incumbent transition probability], so
    the incumbent trajectory always survives slicing. ``u_scale`` is a test
    hook that replaces the uniform draw with a fixed fraction of each bound
    (tiny values make the filter exact over all active transitions).
    """
    y = np.asarray(y)
    t_len = len(y)
    incumbent = chain.trajectory
    if incumbent.size != t_len:
        raise ValueError("observation length does not match the trajectory")
    bounds = np.empty(t_len)
    bounds[0] = chain.base.beta[incumbent[0]]
    if t_len > 1:
        bounds[1:] = chain.trans.rows[incumbent[:-1], incumbent[1:]]
    if u_scale is None:
        u = rng.uniform(0.0, bounds)
    else:
        u = bounds * u_scale
    u_min = u.min()
    if u_min <= 0:
        raise NumericalError("slice variable collapsed to zero")

    target = max(u_min, _SLICE_FLOOR)
    expansions = 0
    while max(chain.base.rem, chain.trans.rows[:, -1].max(initial=0.0)) >= target:
        add_state(chain, rng)
        expansions += 1
        if expansions > _MAX_EXPANSIONS:
            raise NumericalError("beam expansion failed to terminate")

    k = chain.k
    pi = np.ascontiguousarray(chain.trans.rows[:, :k])
    beta0 = chain.base.beta
    loglik = np.ascontiguousarray(chain.emissions.loglik_matrix(y))
    unif = rng.random(t_len)
    out = np.empty(t_len, dtype=np.int64)
    with np.errstate(divide="ignore"):
        status = _beam_filter_sample(
            pi, np.log(pi), beta0, np.log(beta0), loglik, u, unif, out
        )
    if status != 0:
        raise NumericalError(
            f"beam filter found no admissible state at t={-status - 1}"
        )
    if return_u:
        return out, u
    return out


def gibbs_sweep(
    chain: ChainState, y: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """One single-site Gibbs pass; returns a freshly sampled trajectory.

    Each position is redrawn from its Markov blanket under the instantiated
    transition rows and emission parameters, plus one aggregate cell for a
    fresh state scored with the base measure's prior predictive (the fresh
    state's outgoing probability collapses to the shared base weight).
    """
    y = np.asarray(y)
    t_len = len(y)
    traj = chain.trajectory.copy()
    if traj.size != t_len:
        raise ValueError("observation length does not match the trajectory")
    prior_pred = chain.emissions.prior_predictive_many(y)
    for t in range(t_len):
        k = chain.k
        rows = chain.trans.rows
        beta = chain.base.beta
        log_f = chain.emissions.log_lik(y[t])
        log_new = prior_pred[t]
        with np.errstate(divide="ignore"):
            if t == 0:
                log_in = np.log(beta)
                log_in_new = np.log(chain.base.rem)
            else:
                prev = traj[t - 1]
                log_in = np.log(rows[prev, :k])
                log_in_new = np.log(rows[prev, k])
            if t == t_len - 1:
                log_out = np.zeros(k)
                log_out_new = 0.0
            else:
                nxt = traj[t + 1]
                log_out = np.log(rows[:k, nxt])
                log_out_new = np.log(beta[nxt])
        cells = np.append(
            log_in + log_out + log_f, log_in_new + log_out_new + log_new
        )
        idx = sample_categorical_log(cells, rng)
        if idx == k:
            idx = add_state(chain, rng)
        traj[t] = idx
    return traj
