"""Infinite-state particle Gibbs inference for HDP-HMMs.

Samplers over a lazily instantiated infinite hidden Markov model: particle
Gibbs with ancestor sampling and a posterior-tilted proposal, beam sampling,
and single-site Gibbs, with full hyperparameter resampling and a benchmark
harness for the per-sweep cost in the number of active states.
"""

from .distributions import (
    DirichletParams,
    NIGParams,
    GaussianStats,
    DiscreteStats,
    sample_antoniak,
    sample_dirichlet,
    posterior_predictive,
    posterior_sample_phi,
)
from .model import (
    ChainState,
    Hyperparams,
    SharedBase,
    TransitionModel,
    add_state,
    extend_beta,
    extend_rows,
    new_row,
    joint_log_likelihood,
    make_emissions,
)
from .particle_gibbs import SweepConfig, pg_sweep, propose, step_weight, ancestor_resample
from .baselines import beam_sweep, gibbs_sweep
from .resampling import (
    TableCounts,
    TransitionCounts,
    canonical_relabel,
    prune_inactive,
    resample_beta,
    resample_emissions,
    resample_hypers,
    resample_rows,
    resample_tables,
    transition_counts,
)
from .experiments import (
    RunRecord,
    SyntheticSpec,
    diagnostics,
    generate_synthetic,
    ingest_text,
    ingest_timeseries,
    init_chain,
    mcmc_iteration,
    predictive_log_likelihood,
    run_mcmc,
)

__version__ = "0.1.0"
