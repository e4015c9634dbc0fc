"""Command-line front end: generate, fit, bench, eval.

Every artifact carries a schema field and the digest of the effective
configuration, and a fit is reproducible from (config, seed): reruns produce
identical iteration, state-count, and likelihood columns (wall-clock differs).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import csv
import functools
import glob as globmod
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import click
import numpy as np

from .config import ExperimentConfig, load_config
from .errors import ConfigError, DataError, NumericalError
from .experiments import (
    RECORD_FIELDS,
    bench_sweep_times,
    fit_loglog_slope,
    predictive_log_likelihood,
    run_mcmc,
)
from .experiments import init_chain
from .model import ChainState
from .particle_gibbs import SweepConfig

CHECKPOINT_SCHEMA = "ihmm-checkpoint-v1"
META_SCHEMA = "ihmm-runmeta-v1"
EVAL_SCHEMA = "ihmm-eval-v1"
BENCH_SCHEMA = "ihmm-bench-v1"

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except DataError as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except NumericalError as exc:
            click.echo(f"numerical error: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)

    return wrapper


def worker_cap() -> int:
    """Parallel fan-out width, capped by the IHMM_THREADS environment variable."""
    cap = os.environ.get("IHMM_THREADS")
    if cap is not None:
        try:
            cap = int(cap)
        except ValueError as exc:
            raise ConfigError(f"IHMM_THREADS must be an integer, got {cap!r}") from exc
        if cap < 1:
            raise ConfigError("IHMM_THREADS must be at least 1")
        return cap
    return os.cpu_count() or 1


@click.group()
def main():
    """Infinite-HMM samplers: data generation, fitting, scaling benchmarks,
    and held-out evaluation."""


def _common_options(fn):
    fn = click.option("--config", "config_path", required=True, type=str)(fn)
    fn = click.option("--seed", type=int, default=None)(fn)
    fn = click.option("--out", type=str, default=None)(fn)
    return fn


def _effective_config(config_path, seed=None, out=None, sampler=None, iterations=None):
    cfg = load_config(config_path)
    cfg.apply_overrides(seed=seed, out=out, sampler=sampler, iterations=iterations)
    return cfg


def _write_meta(cfg: ExperimentConfig, out_dir: str) -> None:
    meta = {
        "schema": META_SCHEMA,
        "config": cfg.to_dict(),
        "config_digest": cfg.digest(),
        "seed": cfg.run.seed,
        "sampler_id": cfg.sampler.id,
        "overrides": cfg.overrides,
    }
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)


@main.command()
@_common_options
@_handle_errors
def generate(config_path, seed, out):
    """Write the configured data set to the output directory."""
    cfg = _effective_config(config_path, seed=seed, out=out)
    if cfg.data.kind == "synthetic" and seed is not None:
        cfg.data.params["seed"] = seed
    obs, held_out, info = cfg.data.load()
    out_dir = cfg.run.out_dir
    os.makedirs(out_dir, exist_ok=True)
    fmt = (lambda v: repr(int(v))) if np.issubdtype(obs.dtype, np.integer) else repr
    with open(os.path.join(out_dir, "observations.txt"), "w", encoding="ascii") as fh:
        fh.write("\n".join(fmt(v) for v in obs) + "\n")
    if "truth" in info:
        with open(os.path.join(out_dir, "trajectory.txt"), "w", encoding="ascii") as fh:
            fh.write("\n".join(str(int(v)) for v in info["truth"]) + "\n")
    if held_out is not None:
        with open(os.path.join(out_dir, "heldout.txt"), "w", encoding="ascii") as fh:
            fh.write("\n".join(str(int(v)) for v in held_out) + "\n")
    _write_meta(cfg, out_dir)
    click.echo(f"wrote {len(obs)} observations to {out_dir}")


def _checkpoint_path(out_dir: str, iteration: int | None) -> str:
    name = "checkpoint_final.json" if iteration is None else f"checkpoint_{iteration:06d}.json"
    return os.path.join(out_dir, name)


def _save_checkpoint(path, chain, rng, cfg):
    doc = {
        "schema": CHECKPOINT_SCHEMA,
        "chain": chain.to_dict(),
        "rng_state": rng.bit_generator.state,
        "config_digest": cfg.digest(),
        "sampler_id": cfg.sampler.id,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def _load_checkpoint(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"checkpoint not found: {path}") from exc
    if doc.get("schema") != CHECKPOINT_SCHEMA:
        raise ConfigError(f"unsupported checkpoint schema in {path}")
    return doc


def _truncate_records(csv_path: str, max_iteration: int) -> list[list[str]]:
    if not os.path.exists(csv_path):
        return []
    with open(csv_path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    return [r for r in rows[1:] if r and int(r[0]) <= max_iteration]


def run_fit(cfg: ExperimentConfig, resume: str | None = None) -> dict:
    """Run one fit to completion; returns a small summary dict."""
    obs, _, info = cfg.data.load()
    out_dir = cfg.run.out_dir
    os.makedirs(out_dir, exist_ok=True)
    _write_meta(cfg, out_dir)
    csv_path = os.path.join(out_dir, "records.csv")

    rng = np.random.default_rng(cfg.run.seed)
    kept_rows: list[list[str]] = []
    if resume is not None:
        doc = _load_checkpoint(resume)
        if doc["config_digest"] != cfg.digest():
            raise ConfigError(
                "checkpoint was produced by a different configuration"
            )
        chain = ChainState.from_dict(doc["chain"])
        rng.bit_generator.state = doc["rng_state"]
        kept_rows = _truncate_records(csv_path, chain.iteration)
    else:
        base = cfg.model.emission_base(
            alphabet_size=len(info["alphabet"]) if "alphabet" in info else None
        )
        chain = init_chain(obs, base, cfg.model.hyperparams(), cfg.model.init_k, rng)
        if "alphabet" in info:
            chain.emissions.alphabet = info["alphabet"]

    remaining = cfg.run.iterations - chain.iteration
    sweep_cfg = SweepConfig(
        n_particles=cfg.sampler.n_particles, proposal=cfg.sampler.proposal
    )

    with open(csv_path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for row in kept_rows:
            writer.writerow(row)
        fh.flush()

        def on_record(rec, chn):
            writer.writerow(rec.to_row())
            fh.flush()
            if cfg.run.checkpoint_every and rec.iteration % cfg.run.checkpoint_every == 0:
                _save_checkpoint(
                    _checkpoint_path(out_dir, rec.iteration), chn, rng, cfg
                )

        records = run_mcmc(
            chain,
            obs,
            cfg.sampler.id,
            max(remaining, 0),
            rng,
            sweep_cfg=sweep_cfg,
            on_record=on_record,
        )
    _save_checkpoint(_checkpoint_path(out_dir, None), chain, rng, cfg)
    final_k = records[-1].K_active if records else int(np.unique(chain.trajectory).size)
    return {"out_dir": out_dir, "iterations": chain.iteration, "final_k": final_k}


def _run_fit_for_seed(config_path: str, seed: int, out_dir: str) -> dict:
    cfg = _effective_config(config_path, seed=seed, out=out_dir)
    return run_fit(cfg)


@main.command()
@_common_options
@click.option("--sampler", type=str, default=None)
@click.option("--iterations", type=int, default=None)
@click.option("--resume", type=str, default=None)
@_handle_errors
def fit(config_path, seed, out, sampler, iterations, resume):
    """Run the configured sampler, streaming per-iteration records to CSV."""
    cfg = _effective_config(
        config_path, seed=seed, out=out, sampler=sampler, iterations=iterations
    )
    if cfg.run.seeds and resume is None:
        workers = min(worker_cap(), len(cfg.run.seeds))
        jobs = [
            (config_path, s, os.path.join(cfg.run.out_dir, f"seed-{s}"))
            for s in cfg.run.seeds
        ]
        if workers == 1:
            results = [_run_fit_for_seed(*job) for job in jobs]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_run_fit_for_seed, *zip(*jobs)))
        for res in results:
            click.echo(
                f"{res['out_dir']}: {res['iterations']} iterations, "
                f"K={res['final_k']}"
            )
        return
    res = run_fit(cfg, resume=resume)
    click.echo(
        f"{res['out_dir']}: {res['iterations']} iterations, K={res['final_k']}"
    )


@main.command()
@_common_options
@_handle_errors
def bench(config_path, seed, out):
    """Time per-sweep cost over a grid of state counts and fit scaling slopes."""
    cfg = _effective_config(config_path, seed=seed, out=out)
    out_dir = cfg.run.out_dir
    os.makedirs(out_dir, exist_ok=True)
    b = cfg.bench
    rows = []
    slopes = {}
    t_ratio = {}
    for sampler_id in b.samplers:
        pairs = bench_sweep_times(
            sampler_id,
            b.k_grid,
            t_len=b.t_len,
            n_particles=b.n_particles,
            proposal=cfg.sampler.proposal,
            reps=b.reps,
            seed=cfg.run.seed,
        )
        slopes[sampler_id] = fit_loglog_slope(pairs)
        rows += [(sampler_id, k, b.t_len, b.n_particles, sec) for k, sec in pairs]
        k_mid = b.k_grid[len(b.k_grid) // 2]
        short = bench_sweep_times(
            sampler_id, [k_mid], t_len=b.t_len, n_particles=b.n_particles,
            proposal=cfg.sampler.proposal, reps=b.reps, seed=cfg.run.seed,
        )[0][1]
        long = bench_sweep_times(
            sampler_id, [k_mid], t_len=2 * b.t_len, n_particles=b.n_particles,
            proposal=cfg.sampler.proposal, reps=b.reps, seed=cfg.run.seed,
        )[0][1]
        t_ratio[sampler_id] = long / short
        rows.append((sampler_id, k_mid, 2 * b.t_len, b.n_particles, long))
    csv_path = os.path.join(out_dir, "bench.csv")
    with open(csv_path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sampler", "k", "t_len", "n_particles", "seconds_per_sweep"])
        for row in rows:
            writer.writerow(row)
    summary = {
        "schema": BENCH_SCHEMA,
        "config_digest": cfg.digest(),
        "slopes": slopes,
        "t_doubling_ratio": t_ratio,
    }
    with open(os.path.join(out_dir, "bench_summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    for sampler_id in b.samplers:
        click.echo(
            f"{sampler_id}: slope={slopes[sampler_id]:.2f} "
            f"T-doubling ratio={t_ratio[sampler_id]:.2f}"
        )


def _load_test_data(cfg: ExperimentConfig, test_path: str | None, chains):
    if test_path is None:
        _, held_out, _ = cfg.data.load()
        if held_out is None:
            raise DataError(
                "no held-out split in the config data section; pass --test"
            )
        return held_out
    emissions = chains[0].emissions
    if emissions.family == "normal":
        try:
            return np.loadtxt(test_path)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot parse {test_path}: {exc}") from exc
    try:
        with open(test_path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {test_path}: {exc}") from exc
    if text.rstrip("\n").replace("\n", "").replace(" ", "").isdigit():
        return np.loadtxt(test_path, dtype=np.int64)
    alphabet = emissions.alphabet
    if alphabet is None:
        raise DataError("checkpoint carries no alphabet; supply encoded symbols")
    missing = sorted({c for c in text if c not in alphabet})
    if missing:
        raise DataError(f"test characters outside training alphabet: {missing!r}")
    return np.fromiter((alphabet.index(c) for c in text), dtype=np.int64)


@main.command()
@_common_options
@click.option("--checkpoints", "checkpoint_glob", required=True, type=str)
@click.option("--test", "test_path", type=str, default=None)
@_handle_errors
def eval(config_path, seed, out, checkpoint_glob, test_path):
    """Score held-out data under every checkpointed posterior sample."""
    cfg = _effective_config(config_path, seed=seed, out=out)
    paths = sorted(globmod.glob(checkpoint_glob))
    if not paths:
        raise DataError(f"no checkpoints match {checkpoint_glob!r}")
    chains = [ChainState.from_dict(_load_checkpoint(p)["chain"]) for p in paths]
    y_test = _load_test_data(cfg, test_path, chains)
    mean, std, values = predictive_log_likelihood(chains, y_test)
    report = {
        "schema": EVAL_SCHEMA,
        "config_digest": cfg.digest(),
        "mean": mean,
        "std": std,
        "count": len(values),
        "per_sample": values,
    }
    out_dir = cfg.run.out_dir
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "eval.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
    click.echo(f"predictive log-likelihood {mean:.2f} +- {std:.2f} over {len(values)} samples")


if __name__ == "__main__":
    main()
