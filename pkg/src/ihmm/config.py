"""Experiment configuration: one JSON document per run.

Parsing is strict: unknown keys are rejected and messages name the offending
field, since silently ignored options are the usual way reproductions drift.
CLI flags may override scalar fields; the effective configuration and its
digest are what get recorded next to every artifact.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .distributions import DirichletParams, NIGParams
from .errors import ConfigError, DataError
from .experiments import SAMPLER_IDS, SyntheticSpec, generate_synthetic, ingest_text, ingest_timeseries
from .model import Hyperparams

__all__ = ["ExperimentConfig", "load_config", "CONFIG_SCHEMA"]

CONFIG_SCHEMA = "ihmm-config-v1"

_EMISSION_FAMILIES = ("normal", "categorical")
_DATA_KINDS = ("synthetic", "timeseries", "text")


def _take(section: dict, name: str, key: str, kind, default=..., choices=None):
    if key in section:
        value = section.pop(key)
    elif default is not ...:
        value = default
    else:
        raise ConfigError(f"{name}.{key} is required")
    if kind is float and isinstance(value, int):
        value = float(value)
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(
            f"{name}.{key} must be {getattr(kind, '__name__', kind)}, got {value!r}"
        )
    if choices is not None and value not in choices:
        raise ConfigError(f"{name}.{key} must be one of {choices}, got {value!r}")
    return value


def _reject_unknown(section: dict, name: str) -> None:
    if section:
        raise ConfigError(f"unknown key(s) in {name}: {sorted(section)}")


@dataclass
class ModelConfig:
    emission_family: str
    sticky: bool
    init_k: int
    a_gamma: float
    b_gamma: float
    a_s: float
    b_s: float
    a_kappa: float
    b_kappa: float
    nig: dict
    alphabet_size: int
    dirichlet_mass: float

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        family = _take(d, "model", "emission_family", str, choices=_EMISSION_FAMILIES)
        nig = _take(
            d, "model", "nig", dict,
            default={"mean_loc": 0.0, "mean_precision_scale": 0.125, "shape": 2.0, "rate": 0.5},
        )
        nig = dict(nig)
        nig_parsed = {
            k: _take(nig, "model.nig", k, float)
            for k in ("mean_loc", "mean_precision_scale", "shape", "rate")
        }
        _reject_unknown(nig, "model.nig")
        cfg = cls(
            emission_family=family,
            sticky=_take(d, "model", "sticky", bool, default=False),
            init_k=_take(d, "model", "init_k", int, default=10),
            a_gamma=_take(d, "model", "a_gamma", float, default=1.0),
            b_gamma=_take(d, "model", "b_gamma", float, default=1.0),
            a_s=_take(d, "model", "a_s", float, default=1.0),
            b_s=_take(d, "model", "b_s", float, default=1.0),
            a_kappa=_take(d, "model", "a_kappa", float, default=10.0),
            b_kappa=_take(d, "model", "b_kappa", float, default=10.0),
            nig=nig_parsed,
            alphabet_size=_take(d, "model", "alphabet_size", int, default=0),
            dirichlet_mass=_take(d, "model", "dirichlet_mass", float, default=1.0),
        )
        _reject_unknown(d, "model")
        if cfg.init_k < 1:
            raise ConfigError("model.init_k must be at least 1")
        return cfg

    def emission_base(self, alphabet_size: int | None = None):
        if self.emission_family == "normal":
            return NIGParams(**self.nig)
        size = alphabet_size or self.alphabet_size
        if size < 1:
            raise ConfigError(
                "model.alphabet_size must be set for categorical emissions "
                "unless the data pipeline provides an alphabet"
            )
        return DirichletParams(np.full(size, self.dirichlet_mass))

    def hyperparams(self) -> Hyperparams:
        strength = self.a_s / self.b_s
        if self.sticky:
            rho = self.a_kappa / (self.a_kappa + self.b_kappa)
            alpha, kappa = (1.0 - rho) * strength, rho * strength
        else:
            alpha, kappa = strength, 0.0
        return Hyperparams(
            alpha=alpha,
            gamma=self.a_gamma / self.b_gamma,
            kappa=kappa,
            sticky=self.sticky,
            a_gamma=self.a_gamma,
            b_gamma=self.b_gamma,
            a_s=self.a_s,
            b_s=self.b_s,
            a_kappa=self.a_kappa,
            b_kappa=self.b_kappa,
        )


@dataclass
class SamplerConfig:
    id: str
    n_particles: int
    proposal: str

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        d = dict(d)
        cfg = cls(
            id=_take(d, "sampler", "id", str, default="pg", choices=SAMPLER_IDS),
            n_particles=_take(d, "sampler", "n_particles", int, default=10),
            proposal=_take(
                d, "sampler", "proposal", str, default="posterior",
                choices=("prior", "posterior"),
            ),
        )
        _reject_unknown(d, "sampler")
        if cfg.n_particles < 2:
            raise ConfigError("sampler.n_particles must be at least 2")
        return cfg


@dataclass
class DataConfig:
    kind: str
    params: dict

    @classmethod
    def from_dict(cls, d: dict) -> "DataConfig":
        d = dict(d)
        kind = _take(d, "data", "kind", str, choices=_DATA_KINDS)
        if kind == "synthetic":
            params = {
                "k_true": _take(d, "data", "k_true", int),
                "t_len": _take(d, "data", "t_len", int),
                "self_prob": _take(d, "data", "self_prob", float),
                "means": tuple(_take(d, "data", "means", list)),
                "std": _take(d, "data", "std", float),
                "seed": _take(d, "data", "seed", int, default=0),
            }
        elif kind == "timeseries":
            params = {
                "path": _take(d, "data", "path", str),
                "subsample": _take(d, "data", "subsample", int, default=1),
                "truncate": _take(d, "data", "truncate", (int, type(None)), default=None),
                "shift": _take(d, "data", "shift", float, default=0.0),
            }
        else:
            params = {
                "path": _take(d, "data", "path", str),
                "train_len": _take(d, "data", "train_len", int),
                "test_len": _take(d, "data", "test_len", int),
            }
        _reject_unknown(d, "data")
        if "path" in params and not os.path.exists(params["path"]):
            raise ConfigError(f"data.path does not exist: {params['path']}")
        return cls(kind, params)

    def load(self):
        """Return (observations, held_out, info dict)."""
        if self.kind == "synthetic":
            try:
                spec = SyntheticSpec(**self.params)
            except ValueError as exc:
                raise ConfigError(f"data: {exc}") from exc
            obs, truth = generate_synthetic(spec)
            return obs, None, {"truth": truth}
        if self.kind == "timeseries":
            try:
                raw = np.loadtxt(self.params["path"])
            except ValueError as exc:
                raise DataError(f"cannot parse {self.params['path']}: {exc}") from exc
            obs = ingest_timeseries(
                raw,
                subsample=self.params["subsample"],
                truncate=self.params["truncate"],
                shift=self.params["shift"],
            )
            return obs, None, {}
        with open(self.params["path"], encoding="utf-8") as fh:
            text = fh.read()
        train, test, alphabet = ingest_text(
            text, self.params["train_len"], self.params["test_len"]
        )
        return train, test, {"alphabet": alphabet}


@dataclass
class RunConfig:
    iterations: int
    burn_in: int
    thinning: int
    seed: int
    out_dir: str
    checkpoint_every: int
    seeds: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        cfg = cls(
            iterations=_take(d, "run", "iterations", int),
            burn_in=_take(d, "run", "burn_in", int, default=500),
            thinning=_take(d, "run", "thinning", int, default=10),
            seed=_take(d, "run", "seed", int, default=0),
            out_dir=_take(d, "run", "out_dir", str, default="runs/out"),
            checkpoint_every=_take(d, "run", "checkpoint_every", int, default=200),
            seeds=list(_take(d, "run", "seeds", list, default=[])),
        )
        _reject_unknown(d, "run")
        if cfg.iterations < 1:
            raise ConfigError("run.iterations must be at least 1")
        return cfg


@dataclass
class BenchConfig:
    k_grid: list
    t_len: int
    n_particles: int
    reps: int
    samplers: list

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        d = dict(d)
        cfg = cls(
            k_grid=list(_take(d, "bench", "k_grid", list, default=[5, 10, 20, 40, 80])),
            t_len=_take(d, "bench", "t_len", int, default=500),
            n_particles=_take(d, "bench", "n_particles", int, default=10),
            reps=_take(d, "bench", "reps", int, default=10),
            samplers=list(
                _take(d, "bench", "samplers", list, default=["pg", "beam", "gibbs"])
            ),
        )
        _reject_unknown(d, "bench")
        for s in cfg.samplers:
            if s not in SAMPLER_IDS:
                raise ConfigError(f"bench.samplers contains unknown sampler {s!r}")
        return cfg


@dataclass
class ExperimentConfig:
    model: ModelConfig
    sampler: SamplerConfig
    data: DataConfig
    run: RunConfig
    bench: BenchConfig
    overrides: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        for key in ("model", "sampler", "data", "run"):
            if key not in d:
                raise ConfigError(f"missing section {key!r}")
        cfg = cls(
            model=ModelConfig.from_dict(_take(d, "config", "model", dict)),
            sampler=SamplerConfig.from_dict(_take(d, "config", "sampler", dict)),
            data=DataConfig.from_dict(_take(d, "config", "data", dict)),
            run=RunConfig.from_dict(_take(d, "config", "run", dict)),
            bench=BenchConfig.from_dict(_take(d, "config", "bench", dict, default={})),
        )
        _reject_unknown(d, "config")
        return cfg

    def apply_overrides(self, **kwargs) -> None:
        """CLI flags win over the document; what changed is recorded."""
        mapping = {
            "seed": (self.run, "seed"),
            "out": (self.run, "out_dir"),
            "iterations": (self.run, "iterations"),
            "sampler": (self.sampler, "id"),
        }
        for key, value in kwargs.items():
            if value is None:
                continue
            target, attr = mapping[key]
            self.overrides[f"{key}"] = value
            setattr(target, attr, value)
        if self.sampler.id not in SAMPLER_IDS:
            raise ConfigError(f"unknown sampler {self.sampler.id!r}")

    def to_dict(self) -> dict:
        return {
            "schema": CONFIG_SCHEMA,
            "model": {
                "emission_family": self.model.emission_family,
                "sticky": self.model.sticky,
                "init_k": self.model.init_k,
                "a_gamma": self.model.a_gamma,
                "b_gamma": self.model.b_gamma,
                "a_s": self.model.a_s,
                "b_s": self.model.b_s,
                "a_kappa": self.model.a_kappa,
                "b_kappa": self.model.b_kappa,
                "nig": self.model.nig,
                "alphabet_size": self.model.alphabet_size,
                "dirichlet_mass": self.model.dirichlet_mass,
            },
            "sampler": {
                "id": self.sampler.id,
                "n_particles": self.sampler.n_particles,
                "proposal": self.sampler.proposal,
            },
            "data": {"kind": self.data.kind, **self.data.params},
            "run": {
                "iterations": self.run.iterations,
                "burn_in": self.run.burn_in,
                "thinning": self.run.thinning,
                "seed": self.run.seed,
                "out_dir": self.run.out_dir,
                "checkpoint_every": self.run.checkpoint_every,
                "seeds": self.run.seeds,
            },
            "bench": {
                "k_grid": self.bench.k_grid,
                "t_len": self.bench.t_len,
                "n_particles": self.bench.n_particles,
                "reps": self.bench.reps,
                "samplers": self.bench.samplers,
            },
        }

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a JSON object")
    raw.pop("schema", None)
    return ExperimentConfig.from_dict(raw)
