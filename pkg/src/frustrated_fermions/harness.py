"""Ensemble execution: configuration, steady-state sampling and aggregation.

A trajectory is evolved to ``t_equil = t_equil_factor * L^2`` and then sampled
every ``sample_stride`` time units up to ``t_equil + t_avg_window``. Its
time-window means count as one independent sample for the ensemble statistics.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import Evolver, NoiseStream, trajectory_seeds
from .errors import ConsistencyError, DegeneracyError, EnsembleFailure, ParameterError, TrajectoryAborted
from .observables import ObservableRecord, measure
from .state import ModelParams, correlation_matrix, init_random_occupation

ALL_OBSERVABLES = ObservableRecord.SCALARS + ObservableRecord.VECTORS
#: fraction of aborted trajectories above which an ensemble fails
MAX_ABORT_FRACTION = 0.01

CONFIG_KEYS = (
    "L", "N", "J", "gamma", "theta_over_pi", "dt", "measurement_only", "n_traj", "master_seed",
    "t_equil_factor", "t_avg_window", "sample_stride", "observables", "output_path",
)


@dataclass(frozen=True)
class RunConfig:
    L: int
    N: int | None = None
    J: float = 1.0
    gamma: float = 1.0
    theta_over_pi: float = 1.0
    dt: float | None = None
    measurement_only: bool = False
    n_traj: int = 1
    master_seed: int = 0
    t_equil_factor: float = 1.0
    t_avg_window: float = 200.0
    sample_stride: float = 1.0
    observables: tuple = ALL_OBSERVABLES
    output_path: str | None = None

    def __post_init__(self):
        obs = (self.observables,) if isinstance(self.observables, str) else tuple(self.observables)
        unknown = set(obs) - set(ALL_OBSERVABLES)
        if unknown:
            raise ParameterError(f"unknown observables {sorted(unknown)}")
        object.__setattr__(self, "observables", tuple(o for o in ALL_OBSERVABLES if o in obs))
        if int(self.n_traj) != self.n_traj or self.n_traj < 1:
            raise ParameterError(f"n_traj must be a positive integer, got {self.n_traj}")
        if self.t_avg_window < 0:
            raise ParameterError(f"t_avg_window must be >= 0, got {self.t_avg_window}")
        if not self.sample_stride > 0:
            raise ParameterError(f"sample_stride must be > 0, got {self.sample_stride}")
        if self.t_equil_factor < 0:
            raise ParameterError(f"t_equil_factor must be >= 0, got {self.t_equil_factor}")
        # validates the physical parameters; N and dt stay None when defaulted
        self.params

    @property
    def params(self) -> ModelParams:
        return ModelParams(
            L=self.L, N=self.N, J=self.J, gamma=self.gamma, theta=self.theta_over_pi * math.pi,
            dt=self.dt, measurement_only=self.measurement_only,
        )

    @property
    def theta(self) -> float:
        return self.theta_over_pi * math.pi

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(CONFIG_KEYS)
        if unknown:
            raise ParameterError(f"unknown config keys {sorted(unknown)}")
        if "L" not in d:
            raise ParameterError("config must define L")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParameterError(f"invalid JSON in {path}: {exc}") from exc
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["observables"] = list(self.observables)
        return d

    def with_(self, **changes) -> "RunConfig":
        d = self.to_dict()
        d.update(changes)
        return RunConfig.from_dict(d)

    def config_hash(self) -> str:
        """SHA-256 of everything that affects the numbers (``output_path`` excluded)."""
        d = self.to_dict()
        d.pop("output_path")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # sampling schedule in integer steps, so sample times are exact multiples of dt
    @property
    def equil_steps(self) -> int:
        return int(round(self.t_equil_factor * self.L**2 / self.params.dt))

    @property
    def stride_steps(self) -> int:
        return max(1, int(round(self.sample_stride / self.params.dt)))

    @property
    def n_samples(self) -> int:
        return int(math.floor(self.t_avg_window / self.sample_stride + 1e-9)) + 1


def run_trajectory(config: RunConfig, trajectory_id: int) -> list[ObservableRecord]:
    """Evolve one trajectory and return its observables at every sampling time."""
    params = config.params
    init_seed, _ = trajectory_seeds(config.master_seed, trajectory_id)
    state = init_random_occupation(params, init_seed)
    evolver = Evolver(params, NoiseStream(config.master_seed, trajectory_id, params.L))
    records = []
    step = 0
    try:
        for k in range(config.n_samples):
            n = config.equil_steps if k == 0 else config.stride_steps
            evolver.advance(state, n)
            step += n
            t = step * params.dt
            state.t = t
            records.append(measure(correlation_matrix(state), t))
    except (DegeneracyError, ConsistencyError, FloatingPointError) as exc:
        raise TrajectoryAborted(trajectory_id, step, str(exc)) from exc
    return records


@dataclass
class TrajectorySummary:
    """Time-window means of one trajectory."""

    trajectory_id: int
    n_samples: int
    means: dict

    def to_dict(self) -> dict:
        return {
            "trajectory_id": self.trajectory_id,
            "n_samples": self.n_samples,
            "means": {k: _jsonable(v) for k, v in self.means.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectorySummary":
        return cls(d["trajectory_id"], d["n_samples"], {k: _from_jsonable(v) for k, v in d["means"].items()})


def summarize(records: list[ObservableRecord], trajectory_id: int, observables=ALL_OBSERVABLES) -> TrajectorySummary:
    means = {}
    for name in observables:
        vals = np.array([getattr(r, name) for r in records])
        m = vals.mean(axis=0)
        means[name] = float(m) if np.ndim(m) == 0 else m
    return TrajectorySummary(trajectory_id, len(records), means)


def _jsonable(v):
    return v.tolist() if isinstance(v, np.ndarray) else v


def _from_jsonable(v):
    return np.array(v, dtype=float) if isinstance(v, list) else v


def _run_unit(unit):
    # worker entry point: (config dict, trajectory id) -> summary or abort info
    cfg_dict, tid = unit
    config = RunConfig.from_dict(cfg_dict)
    try:
        return summarize(run_trajectory(config, tid), tid, config.observables)
    except TrajectoryAborted as exc:
        return {"trajectory_id": exc.trajectory_id, "step": exc.step, "diagnostic": exc.diagnostic}


@dataclass
class EnsembleResult:
    """Ensemble means and standard errors over trajectories.

    ``errors`` are ``std(ddof=1) / sqrt(n)`` over per-trajectory window
    means; with a single trajectory they are NaN (undefined).
    """

    config: dict
    n_traj: int
    n_samples: int
    means: dict
    errors: dict
    aborted: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    trajectories: list = field(default_factory=list, repr=False)

    @classmethod
    def aggregate(cls, config: RunConfig, summaries: list[TrajectorySummary], aborted=()) -> "EnsembleResult":
        summaries = sorted(summaries, key=lambda s: s.trajectory_id)
        n = len(summaries)
        if n == 0:
            raise EnsembleFailure("no trajectory completed")
        means, errors = {}, {}
        for name in config.observables:
            vals = np.array([s.means[name] for s in summaries])
            m = vals.mean(axis=0)
            e = vals.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(np.shape(m), np.nan)
            means[name] = float(m) if np.ndim(m) == 0 else m
            errors[name] = float(e) if np.ndim(e) == 0 else e
        return cls(
            config=config.to_dict(),
            n_traj=n,
            n_samples=summaries[0].n_samples,
            means=means,
            errors=errors,
            aborted=sorted(aborted, key=lambda a: a["trajectory_id"]),
            provenance={
                "config_hash": config.config_hash(),
                "master_seed": config.master_seed,
                "code_version": __version__,
            },
            trajectories=summaries,
        )

    def merge(self, other: "EnsembleResult") -> "EnsembleResult":
        """Pool the trajectories of two ensembles of the same physical point."""
        config = RunConfig.from_dict(self.config)
        return EnsembleResult.aggregate(config, self.trajectories + other.trajectories, self.aborted + other.aborted)

    @property
    def run_config(self) -> RunConfig:
        return RunConfig.from_dict(self.config)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "n_traj": self.n_traj,
            "n_samples": self.n_samples,
            "means": {k: _jsonable(v) for k, v in self.means.items()},
            "errors": {k: _jsonable(v) for k, v in self.errors.items()},
            "aborted": self.aborted,
            "provenance": self.provenance,
            "trajectories": [s.to_dict() for s in self.trajectories],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleResult":
        return cls(
            config=d["config"],
            n_traj=d["n_traj"],
            n_samples=d["n_samples"],
            means={k: _from_jsonable(v) for k, v in d["means"].items()},
            errors={k: _from_jsonable(v) for k, v in d["errors"].items()},
            aborted=d.get("aborted", []),
            provenance=d.get("provenance", {}),
            trajectories=[TrajectorySummary.from_dict(s) for s in d.get("trajectories", [])],
        )

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_json(cls, path) -> "EnsembleResult":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def same_numbers(self, other: "EnsembleResult") -> bool:
        """Bitwise equality of all means and errors (NaN equal to NaN)."""
        if self.means.keys() != other.means.keys() or self.n_traj != other.n_traj:
            return False
        return all(
            np.array_equal(self.means[k], other.means[k], equal_nan=True)
            and np.array_equal(self.errors[k], other.errors[k], equal_nan=True)
            for k in self.means
        )


def _execute(units: list, workers: int | None):
    if workers is None:
        workers = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    if workers <= 1 or len(units) <= 1:
        return [_run_unit(u) for u in units]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_unit, units, chunksize=1))


def _collect(config: RunConfig, outputs: list) -> EnsembleResult:
    summaries = [o for o in outputs if isinstance(o, TrajectorySummary)]
    aborted = [o for o in outputs if isinstance(o, dict)]
    if len(aborted) > MAX_ABORT_FRACTION * config.n_traj:
        raise EnsembleFailure(
            f"{len(aborted)} of {config.n_traj} trajectories aborted; first: {aborted[0]['diagnostic']}"
        )
    return EnsembleResult.aggregate(config, summaries, aborted)


def run_ensemble(config: RunConfig, workers: int | None = None) -> EnsembleResult:
    """Run ``config.n_traj`` trajectories (ids ``0..n_traj-1``) and aggregate them."""
    units = [(config.to_dict(), tid) for tid in range(config.n_traj)]
    return _collect(config, _execute(units, workers))


def sweep_configs(base: RunConfig, L=None, gamma=None, theta_over_pi=None) -> list[RunConfig]:
    """Cartesian grid over L, gamma and theta/pi around ``base``."""
    Ls = [base.L] if L is None else list(L)
    gs = [base.gamma] if gamma is None else list(gamma)
    ts = [base.theta_over_pi] if theta_over_pi is None else list(theta_over_pi)
    out = []
    for l in Ls:
        for g in gs:
            for t in ts:
                out.append(base.with_(L=l, gamma=g, theta_over_pi=t))
    return out


def run_sweep(configs: list[RunConfig], workers: int | None = None) -> list[EnsembleResult]:
    """All trajectories of all grid points share one work queue, largest systems first."""
    units = [(i, tid) for i, c in enumerate(configs) for tid in range(c.n_traj)]
    units.sort(key=lambda u: (-configs[u[0]].L, u))
    outputs = _execute([(configs[i].to_dict(), tid) for i, tid in units], workers)
    grouped: dict[int, list] = {i: [] for i in range(len(configs))}
    for (i, _), o in zip(units, outputs):
        grouped[i].append(o)
    return [_collect(configs[i], grouped[i]) for i in range(len(configs))]


def cached_ensemble(config: RunConfig, cache_dir, workers: int | None = None) -> EnsembleResult:
    """Run an ensemble, or load it from ``cache_dir`` if the same config and code version ran before."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"{config.config_hash()[:16]}.json"
    if path.exists():
        res = EnsembleResult.from_json(path)
        if res.provenance.get("code_version") == __version__ and res.provenance.get("config_hash") == config.config_hash():
            return res
    res = run_ensemble(config, workers)
    tmp = path.with_suffix(".tmp")
    res.to_json(tmp)
    tmp.replace(path)
    return res


def config_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(RunConfig))
