"""Experiment orchestration: configs, the simulation loop, metrics and reports."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import dynamics
from .controller import ControllerConfig, ControllerState, Phase, PController, SPController
from .errors import IntegrationError, NumericalError, OptimizationError
from .gp import GPModel, optimize_hyperparameters
from .kernels import KernelSpec
from .lognormal import LogNormalModel

log = logging.getLogger(__name__)

CSV_HEADER = ["t", "x1", "x2", "u", "phase", "mean_a", "var_a", "mean_b", "var_b"]
CONVERGENCE_RADIUS = 0.05
CONVERGENCE_WINDOW = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulated run. Field names follow the JSON config files."""

    name: str
    plant: dict
    delta_u: float
    delta_l: float
    theta: tuple[float, float]
    x0: tuple[float, ...]
    xi: tuple[float, ...]
    w: tuple[float, float]
    t_f: float
    kernel_a: KernelSpec
    kernel_b: KernelSpec
    controller: str = "sp"
    gain: float = 1.0
    u_probe: float = 1.0
    probe_budget_end: float | None = None
    noise_a: float = 0.01
    noise_log_b: float = 0.1
    lognormal_noise_mode: str = "fixed"
    derivative_noise: float | None = None
    observe_velocity: bool = True
    hyper_mode: str = "fixed"
    refit_min_points: int = 3
    restarts: int = 3
    seed: int = 0
    tol: float = dynamics.DEFAULT_TOL
    model_in: str | None = None
    model_out: str | None = None
    pilot: str | None = None  # config whose SP1 run supplies data for hyper_mode "optimize"

    def __post_init__(self):
        for name in ("theta", "x0", "xi", "w"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.t_f < 0:
            raise ValueError("t_f must be nonnegative")
        if self.controller not in ("sp", "p"):
            raise ValueError(f"controller must be 'sp' or 'p', got {self.controller!r}")
        if self.hyper_mode not in ("fixed", "optimize"):
            raise ValueError(f"hyper_mode must be 'fixed' or 'optimize', got {self.hyper_mode!r}")
        if len(self.x0) != len(self.xi):
            raise ValueError("x0 and xi must have the same length")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["kernel_a"] = KernelSpec.from_dict(d["kernel_a"])
        d["kernel_b"] = KernelSpec.from_dict(d["kernel_b"])
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel_a"] = self.kernel_a.to_dict()
        d["kernel_b"] = self.kernel_b.to_dict()
        for k in ("theta", "x0", "xi", "w"):
            d[k] = list(d[k])
        return d

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def controller_config(self) -> ControllerConfig:
        return ControllerConfig(
            delta_u=self.delta_u,
            delta_lambda=self.delta_l,
            theta_var_a=self.theta[0],
            theta_var_b=self.theta[1],
            w1=self.w[0],
            w2=self.w[1],
            xi=self.xi,
            kernel_a=self.kernel_a,
            kernel_b=self.kernel_b,
            u_probe=self.u_probe,
            probe_budget_end=math.inf if self.probe_budget_end is None else self.probe_budget_end,
            noise_a=self.noise_a,
            noise_log_b=self.noise_log_b,
            lognormal_noise_mode=self.lognormal_noise_mode,
            derivative_noise=self.derivative_noise,
            observe_velocity=self.observe_velocity,
        )


@dataclass
class RunRecord:
    name: str
    controller: str
    delta_u: float
    xi: np.ndarray
    t: np.ndarray
    x: np.ndarray        # (N, 2n) state at each controller call
    u: np.ndarray        # (N, m) control held over [t, t + delta_u)
    phase: list[str]
    stats: np.ndarray    # (N, 4) mean_a, var_a, mean_b, var_b
    terminal: np.ndarray
    complete: bool = True
    n_data_a: int = 0
    n_data_b: int = 0
    counters: dict = field(default_factory=dict)
    state: ControllerState | None = None

    def rows(self) -> list[tuple]:
        return [
            (float(t), float(x[0]), float(x[1]), float(u[0]), ph, *map(float, s))
            for t, x, u, ph, s in zip(self.t, self.x, self.u, self.phase, self.stats)
        ]


# ---------------------------------------------------------------------------
# model persistence


def save_models(path: str | os.PathLike, state: ControllerState) -> None:
    doc = {
        "model_a": [m.to_dict() for m in state.model_a],
        "model_b": [m.to_dict() for m in state.model_b],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_models(path: str | os.PathLike) -> tuple[list[GPModel], list[LogNormalModel]]:
    with open(path) as fh:
        doc = json.load(fh)
    return ([GPModel.from_dict(d) for d in doc["model_a"]],
            [LogNormalModel.from_dict(d) for d in doc["model_b"]])


def initial_state(config: ExperimentConfig, model_in: str | None = None) -> ControllerState:
    """Empty models, or persisted data re-read under the config's kernels."""
    ccfg = config.controller_config()
    path = model_in or config.model_in
    if not path:
        return ControllerState.initial(ccfg)
    models_a, models_b = load_models(path)
    models_a = [m.with_kernel(config.kernel_a) for m in models_a]
    models_b = [LogNormalModel(m.log_gp.with_kernel(config.kernel_b), config.lognormal_noise_mode,
                               config.noise_log_b) for m in models_b]
    return ControllerState.initial(ccfg, models_a, models_b)


# ---------------------------------------------------------------------------
# simulation


def _refit(config: ExperimentConfig, state: ControllerState, before: dict) -> ControllerState:
    """Online marginal-likelihood refit of any model that just gained data."""
    models_a, models_b = list(state.model_a), list(state.model_b)
    if state.counters["admitted_a"] != before["admitted_a"]:
        for i, m in enumerate(models_a):
            if len(m) >= config.refit_min_points:
                models_a[i] = optimize_hyperparameters(m, restarts=config.restarts, seed=config.seed)
    if state.counters["admitted_b"] != before["admitted_b"]:
        for i, m in enumerate(models_b):
            if len(m) >= config.refit_min_points:
                fitted = optimize_hyperparameters(m.log_gp, restarts=config.restarts, seed=config.seed)
                models_b[i] = replace(m, log_gp=fitted)
    return replace(state, model_a=tuple(models_a), model_b=tuple(models_b))


def _observe(config: ExperimentConfig, x: np.ndarray, q_prev: np.ndarray | None) -> np.ndarray:
    if config.observe_velocity or q_prev is None:
        return x
    n = x.size // 2
    return np.concatenate([x[:n], (x[:n] - q_prev) / config.delta_u])


def run(config: ExperimentConfig, model_in: str | None = None,
        model_out: str | None = None) -> RunRecord:
    """Simulate ``config`` from ``x0`` to ``t_f`` under zero-order hold.

    Baseline P controllers act in continuous time; their ``u`` column holds
    the feedback torque sampled at each controller call.
    """
    plant = dynamics.make_plant(config.plant)
    xi = np.asarray(config.xi, float)
    x = np.asarray(config.x0, float)
    steps = int(round(config.t_f / config.delta_u))
    if config.controller == "p":
        policy = PController(xi, config.gain)
    else:
        policy = SPController(config.controller_config(), initial_state(config, model_in))

    ts, xs, us, phases, stats = [], [], [], [], []
    complete = True
    q_prev = None
    for k in range(steps):
        t = k * config.delta_u
        obs = _observe(config, x, q_prev)
        q_prev = x[: plant.n].copy()
        if isinstance(policy, SPController):
            before = dict(policy.state.counters)
            u = policy(t, obs)
            if config.hyper_mode == "optimize":
                try:
                    policy.state = _refit(config, policy.state, before)
                except (NumericalError, OptimizationError) as exc:
                    log.warning("online refit failed at t=%.2f: %s", t, exc)
            feedback = None
        else:
            u = policy(t, x)
            feedback = (config.gain, xi)
        ts.append(t)
        xs.append(x)
        us.append(np.atleast_1d(u).astype(float))
        phases.append(Phase(policy.phase).value)
        stats.append(policy.stats)
        try:
            hold = np.zeros(plant.m) if feedback else u
            x = dynamics.integrate_hold(plant, x, hold, config.delta_u, config.tol, feedback=feedback)
        except IntegrationError as exc:
            log.error("%s: integration failed at t=%.3f: %s", config.name, t, exc)
            complete = False
            break

    state = policy.state if isinstance(policy, SPController) else None
    record = RunRecord(
        name=config.name,
        controller=config.controller if config.controller == "sp" else f"p{config.gain:g}",
        delta_u=config.delta_u,
        xi=xi,
        t=np.array(ts),
        x=np.array(xs).reshape(len(ts), xi.size),
        u=np.array(us).reshape(len(ts), plant.m),
        phase=phases,
        stats=np.array(stats, dtype=float).reshape(len(ts), 4),
        terminal=x,
        complete=complete,
        n_data_a=state.n_data_a if state else 0,
        n_data_b=state.n_data_b if state else 0,
        counters=dict(state.counters) if state else {},
        state=state,
    )
    out = model_out or config.model_out
    if out and state is not None:
        save_models(out, state)
    return record


# ---------------------------------------------------------------------------
# metrics


def metrics(record: RunRecord) -> dict:
    """Rectangle-rule energy and squared error over the control period."""
    du = record.delta_u
    energy = float(np.sum(record.u ** 2) * du) if len(record.t) else 0.0
    error = float(np.sum((record.x - record.xi) ** 2) * du) if len(record.t) else 0.0
    return {
        "name": record.name,
        "controller": record.controller,
        "energy": energy,
        "error": error,
        "n_data_a": record.n_data_a,
        "n_data_b": record.n_data_b,
        "converged": converged(record),
        "complete": record.complete,
        "terminal": [float(v) for v in record.terminal],
    }


def converged(record: RunRecord, radius: float = CONVERGENCE_RADIUS,
              window: float = CONVERGENCE_WINDOW) -> bool:
    """Mean distance to the goal over the final ``window`` seconds is below ``radius``."""
    if not record.complete or not len(record.t):
        return False
    t_end = record.t[-1] + record.delta_u
    sel = record.t >= t_end - window - 1e-9
    dist = np.linalg.norm(record.x[sel] - record.xi, axis=1)
    return bool(np.mean(dist) < radius)


def metrics_from_rows(rows: Sequence[dict], xi: Sequence[float]) -> dict:
    """Energy and error from parsed trajectory CSV rows."""
    t = np.array([float(r["t"]) for r in rows])
    du = float(np.median(np.diff(t))) if t.size > 1 else 0.0
    u = np.array([float(r["u"]) for r in rows])
    x = np.array([[float(r["x1"]), float(r["x2"])] for r in rows])
    return {
        "energy": float(np.sum(u ** 2) * du),
        "error": float(np.sum((x - np.asarray(xi, float)) ** 2) * du),
    }


# ---------------------------------------------------------------------------
# hyperparameter selection


def optimize_mode(config: ExperimentConfig, pilot: str | os.PathLike | tuple,
                  restarts: int | None = None) -> ExperimentConfig:
    """Replace the config's kernels by marginal-likelihood optima on pilot data.

    ``pilot`` is a persisted model file or a ``(models_a, models_b)`` pair.
    A process with fewer than two pilot points keeps its kernel.
    """
    models_a, models_b = load_models(pilot) if isinstance(pilot, (str, os.PathLike)) else pilot
    restarts = config.restarts if restarts is None else restarts
    model_a = models_a[0].with_kernel(config.kernel_a)
    if len(model_a) == 0:
        raise ValueError("pilot data holds no observations of the drift")
    kernel_a = config.kernel_a
    if len(model_a) >= 2:
        kernel_a = optimize_hyperparameters(model_a, restarts=restarts, seed=config.seed).kernel
    else:
        log.warning("only one drift observation in the pilot data; kernel_a unchanged")
    kernel_b = config.kernel_b
    log_gp = models_b[0].log_gp.with_kernel(config.kernel_b) if models_b else None
    if log_gp is not None and len(log_gp) >= 2:
        kernel_b = optimize_hyperparameters(log_gp, restarts=restarts, seed=config.seed).kernel
    else:
        log.warning("fewer than two input-function observations in the pilot data; kernel_b unchanged")
    return replace(config, kernel_a=kernel_a, kernel_b=kernel_b)


# ---------------------------------------------------------------------------
# reporting


def write_trajectory(record: RunRecord, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for row in record.rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_trajectory(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def report(records: Iterable[RunRecord], out_dir: str | os.PathLike) -> list[dict]:
    """Per-run trajectory CSVs plus ``metrics.csv`` / ``metrics.json`` tables."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    table = []
    for rec in records:
        stem = f"{rec.name}_{rec.controller}"
        write_trajectory(rec, out / f"{stem}.csv")
        table.append(dict(metrics(rec), run=stem))
    (out / "metrics.json").write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    with open(out / "metrics.csv", "w", newline="") as fh:
        cols = ["run", "energy", "error", "n_data_a", "n_data_b", "converged"]
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        w.writerows(table)
    return table


# ---------------------------------------------------------------------------
# baseline-vs-SP comparison over the experiment configs


def reproduce(exp_dir: str | os.PathLike, out_dir: str | os.PathLike,
              names: Sequence[str] = ("exp1", "exp2", "exp3")) -> list[dict]:
    """P1, P100, SP1 and SP2 for each experiment config in ``exp_dir``.

    A config with ``hyper_mode: optimize`` takes its kernels from a pilot
    SP run of the config named in its ``pilot`` field.
    """
    exp_dir, out = Path(exp_dir), Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for name in names:
        cfg = ExperimentConfig.load(exp_dir / f"{name}.json")
        for k in (1.0, 100.0):
            records.append(run(replace(cfg, controller="p", gain=k)))
        if cfg.hyper_mode == "optimize":
            if not cfg.pilot:
                raise ValueError(f"{name}: hyper_mode 'optimize' needs a pilot config")
            pilot_cfg = ExperimentConfig.load(exp_dir / cfg.pilot)
            pilot = out / f"{name}_pilot_models.json"
            run(replace(pilot_cfg, controller="sp"), model_out=str(pilot))
            cfg = optimize_mode(cfg, pilot)
        sp1_models = out / f"{name}_sp1_models.json"
        sp1 = run(replace(cfg, name=name, controller="sp"), model_out=str(sp1_models))
        sp2 = run(replace(cfg, name=name, controller="sp"), model_in=str(sp1_models),
                  model_out=str(out / f"{name}_sp2_models.json"))
        sp1.controller, sp2.controller = "sp1", "sp2"
        records += [sp1, sp2]
    return report(records, out)
