"""Seed sweeps over (gamma, T) cells and log-log exponent fits.

Run r of every cell uses the key (cfg.seed, r): cells share random numbers
(common random numbers), so dropping a cell never changes another cell and
slope bootstraps resample run indices jointly across cells.

Cell metrics:
  sup_q_error    median over runs of the sup-norm Q error
  per_state_mse  worst per-state RMSE of V_T
  rms_sup_error  root mean square over runs of the sup-norm V_T error

The 1/log^2 T factor in the Q-learning lower bound is constant across cells at
fixed T and is ignored by horizon fits.
"""
from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import io
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .chain import diagnose
from .hard_instance import build_hard_mdp, hard_oracle, bias_variance_probe, state3_closed_form
from .instances import random_finite_mdp, random_mdp
from .learners import RunConfig, run_async_q, run_finite_horizon_q, run_sync_q
from .mdp import TabularMdp, backward_induction, state_values, value_iteration
from .sampling import uniform_behavior
from .schedules import Schedule, async_constant_rate

ALGORITHMS = ("sync_q", "sync_td", "async_q", "finite_q")
METRICS = ("sup_q_error", "per_state_mse", "rms_sup_error")
BOOTSTRAP_RESAMPLES = 1000
MIN_RUNS_FOR_FLAG = 10
LOG_T_NOTE = "the 1/log^2 T factor of the lower bound is constant at fixed T and is not modelled"


@dataclass
class SweepConfig:
    """A grid of (gamma, T) cells, each run ``runs_per_cell`` times.

    instance: {"kind": "hard_mdp"} | {"kind": "file", "path": ...} |
              {"kind": "random", "states": S, "actions": A, "seed": k}
    For sync_td the instance is reduced to one action per state: the hard
    MDP keeps its first action (same variate layout), other instances keep
    action 0. ``async_c1`` sets the constant async step from T, mu_min and
    gamma; otherwise async runs use the schedule's constant eta.
    """

    algorithm: str
    instance: dict
    gamma_grid: list
    T_grid: list
    schedule: dict
    runs_per_cell: int = 20
    metric: str = "sup_q_error"
    seed: int = 0
    output: str | None = None
    horizon: int = 3
    async_c1: float | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if not self.gamma_grid or not self.T_grid:
            raise ValueError("grids must be non-empty")
        if self.runs_per_cell < 1:
            raise ValueError("runs_per_cell must be >= 1")
        Schedule.from_dict(self.schedule)
        self.gamma_grid = [float(g) for g in self.gamma_grid]
        self.T_grid = [int(t) for t in self.T_grid]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        return cls(**d)


@dataclass
class CellResult:
    gamma: float
    T: int
    # signed V_T - V* per run and state, shape (runs, S); finite_q stacks (runs, H*S)
    state_errors: np.ndarray
    sup_errors: np.ndarray
    wall_times: np.ndarray
    error: str | None = None


@dataclass
class ExponentFit:
    slope: float
    intercept: float
    stderr: float
    r_squared: float
    cells: list
    boot_slopes: np.ndarray = field(repr=False, default=None)
    aborted: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "slope": self.slope, "intercept": self.intercept, "stderr": self.stderr,
            "r_squared": self.r_squared, "cells": self.cells, "aborted": self.aborted,
            "flags": self.flags, "notes": self.notes,
        }


# -- instances -------------------------------------------------------------

def load_instance(cfg: SweepConfig, gamma: float):
    """(instance, oracle) for one cell; oracle is Q* (S, A) or Q*_h (H, S, A)."""
    kind = cfg.instance.get("kind")
    if cfg.algorithm == "finite_q":
        if kind != "random":
            raise ValueError("finite_q sweeps need a random instance")
        inst = cfg.instance
        fmdp = random_finite_mdp(inst["states"], inst["actions"], cfg.horizon, inst["seed"], inst.get("time_invariant", True))
        return fmdp, backward_induction(fmdp)
    if kind == "hard_mdp":
        mdp = build_hard_mdp(gamma)
        if cfg.algorithm == "sync_td":
            mask = mdp.mask.copy()
            mask[1, 1] = False
            mdp = TabularMdp(mdp.transition, mdp.reward, gamma, mask)
        return mdp, hard_oracle(gamma).q_star
    if kind == "random":
        inst = cfg.instance
        actions = 1 if cfg.algorithm == "sync_td" else inst["actions"]
        mdp = random_mdp(inst["states"], actions, gamma, inst["seed"])
    elif kind == "file":
        from .io import load_mdp

        base = load_mdp(cfg.instance["path"])
        mdp = TabularMdp(base.transition, base.reward, gamma, base.mask)
        if cfg.algorithm == "sync_td":
            mdp = TabularMdp(mdp.transition[:, :1], mdp.reward[:, :1], gamma)
    else:
        raise ValueError(f"unknown instance kind {kind!r}")
    return mdp, value_iteration(mdp).q_star


# -- running cells -----------------------------------------------------------

def _one_run(cfg: SweepConfig, inst, oracle, gamma: float, T: int, run: int):
    start = time.perf_counter()
    if cfg.algorithm == "finite_q":
        sched = Schedule.from_dict(cfg.schedule).bind(gamma=1.0 - 1.0 / cfg.horizon, horizon_T=T)
        q = run_finite_horizon_q(inst, RunConfig(sched, T, seed=cfg.seed, stream_id=run)).final
        err = (q.max(axis=2) - oracle.max(axis=2)).ravel()
        sup = float(np.abs(q - oracle).max())
        return err, sup, time.perf_counter() - start
    if cfg.algorithm == "async_q":
        behavior = uniform_behavior(inst)
        if cfg.async_c1 is not None:
            eta = async_constant_rate(T, diagnose(inst, behavior).mu_min, gamma, cfg.async_c1)
        else:
            eta = Schedule.from_dict(cfg.schedule).eta
        q = run_async_q(inst, behavior, eta, T, seed=cfg.seed, stream_id=run, check_ergodic=False).final
    else:
        sched = Schedule.from_dict(cfg.schedule).bind(gamma=gamma, horizon_T=T)
        q = run_sync_q(inst, RunConfig(sched, T, seed=cfg.seed, stream_id=run)).final
    v = state_values(q, inst.mask)
    err = v - state_values(oracle, inst.mask)
    sup = float(np.abs(q - oracle)[inst.mask].max())
    return err, sup, time.perf_counter() - start


def run_cell(cfg: SweepConfig, gamma: float, T: int) -> CellResult:
    try:
        inst, oracle = load_instance(cfg, gamma)
        out = [_one_run(cfg, inst, oracle, gamma, T, r) for r in range(cfg.runs_per_cell)]
    except Exception as exc:  # one bad cell must not abort the sweep
        return CellResult(gamma, T, np.empty((0, 0)), np.empty(0), np.empty(0), error=f"{type(exc).__name__}: {exc}")
    errs, sups, walls = zip(*out)
    return CellResult(gamma, T, np.array(errs), np.array(sups), np.array(walls))


def _workers() -> int:
    return max(1, int(os.environ.get("QLAB_WORKERS", "1")))


def run_cells(cfg: SweepConfig, coords) -> list[CellResult]:
    coords = list(coords)
    n = _workers()
    if n == 1 or len(coords) == 1:
        return [run_cell(cfg, g, T) for g, T in coords]
    with concurrent.futures.ProcessPoolExecutor(n) as pool:
        return list(pool.map(run_cell, [cfg] * len(coords), *zip(*coords)))


# -- aggregation and fits ----------------------------------------------------

def aggregate(cell: CellResult, metric: str, idx=None) -> float:
    if idx is None:
        idx = np.arange(cell.sup_errors.shape[0])
    if metric == "sup_q_error":
        return float(np.median(cell.sup_errors[idx]))
    err = cell.state_errors[idx]
    if metric == "rms_sup_error":
        return float(np.sqrt((np.abs(err).max(axis=1) ** 2).mean()))
    return float(np.sqrt((err**2).mean(axis=0)).max())


def _safe_log(x) -> np.ndarray:
    return np.log(np.maximum(np.asarray(x, dtype=float), np.finfo(float).tiny))


def _linfit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - (resid**2).sum() / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def fit_exponent(cells: list[CellResult], xs, metric: str, seed: int = 0) -> ExponentFit:
    """Least-squares slope of log(aggregate error) on log x, with a run-index bootstrap stderr."""
    ok = [(c, x) for c, x in zip(cells, xs) if c.error is None]
    aborted = [{"gamma": c.gamma, "T": c.T, "error": c.error} for c in cells if c.error is not None]
    if len(ok) < 2:
        raise ValueError("fewer than two usable cells; cannot fit an exponent")
    lx = np.log([x for _, x in ok])
    errs = [aggregate(c, metric) for c, _ in ok]
    slope, intercept, r2 = _linfit(lx, _safe_log(errs))
    runs = min(c.sup_errors.shape[0] for c, _ in ok)
    rng = np.random.default_rng(seed)
    boot = np.empty(BOOTSTRAP_RESAMPLES)
    for b in range(BOOTSTRAP_RESAMPLES):
        idx = rng.integers(0, runs, runs)
        boot[b] = np.polyfit(lx, _safe_log([aggregate(c, metric, idx) for c, _ in ok]), 1)[0]
    table = []
    for (c, x), e in zip(ok, errs):
        per_run = c.sup_errors if metric == "sup_q_error" else np.abs(c.state_errors).max(axis=1)
        q75, q25 = np.percentile(per_run, [75, 25])
        table.append({"x": float(x), "gamma": c.gamma, "T": c.T, "error": e, "iqr": float(q75 - q25)})
    return ExponentFit(slope, intercept, float(boot.std(ddof=1)), r2, table, boot, aborted)


def horizon_exponent_sweep(cfg: SweepConfig, cells: list[CellResult] | None = None) -> tuple[ExponentFit, list[CellResult]]:
    """Slope of log(error) against log(1/(1-gamma)) at a fixed T."""
    if cfg.algorithm == "finite_q":
        raise ValueError("finite_q has no discount factor; use iteration_exponent_sweep")
    if len(cfg.gamma_grid) < 3:
        raise ValueError("horizon sweep needs at least three gamma values")
    if len(cfg.T_grid) != 1:
        raise ValueError("horizon sweep needs a single T")
    T = cfg.T_grid[0]
    if cells is None:
        cells = run_cells(cfg, [(g, T) for g in cfg.gamma_grid])
    fit = fit_exponent(cells, [1.0 / (1.0 - c.gamma) for c in cells], cfg.metric, cfg.seed)
    fit.notes.append(LOG_T_NOTE)
    return fit, cells


def iteration_exponent_sweep(cfg: SweepConfig, cells: list[CellResult] | None = None) -> tuple[ExponentFit, list[CellResult]]:
    """Slope of log(error) against log T at a fixed gamma.

    Flags "non-power-law" when log(error) is better explained as linear in T
    (geometric decay) than linear in log T.
    """
    Ts = sorted(cfg.T_grid)
    if len(Ts) < 3 or Ts[-1] < 10 * Ts[0]:
        raise ValueError("iteration sweep needs at least three T values spanning a decade")
    if len(cfg.gamma_grid) != 1:
        raise ValueError("iteration sweep needs a single gamma")
    g = cfg.gamma_grid[0]
    if cells is None:
        cells = run_cells(cfg, [(g, T) for T in Ts])
    fit = fit_exponent(cells, [c.T for c in cells], cfg.metric, cfg.seed)
    good = [c for c in cells if c.error is None]
    ly = _safe_log([aggregate(c, cfg.metric) for c in good])
    _, _, r2_geometric = _linfit(np.array([c.T for c in good], dtype=float), ly)
    if r2_geometric > fit.r_squared:
        fit.flags.append("non-power-law")
    return fit, cells


def slope_difference(a: ExponentFit, b: ExponentFit) -> tuple[float, float]:
    """(slope_a - slope_b, bootstrap stderr of the difference), pairing resamples by index."""
    return a.slope - b.slope, float(np.std(a.boot_slopes - b.boot_slopes, ddof=1))


def epsilon_threshold_table(cfg: SweepConfig, epsilons, cells: list[CellResult] | None = None) -> dict:
    """Smallest T in the grid whose aggregate error is <= eps, or "unreached"."""
    Ts = list(cfg.T_grid)
    if Ts != sorted(Ts):
        raise ValueError("T_grid must be sorted ascending")
    if cells is None:
        cells = run_cells(cfg, [(cfg.gamma_grid[0], T) for T in Ts])
    errs = [(c.T, aggregate(c, cfg.metric)) for c in cells if c.error is None]
    table = {}
    for eps in epsilons:
        hit = next((T for T, e in errs if e <= eps), None)
        table[float(eps)] = "unreached" if hit is None else hit
    return table


def overestimation_report(gamma_grid, schedule: Schedule, T: int, runs: int, seed: int = 0, state: int = 1) -> list[dict]:
    """Bias/variance of V_T(state) on the hard MDP per gamma, with a state-3 control."""
    out = []
    for g in gamma_grid:
        est = bias_variance_probe(g, schedule, T, runs, seed, state)
        control = bias_variance_probe(g, schedule, T, runs, seed, 3)
        warnings = list(est.warnings)
        if runs < MIN_RUNS_FOR_FLAG:
            warnings.append(f"insufficient runs ({runs} < {MIN_RUNS_FOR_FLAG}); no bias flag")
            flag = False
        else:
            flag = est.bias > 3.0 * est.bias_stderr
        expected = state3_closed_form(g, schedule.bind(gamma=g, horizon_T=T), T) - hard_oracle(g).v_star[3]
        out.append({
            "gamma": g, "estimate": est, "positive_bias": bool(flag), "warnings": warnings,
            "control": control, "control_expected_bias": float(expected),
        })
    return out


# -- output ------------------------------------------------------------------

def results_csv(cfg: SweepConfig, cells: list[CellResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", "gamma", "T", "seed", "run", "error", "walltime"])
    for c in cells:
        if c.error is not None:
            continue
        per_run = c.sup_errors if cfg.metric == "sup_q_error" else np.abs(c.state_errors).max(axis=1)
        for r, (e, wt) in enumerate(zip(per_run, c.wall_times)):
            w.writerow([cfg.algorithm, repr(c.gamma), c.T, cfg.seed, r, repr(float(e)), f"{wt:.6f}"])
    return buf.getvalue()


def plot_data_csv(cfg: SweepConfig, cells: list[CellResult]) -> str:
    """Long format: one row per (cell, run, state) signed error."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", "gamma", "T", "run", "state", "signed_error"])
    for c in cells:
        if c.error is None:
            for r, row in enumerate(c.state_errors):
                for s, e in enumerate(row):
                    w.writerow([cfg.algorithm, repr(c.gamma), c.T, r, s, repr(float(e))])
    return buf.getvalue()


def summary(cfg: SweepConfig, fits: dict, cells: list[CellResult]) -> dict:
    return {
        "config": cfg.to_dict(),
        "fits": {k: v.to_dict() for k, v in fits.items()},
        "aborted": [{"gamma": c.gamma, "T": c.T, "error": c.error} for c in cells if c.error is not None],
        "cells": [{"gamma": c.gamma, "T": c.T, "error": None if c.error else aggregate(c, cfg.metric)} for c in cells],
    }


def is_finite_number(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)
