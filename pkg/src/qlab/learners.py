"""Synchronous Q-learning, synchronous TD, asynchronous Q-learning and finite-horizon Q-learning.

Random draws follow the layout documented in :mod:`qlab.sampling`: iteration t
of a synchronous run reads variates [(t-1) n, t n) of the run's stream, where
n is the number of sampled pairs per iteration. The asynchronous learner reads
two variates per trajectory step (action, then next state).
"""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .mdp import FiniteHorizonMdp, TabularMdp, TabularMrp, check_valid, validate_finite, InvalidMdpError
from .sampling import RngStream, categorical_cdf, check_behavior
from .schedules import Schedule, rates

RANGE_TOL = 1e-9
# Variates generated per chunk; bounds memory for large instances.
CHUNK_VARIATES = 1 << 21


class RangeViolation(AssertionError):
    pass


@dataclass
class RunConfig:
    schedule: Schedule
    iterations: int
    seed: int = 0
    stream_id: int = 0
    init: str | np.ndarray = "zeros"
    checkpoint_every: int = 0
    snapshots: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")
        if isinstance(self.init, str) and self.init not in ("zeros", "optimal"):
            raise ValueError(f"unknown init {self.init!r}")

    def to_dict(self) -> dict:
        init = self.init if isinstance(self.init, str) else np.asarray(self.init).tolist()
        return {
            "schedule": self.schedule.to_dict(),
            "iterations": self.iterations,
            "seed": self.seed,
            "stream_id": self.stream_id,
            "init": init,
            "checkpoint_every": self.checkpoint_every,
            "snapshots": self.snapshots,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        d["schedule"] = Schedule.from_dict(d["schedule"])
        if not isinstance(d.get("init", "zeros"), str):
            d["init"] = np.asarray(d["init"], dtype=float)
        return cls(**d)


@dataclass
class Checkpoint:
    t: int
    sup_error: float | None
    snapshot: np.ndarray | None = None


@dataclass
class RunRecord:
    algorithm: str
    final: np.ndarray
    checkpoints: list[Checkpoint]
    config: dict
    wall_time: float
    visit_counts: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def final_error(self) -> float | None:
        return self.checkpoints[-1].sup_error if self.checkpoints else None

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "final": self.final.tolist(),
            "checkpoints": [
                {
                    "t": c.t,
                    "sup_error": c.sup_error,
                    **({"snapshot": c.snapshot.tolist()} if c.snapshot is not None else {}),
                }
                for c in self.checkpoints
            ],
            "config": self.config,
            "wall_time": self.wall_time,
            "visit_counts": None if self.visit_counts is None else self.visit_counts.tolist(),
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        cps = [
            Checkpoint(c["t"], c["sup_error"], None if "snapshot" not in c else np.asarray(c["snapshot"]))
            for c in d["checkpoints"]
        ]
        vc = d.get("visit_counts")
        return cls(
            algorithm=d["algorithm"],
            final=np.asarray(d["final"], dtype=float),
            checkpoints=cps,
            config=d["config"],
            wall_time=d["wall_time"],
            visit_counts=None if vc is None else np.asarray(vc, dtype=np.int64),
            warnings=list(d.get("warnings", [])),
        )

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls.from_dict(json.loads(text))

    def checkpoints_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "sup_error"])
        for c in self.checkpoints:
            w.writerow([c.t, "" if c.sup_error is None else repr(c.sup_error)])
        return buf.getvalue()


def _checkpoint_times(T: int, every: int) -> list[int]:
    if every <= 0:
        return [T]
    times = list(range(every, T + 1, every))
    if not times or times[-1] != T:
        times.append(T)
    return times


def _initial(init, shape, oracle, hi) -> np.ndarray:
    if isinstance(init, str):
        if init == "zeros":
            return np.zeros(shape)
        if oracle is None:
            raise ValueError("init='optimal' requires an oracle")
        q0 = np.array(oracle, dtype=float)
    else:
        q0 = np.array(init, dtype=float)
    if q0.shape != shape:
        raise ValueError(f"initial estimate has shape {q0.shape}, expected {shape}")
    if np.any(q0 < 0) or np.any(q0 > hi):
        raise ValueError("initial estimate must lie in [0, upper range]")
    return q0


def _check_range(x: np.ndarray, hi, t: int, where: str) -> None:
    hi = np.asarray(hi, dtype=float)
    slack = RANGE_TOL * np.maximum(hi, 1.0)
    if np.any(x < -slack) or np.any(x > hi + slack):
        raise RangeViolation(f"{where}: iterate left [0, upper] at t={t} (min {x.min()}, max {x.max()})")


def _run_synchronous(q, T, schedule, rng, n_per_iter, step, error, hi, every, snapshots, name):
    """Shared chunked driver: ``step(q, u_flat_chunk, etas)`` performs the updates."""
    times = _checkpoint_times(T, every)
    block = max(1, CHUNK_VARIATES // n_per_iter)
    checkpoints = []
    t = 0
    for stop in times:
        while t < stop:
            b = min(block, stop - t)
            etas = rates(schedule, np.arange(t + 1, t + b + 1))
            step(q, rng.take(b * n_per_iter), etas)
            t += b
        _check_range(q, hi, t, name)
        checkpoints.append(Checkpoint(t, error(q), q.copy() if snapshots else None))
    return checkpoints


def run_sync_q(mdp: TabularMdp, cfg: RunConfig, oracle: np.ndarray | None = None) -> RunRecord:
    """Synchronous Q-learning: Q_t = (1 - eta_t) Q_{t-1} + eta_t T_t(Q_{t-1})."""
    check_valid(mdp)
    start = time.perf_counter()
    S, A = mdp.reward.shape
    hi = mdp.horizon_scale
    q = _initial(cfg.init, (S, A), oracle, hi)
    cdf = categorical_cdf(mdp.transition)
    mask = np.ascontiguousarray(mdp.mask)
    reward = np.ascontiguousarray(mdp.reward)

    def step(q, u, etas):
        _kernels.sync_q_chunk(q, reward, mdp.discount, mask, cdf, u.reshape(-1, S, A), etas)

    error = _sup_error(oracle, mdp.mask)
    cps = _run_synchronous(
        q, cfg.iterations, cfg.schedule, RngStream(cfg.seed, cfg.stream_id), S * A,
        step, error, hi, cfg.checkpoint_every, cfg.snapshots, "sync_q",
    )
    return RunRecord("sync_q", q, cps, cfg.to_dict(), time.perf_counter() - start)


def run_sync_td(mrp: TabularMrp, cfg: RunConfig, oracle: np.ndarray | None = None) -> RunRecord:
    """Synchronous TD(0): V_t(s) = (1 - eta_t) V_{t-1}(s) + eta_t (r(s) + gamma V_{t-1}(s_t(s)))."""
    mdp = mrp.as_mdp()
    check_valid(mdp)
    init = cfg.init
    if not isinstance(init, str):
        init = np.asarray(init, dtype=float)[:, None]
    inner = RunConfig(cfg.schedule, cfg.iterations, cfg.seed, cfg.stream_id, init, cfg.checkpoint_every, cfg.snapshots)
    rec = run_sync_q(mdp, inner, None if oracle is None else np.asarray(oracle, dtype=float)[:, None])
    rec.algorithm = "sync_td"
    rec.final = rec.final[:, 0]
    rec.config = cfg.to_dict()
    for c in rec.checkpoints:
        if c.snapshot is not None:
            c.snapshot = c.snapshot[:, 0]
    return rec


def run_async_q(
    mdp: TabularMdp,
    behavior: np.ndarray,
    eta: float,
    T: int,
    seed: int = 0,
    q0: str | np.ndarray = "zeros",
    oracle: np.ndarray | None = None,
    *,
    stream_id: int = 0,
    start_state: int = 0,
    checkpoint_every: int = 0,
    check_ergodic: bool = True,
) -> RunRecord:
    """Asynchronous Q-learning along one behavior-policy trajectory with a constant step."""
    from .chain import behavior_chain, stationary_distribution

    check_valid(mdp)
    behavior = check_behavior(mdp, behavior)
    if not (0.0 < eta <= 1.0):
        raise ValueError("eta must lie in (0, 1]")
    if T < 1:
        raise ValueError("T must be >= 1")
    start = time.perf_counter()
    warnings = []
    if check_ergodic:
        _, ergodic = stationary_distribution(behavior_chain(mdp, behavior))
        if not ergodic:
            warnings.append("behavior chain is not ergodic; some pairs may never be visited")
    S, A = mdp.reward.shape
    hi = mdp.horizon_scale
    q = _initial(q0, (S, A), oracle, hi)
    cdf = categorical_cdf(mdp.transition)
    bcdf = categorical_cdf(behavior)
    mask = np.ascontiguousarray(mdp.mask)
    reward = np.ascontiguousarray(mdp.reward)
    counts = np.zeros((S, A), dtype=np.int64)
    rng = RngStream(seed, stream_id)
    error = _sup_error(oracle, mdp.mask)
    state = int(start_state)
    block = CHUNK_VARIATES // 2
    checkpoints = []
    t = 0
    for stop in _checkpoint_times(T, checkpoint_every):
        while t < stop:
            b = min(block, stop - t)
            u = rng.take(2 * b).reshape(b, 2)
            state = _kernels.async_q_chunk(q, reward, mdp.discount, mask, cdf, bcdf, u, eta, state, counts)
            t += b
        _check_range(q, hi, t, "async_q")
        checkpoints.append(Checkpoint(t, error(q)))
    config = {
        "eta": eta, "iterations": T, "seed": seed, "stream_id": stream_id,
        "init": q0 if isinstance(q0, str) else np.asarray(q0).tolist(),
        "start_state": start_state, "checkpoint_every": checkpoint_every,
        "behavior": np.asarray(behavior).tolist(),
    }
    return RunRecord("async_q", q, checkpoints, config, time.perf_counter() - start, counts, warnings)


def run_finite_horizon_q(fmdp: FiniteHorizonMdp, cfg: RunConfig, oracle: np.ndarray | None = None) -> RunRecord:
    """Synchronous Q-learning for an H-step MDP; each iteration sweeps h = H..1."""
    violations = validate_finite(fmdp)
    if violations:
        raise InvalidMdpError(violations)
    start = time.perf_counter()
    H, S, A = fmdp.reward.shape
    hi = (H - np.arange(H, dtype=float))[:, None, None] * np.ones((H, S, A))
    if isinstance(cfg.init, str) and cfg.init == "zeros":
        q = np.zeros((H, S, A))
    else:
        if isinstance(cfg.init, str) and oracle is None:
            raise ValueError("init='optimal' requires an oracle")
        q = np.array(oracle if isinstance(cfg.init, str) else cfg.init, dtype=float)
        if q.shape != (H, S, A) or np.any(q < 0) or np.any(q > hi):
            raise ValueError("initial estimate must have shape (H, S, A) and lie in [0, H-h+1]")
    cdf = categorical_cdf(fmdp.transition)
    slots = 1 if fmdp.time_invariant else H
    reward = np.ascontiguousarray(fmdp.reward)

    def step(q, u, etas):
        _kernels.finite_q_chunk(q, reward, cdf, u.reshape(-1, slots, S, A), etas)

    def error(q):
        return None if oracle is None else float(np.abs(q - oracle).max())

    cps = _run_synchronous(
        q, cfg.iterations, cfg.schedule, RngStream(cfg.seed, cfg.stream_id), slots * S * A,
        step, error, hi, cfg.checkpoint_every, cfg.snapshots, "finite_q",
    )
    return RunRecord("finite_q", q, cps, cfg.to_dict(), time.perf_counter() - start)


def _sup_error(oracle, mask):
    if oracle is None:
        return lambda q: None
    oracle = np.asarray(oracle, dtype=float)

    def error(q):
        return float(np.abs(q - oracle)[mask].max())

    return error


def sync_q_with_uniforms(mdp: TabularMdp, q0: np.ndarray, etas: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Synchronous Q-learning driven by explicit variates u of shape (T, S, A)."""
    q = np.array(q0, dtype=float)
    _kernels.sync_q_chunk(
        q, np.ascontiguousarray(mdp.reward), mdp.discount, np.ascontiguousarray(mdp.mask),
        categorical_cdf(mdp.transition), np.ascontiguousarray(u, dtype=float), np.asarray(etas, dtype=float),
    )
    return q
