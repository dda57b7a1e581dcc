"""The 4-state lower-bound MDP and Monte Carlo bias/variance probes on it.

Indexing: states are 0..3 as in the construction. The construction numbers
actions from 1; here action k is stored at index k-1, so state 1's two
actions live at indices 0 and 1 and every other state only has index 0
(index 1 is masked).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .learners import RunConfig, run_sync_q
from .mdp import TabularMdp, TabularMrp
from .schedules import Schedule, rates

MIN_GAMMA = 0.75


class GammaRangeError(ValueError):
    pass


def _check_gamma(gamma: float) -> None:
    if not (MIN_GAMMA <= gamma < 1.0):
        raise GammaRangeError(f"gamma={gamma} outside [3/4, 1)")


def hard_p(gamma: float) -> float:
    """Self-loop probability (4 gamma - 1) / (3 gamma)."""
    return (4.0 * gamma - 1.0) / (3.0 * gamma)


def build_hard_mdp(gamma: float) -> TabularMdp:
    _check_gamma(gamma)
    p = hard_p(gamma)
    P = np.zeros((4, 2, 4))
    r = np.zeros((4, 2))
    mask = np.zeros((4, 2), dtype=bool)
    mask[:, 0] = True
    mask[1, 1] = True
    # absorbing, zero reward
    P[0, 0, 0] = 1.0
    # two identical actions
    for a in (0, 1):
        P[1, a, 1], P[1, a, 0] = p, 1.0 - p
        r[1, a] = 1.0
    P[2, 0, 2], P[2, 0, 0] = p, 1.0 - p
    r[2, 0] = 1.0
    P[3, 0, 3] = 1.0
    r[3, 0] = 1.0
    # forbidden pairs: self-loop, zero reward
    for s in (0, 2, 3):
        P[s, 1, s] = 1.0
    return TabularMdp(P, r, gamma, mask)


def build_hard_mrp(gamma: float) -> TabularMrp:
    """Single-action counterpart: the hard MDP restricted to its first action."""
    mdp = build_hard_mdp(gamma)
    return TabularMrp(mdp.transition[:, 0, :], mdp.reward[:, 0], gamma)


@dataclass(frozen=True)
class HardMdpOracle:
    """Closed-form optimal values. q_star[s, k-1] is Q*(s, action k); masked entries hold 0."""

    gamma: float
    p: float
    v_star: np.ndarray
    q_star: np.ndarray


def hard_oracle(gamma: float) -> HardMdpOracle:
    _check_gamma(gamma)
    mid = 3.0 / (4.0 * (1.0 - gamma))
    top = 1.0 / (1.0 - gamma)
    v = np.array([0.0, mid, mid, top])
    q = np.array([[0.0, 0.0], [mid, mid], [mid, 0.0], [top, 0.0]])
    return HardMdpOracle(gamma, hard_p(gamma), v, q)


def state3_closed_form(gamma: float, schedule: Schedule, T: int) -> float:
    """V_T(3) from zero init: (1 - prod_{i<=T} (1 - eta_i (1 - gamma))) / (1 - gamma)."""
    eta = rates(schedule, np.arange(1, T + 1))
    shrink = np.prod(1.0 - eta * (1.0 - gamma))
    return 1.0 / (1.0 - gamma) - shrink / (1.0 - gamma)


@dataclass
class BiasVarianceEstimate:
    state: int
    mean_estimate: float
    bias: float
    squared_bias: float
    variance: float
    mse: float
    num_runs: int
    bias_stderr: float
    squared_bias_stderr: float
    variance_stderr: float
    mse_stderr: float
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _moments(err: np.ndarray) -> np.ndarray:
    """(bias, squared bias, variance, mse) with population variance so mse = bias^2 + var exactly."""
    b = err.mean()
    var = ((err - b) ** 2).mean()
    return np.array([b, b * b, var, (err * err).mean()])


def jackknife(err: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Point estimates and leave-one-out jackknife standard errors of :func:`_moments`."""
    n = err.shape[0]
    full = _moments(err)
    loo = np.array([_moments(np.delete(err, i)) for i in range(n)])
    se = np.sqrt((n - 1) / n * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    return full, se


def summarize(values: np.ndarray, target: float, state: int, seeds=None) -> BiasVarianceEstimate:
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 2:
        raise ValueError("need at least two runs")
    full, se = jackknife(values - target)
    warnings = []
    if seeds is not None and len(set(seeds)) < len(seeds):
        warnings.append("degenerate seeds: repeated run keys give identical runs")
    return BiasVarianceEstimate(
        state, float(values.mean()), *map(float, full), values.shape[0], *map(float, se), warnings=warnings,
    )


def probe_values(gamma, schedule: Schedule, T: int, run_keys, mdp: TabularMdp | None = None) -> np.ndarray:
    """Final V_T for each (seed, stream_id) key, shape (runs, 4). Runs start from Q_0 = 0."""
    mdp = build_hard_mdp(gamma) if mdp is None else mdp
    schedule = schedule.bind(gamma=gamma, horizon_T=T)
    out = []
    for seed, stream in run_keys:
        q = run_sync_q(mdp, RunConfig(schedule, T, seed=seed, stream_id=stream)).final
        out.append(np.where(mdp.mask, q, -np.inf).max(axis=1))
    return np.array(out)


def bias_variance_probe(
    gamma: float,
    schedule: Schedule,
    T: int,
    num_runs: int = 200,
    seed: int = 0,
    state: int = 1,
    *,
    run_seeds=None,
    mdp: TabularMdp | None = None,
    target: float | None = None,
) -> BiasVarianceEstimate:
    """Bias/variance/MSE of V_T(state) against the closed-form V*(state).

    Run i uses stream (seed, i) unless ``run_seeds`` supplies explicit seeds.
    ``mdp`` and ``target`` allow probing a modified instance.
    """
    if num_runs < 2:
        raise ValueError("num_runs must be >= 2")
    if run_seeds is None:
        keys = [(seed, i) for i in range(num_runs)]
    else:
        if len(run_seeds) != num_runs:
            raise ValueError("run_seeds must have num_runs entries")
        keys = [(int(s), 0) for s in run_seeds]
    values = probe_values(gamma, schedule, T, keys, mdp)[:, state]
    if target is None:
        target = float(hard_oracle(gamma).v_star[state])
    return summarize(values, target, state, seeds=keys)
