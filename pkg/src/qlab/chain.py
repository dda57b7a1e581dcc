"""Behavior-chain statistics over state-action pairs, and Freedman's bound."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .mdp import DimensionError, TabularMdp
from .sampling import RngStream, categorical_cdf, check_behavior

TV_THRESHOLD = 0.25


class MixingTimeError(RuntimeError):
    def __init__(self, cap: int, last_tv: float):
        super().__init__(f"chain not mixed within {cap} steps (TV distance {last_tv:.4f})")
        self.cap = cap
        self.last_tv = last_tv


@dataclass(frozen=True)
class ChainDiagnostics:
    stationary: np.ndarray  # over flattened pairs s * A + a
    mu_min: float
    t_mix: int | None
    ergodic: bool

    def to_dict(self) -> dict:
        return {
            "stationary": self.stationary.tolist(),
            "mu_min": self.mu_min,
            "t_mix": self.t_mix,
            "ergodic": self.ergodic,
        }


def behavior_chain(mdp: TabularMdp, behavior: np.ndarray) -> np.ndarray:
    """K[(s, a), (s', a')] = P(s'|s, a) * behavior(a'|s'), pairs flattened row-major."""
    behavior = check_behavior(mdp, behavior)
    S, A = mdp.num_states, mdp.num_actions
    return (mdp.transition[:, :, :, None] * behavior[None, None, :, :]).reshape(S * A, S * A)


def _tv(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(p - q).sum(axis=-1)


def stationary_distribution(kernel: np.ndarray, tol: float = 1e-12, max_doublings: int = 60) -> tuple[np.ndarray, bool]:
    """Power iteration (via repeated squaring) from the uniform start and a point mass.

    Returns (mu, ergodic). The chain is declared ergodic when both starts reach
    the same fixed point within ``tol`` in total variation.
    """
    K = np.asarray(kernel, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DimensionError("kernel must be square")
    n = K.shape[0]
    starts = np.zeros((2, n))
    starts[0] = 1.0 / n
    starts[1, 0] = 1.0
    power = K.copy()
    mu = starts @ power
    for _ in range(max_doublings):
        nxt = starts @ power
        if np.all(_tv(nxt @ K, nxt) <= tol) and np.all(_tv(nxt, mu) <= tol):
            mu = nxt
            break
        mu = nxt
        power = power @ power
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum(axis=1, keepdims=True)
    fixed = np.all(_tv(mu @ K, mu) <= 10 * tol)
    agree = _tv(mu[0], mu[1]) <= 10 * tol
    return mu[0], bool(fixed and agree)


def _max_tv(power: np.ndarray, mu: np.ndarray, rows) -> float:
    return float(_tv(power[rows], mu[None, :]).max())


def mixing_time(kernel: np.ndarray, mu: np.ndarray, starts=None, cap: int = 10**6) -> int:
    """Smallest t >= 1 with max over start pairs of TV(K^t(x, .), mu) <= 1/4.

    The worst-case TV distance is nonincreasing in t, so the threshold is
    bracketed by doubling and then located by bisection.
    """
    K = np.asarray(kernel, dtype=float)
    mu = np.asarray(mu, dtype=float)
    rows = np.arange(K.shape[0]) if starts is None else np.asarray(starts)
    tv = _max_tv(K, mu, rows)
    if tv <= TV_THRESHOLD:
        return 1
    # bracket: TV(lo) > 1/4 >= TV(hi)
    lo, base = 1, K
    while True:
        hi = min(2 * lo, cap)
        if hi == lo:
            raise MixingTimeError(cap, tv)
        cand = base @ (base if hi == 2 * lo else np.linalg.matrix_power(K, hi - lo))
        tv = _max_tv(cand, mu, rows)
        if tv <= TV_THRESHOLD:
            break
        lo, base = hi, cand
    while hi - lo > 1:
        mid = (lo + hi) // 2
        cand = base @ np.linalg.matrix_power(K, mid - lo)
        if _max_tv(cand, mu, rows) <= TV_THRESHOLD:
            hi = mid
        else:
            lo, base = mid, cand
    return hi


def visit_counts(states, actions, t: int, shape: tuple[int, int]) -> np.ndarray:
    """K_t(s, a) = number of k < t with (s_k, a_k) = (s, a)."""
    states = np.asarray(states)
    actions = np.asarray(actions)
    if t > states.shape[0]:
        raise ValueError(f"t={t} exceeds trajectory length {states.shape[0]}")
    counts = np.zeros(shape, dtype=np.int64)
    np.add.at(counts, (states[:t], actions[:t]), 1)
    return counts


def sample_trajectory(mdp: TabularMdp, behavior: np.ndarray, T: int, seed: int, stream_id: int = 0, start_state: int = 0):
    """(states, actions) of the first T steps, drawn with the async learner's variate layout."""
    behavior = check_behavior(mdp, behavior)
    u = RngStream(seed, stream_id).take(2 * T).reshape(T, 2)
    states = np.empty(T, dtype=np.int64)
    actions = np.empty(T, dtype=np.int64)
    _kernels.trajectory_chunk(categorical_cdf(mdp.transition), categorical_cdf(behavior), u, start_state, states, actions)
    return states, actions


def diagnose(mdp: TabularMdp, behavior: np.ndarray, tol: float = 1e-12, cap: int = 10**6) -> ChainDiagnostics:
    K = behavior_chain(mdp, behavior)
    mu, ergodic = stationary_distribution(K, tol)
    allowed = mdp.mask.ravel()
    mu_min = float(mu[allowed].min())
    t_mix = None
    if ergodic:
        t_mix = mixing_time(K, mu, starts=np.flatnonzero(allowed), cap=cap)
    return ChainDiagnostics(mu, mu_min, t_mix, ergodic)


def freedman_bound(W_n: float, sigma_sq: float, R: float, K: int, delta: float) -> float:
    """Deviation level that |Y_n| exceeds with probability at most delta.

    sqrt(8 max(W_n, sigma^2 / 2^K) log(2K/delta)) + (4/3) R log(2K/delta).
    """
    if not (0.0 <= W_n <= sigma_sq):
        raise ValueError("need 0 <= W_n <= sigma_sq")
    if R < 0:
        raise ValueError("need R >= 0")
    if K < 1 or int(K) != K:
        raise ValueError("K must be a positive integer")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    log_term = math.log(2 * K / delta)
    return math.sqrt(8.0 * max(W_n, sigma_sq / 2.0**K) * log_term) + 4.0 / 3.0 * R * log_term
