"""Counter-based random streams and the generative-model samplers.

Every uniform variate is addressed by (seed, stream_id, index): the stream is a
Philox4x64 generator keyed by (seed, stream_id), and variate ``index`` is the
index-th double it emits. Learners lay their draws out at fixed offsets
(iteration t, pair (s, a) -> index (t-1)*S*A + s*A + a), so any draw can be
regenerated without replaying the stream and extending T never changes earlier
iterations.

Categorical draws use inverse-CDF lookup: the sampled index is the number of
cumulative-probability entries that are <= u, so zero-probability outcomes are
never returned.
"""
from __future__ import annotations

import numpy as np

from .mdp import DimensionError, TabularMdp, state_values

_MASK64 = (1 << 64) - 1


class RngStream:
    """Sequential reader over the uniform variates of one (seed, stream_id) key."""

    def __init__(self, seed: int, stream_id: int = 0, position: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        bits = np.random.Philox(key=np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64))
        bits.advance(position // 4)
        self._gen = np.random.Generator(bits)
        self._position = position - position % 4
        self.skip(position % 4)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, position={self._position})"

    @property
    def position(self) -> int:
        return self._position

    def take(self, count: int) -> np.ndarray:
        out = self._gen.random(count)
        self._position += count
        return out

    def skip(self, count: int) -> None:
        if count:
            self.take(count)

    def at(self, position: int) -> "RngStream":
        """A fresh reader on the same key starting at ``position``."""
        return RngStream(self.seed, self.stream_id, position)


def uniforms(seed: int, stream_id: int, start: int, count: int) -> np.ndarray:
    return RngStream(seed, stream_id, start).take(count)


def categorical_cdf(prob: np.ndarray) -> np.ndarray:
    """Cumulative sums along the last axis, pinned to exactly 1 from the last positive entry on."""
    prob = np.asarray(prob, dtype=float)
    cdf = np.cumsum(prob, axis=-1)
    positive = prob > 0
    n = prob.shape[-1]
    last = n - 1 - np.argmax(positive[..., ::-1], axis=-1)
    cdf[np.arange(n) >= last[..., None]] = 1.0
    return cdf


def inverse_cdf(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorised lookup: for matching leading shapes, count cdf entries <= u."""
    return (cdf <= np.asarray(u)[..., None]).sum(axis=-1)


def draw_sync_samples(mdp: TabularMdp, rng: RngStream, cdf: np.ndarray | None = None) -> np.ndarray:
    """One next-state draw per (s, a); consumes S*A variates in row-major pair order.

    Masked pairs still consume their variate (keeping offsets fixed) but
    return their self-loop.
    """
    if cdf is None:
        cdf = categorical_cdf(mdp.transition)
    S, A = mdp.num_states, mdp.num_actions
    u = rng.take(S * A).reshape(S, A)
    nxt = inverse_cdf(cdf, u)
    return np.where(mdp.mask, nxt, np.arange(S)[:, None])


def empirical_bellman(q: np.ndarray, samples: np.ndarray, mdp: TabularMdp) -> np.ndarray:
    """r(s, a) + gamma * max_a' q(s_t(s, a), a') with the sampled next states."""
    q = np.asarray(q, dtype=float)
    samples = np.asarray(samples)
    if q.shape != mdp.reward.shape or samples.shape != mdp.reward.shape:
        raise DimensionError("q and samples must both have shape (S, A)")
    if samples.dtype.kind not in "iu" or samples.min() < 0 or samples.max() >= mdp.num_states:
        raise IndexError("sample table holds an invalid state index")
    v = state_values(q, mdp.mask)
    return mdp.reward + mdp.discount * v[samples]


def check_behavior(mdp: TabularMdp, behavior: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    behavior = np.asarray(behavior, dtype=float)
    if behavior.shape != mdp.reward.shape:
        raise DimensionError(f"behavior has shape {behavior.shape}, expected {mdp.reward.shape}")
    if np.any(behavior < 0) or np.any(np.abs(behavior.sum(axis=1) - 1.0) > tol):
        raise ValueError("behavior rows must be probability vectors")
    if np.any(behavior[~mdp.mask] > 0):
        raise ValueError("behavior puts mass on a masked action")
    return behavior


def uniform_behavior(mdp: TabularMdp) -> np.ndarray:
    m = mdp.mask.astype(float)
    return m / m.sum(axis=1, keepdims=True)


def trajectory_step(mdp: TabularMdp, behavior: np.ndarray, state: int, rng: RngStream) -> tuple[int, float, int]:
    """Draw a ~ behavior(.|state), then s' ~ P(.|state, a). Consumes two variates."""
    behavior = check_behavior(mdp, behavior)
    u = rng.take(2)
    action = int(inverse_cdf(categorical_cdf(behavior[state]), u[0]))
    nxt = int(inverse_cdf(categorical_cdf(mdp.transition[state, action]), u[1]))
    return action, float(mdp.reward[state, action]), nxt
