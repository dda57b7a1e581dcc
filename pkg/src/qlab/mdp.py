"""Tabular MDP/MRP containers, Bellman operators and exact solvers.

Shapes used throughout the package:

    transition  (S, A, S)   P(s' | s, a)
    reward      (S, A)      r(s, a) in [0, 1]
    mask        (S, A)      True where the action is available in the state

States and actions are 0-indexed. Forbidden (masked) pairs carry reward 0 and
a self-loop; they are skipped by every maximum, sampler and error norm.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-9
VAR_CLAMP_TOL = 1e-12


class DimensionError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    """Iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class InvalidMdpError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("invalid MDP:\n  " + "\n  ".join(violations))
        self.violations = violations


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TabularMdp:
    transition: np.ndarray
    reward: np.ndarray
    discount: float
    mask: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "reward", _frozen(self.reward))
        object.__setattr__(self, "discount", float(self.discount))
        if self.mask is None:
            mask = np.ones(self.reward.shape, dtype=bool)
        else:
            mask = self.mask
        object.__setattr__(self, "mask", _frozen(mask, dtype=bool))
        if self.transition.ndim != 3 or self.reward.ndim != 2:
            raise DimensionError("transition must be (S, A, S) and reward (S, A)")
        S, A, S2 = self.transition.shape
        if S != S2 or self.reward.shape != (S, A) or self.mask.shape != (S, A):
            raise DimensionError(
                f"inconsistent shapes: transition {self.transition.shape}, "
                f"reward {self.reward.shape}, mask {self.mask.shape}"
            )

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def gamma(self) -> float:
        return self.discount

    @property
    def horizon_scale(self) -> float:
        """Upper end 1/(1-gamma) of the value range."""
        return 1.0 / (1.0 - self.discount)

    def __eq__(self, other):
        if not isinstance(other, TabularMdp):
            return NotImplemented
        return (
            self.discount == other.discount
            and np.array_equal(self.transition, other.transition)
            and np.array_equal(self.reward, other.reward)
            and np.array_equal(self.mask, other.mask)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TabularMrp:
    """Single-action special case: transition (S, S), reward (S,)."""

    transition: np.ndarray
    reward: np.ndarray
    discount: float

    def __post_init__(self):
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "reward", _frozen(self.reward))
        object.__setattr__(self, "discount", float(self.discount))
        S = self.reward.shape[0]
        if self.transition.shape != (S, S) or self.reward.ndim != 1:
            raise DimensionError("MRP needs transition (S, S) and reward (S,)")

    @property
    def num_states(self) -> int:
        return self.reward.shape[0]

    def as_mdp(self) -> TabularMdp:
        return TabularMdp(self.transition[:, None, :], self.reward[:, None], self.discount)


@dataclass(frozen=True, eq=False)
class FiniteHorizonMdp:
    """Episodic MDP with steps h = 1..H stored at array index h-1.

    transition has shape (H, S, A, S) and reward (H, S, A). Passing a single
    (S, A, S) kernel broadcasts it to every step and marks the instance
    time-invariant, in which case learners draw one sample table per iteration.
    """

    transition: np.ndarray
    reward: np.ndarray
    time_invariant: bool = field(default=False)

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        r = np.asarray(self.reward, dtype=float)
        if r.ndim != 3:
            raise DimensionError("reward must be (H, S, A)")
        H = r.shape[0]
        if P.ndim == 3:
            P = np.broadcast_to(P, (H,) + P.shape)
            object.__setattr__(self, "time_invariant", True)
        elif P.ndim == 4 and not self.time_invariant:
            if all(np.array_equal(P[0], P[h]) for h in range(1, H)):
                object.__setattr__(self, "time_invariant", True)
        if H < 1 or P.shape != r.shape + (r.shape[1],):
            raise DimensionError(f"inconsistent shapes {P.shape} vs {r.shape}")
        object.__setattr__(self, "transition", _frozen(P))
        object.__setattr__(self, "reward", _frozen(r))

    @property
    def horizon(self) -> int:
        return self.reward.shape[0]

    @property
    def num_states(self) -> int:
        return self.reward.shape[1]

    @property
    def num_actions(self) -> int:
        return self.reward.shape[2]


def validate(mdp: TabularMdp) -> list[str]:
    """List every violated invariant; empty when the MDP is well formed."""
    out = []
    P, r, g = mdp.transition, mdp.reward, mdp.discount
    if not (0.0 < g < 1.0):
        out.append(f"discount: gamma={g} must lie in (0, 1)")
    S, A = r.shape
    for s, a in itertools.product(range(S), range(A)):
        row = P[s, a]
        if not np.all(np.isfinite(row)):
            out.append(f"row-finite: P(.|{s},{a}) has non-finite entries")
            continue
        if np.any(row < 0):
            out.append(f"row-negative: P(.|{s},{a}) has a negative entry")
        total = row.sum()
        if abs(total - 1.0) > ROW_SUM_TOL:
            out.append(f"row-sum: P(.|{s},{a}) sums to {total:.12g}")
        if not (0.0 <= r[s, a] <= 1.0):
            out.append(f"reward-range: r({s},{a})={r[s, a]} outside [0, 1]")
    for s in range(S):
        if not mdp.mask[s].any():
            out.append(f"mask: state {s} has no available action")
    return out


def validate_finite(fmdp: FiniteHorizonMdp) -> list[str]:
    out = []
    for h in range(fmdp.horizon):
        step = TabularMdp(fmdp.transition[h], fmdp.reward[h], 0.5)
        out.extend(f"step {h + 1}: {v}" for v in validate(step))
    return out


def check_valid(mdp: TabularMdp) -> None:
    violations = validate(mdp)
    if violations:
        raise InvalidMdpError(violations)


def state_values(q: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """V(s) = max over available actions of q(s, a)."""
    if mask is None:
        return q.max(axis=1)
    return np.where(mask, q, -np.inf).max(axis=1)


def _check_q(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != mdp.reward.shape:
        raise DimensionError(f"q has shape {q.shape}, expected {mdp.reward.shape}")
    return q


def bellman_optimality(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    """(T q)(s, a) = r(s, a) + gamma * sum_s' P(s'|s, a) max_a' q(s', a')."""
    q = _check_q(mdp, q)
    v = state_values(q, mdp.mask)
    return mdp.reward + mdp.discount * (mdp.transition @ v)


def greedy_policy(q: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Smallest-index maximiser of q(s, .) for every state."""
    q = np.asarray(q, dtype=float)
    if np.isnan(q).any():
        raise ValueError("q contains NaN")
    if mask is not None:
        q = np.where(mask, q, -np.inf)
    # np.argmax returns the first occurrence, which is exactly the tie rule.
    return np.argmax(q, axis=1)


def policy_matrices(mdp: TabularMdp, pi) -> tuple[np.ndarray, np.ndarray]:
    """Return (P^pi, P_pi): the (SA x SA) kernel P @ Pi^pi and the (S x S) kernel Pi^pi @ P."""
    pi = np.asarray(pi, dtype=int)
    S, A = mdp.num_states, mdp.num_actions
    if pi.shape != (S,):
        raise DimensionError(f"policy has shape {pi.shape}, expected ({S},)")
    if np.any((pi < 0) | (pi >= A)):
        raise ValueError("policy contains an invalid action index")
    proj = np.zeros((S, S * A))
    proj[np.arange(S), np.arange(S) * A + pi] = 1.0
    P = mdp.transition.reshape(S * A, S)
    return P @ proj, proj @ P


def var_p(kernel, v: np.ndarray) -> np.ndarray:
    """Variance of v(s') under each transition row.

    ``kernel`` may be a TabularMdp or an array whose last axis indexes s'.
    Rounding negatives down to -1e-12 (relative to the second moment) are
    clamped to zero; anything more negative raises.
    """
    P = kernel.transition if isinstance(kernel, TabularMdp) else np.asarray(kernel, float)
    v = np.asarray(v, dtype=float)
    if P.shape[-1] != v.shape[0]:
        raise DimensionError(f"kernel last axis {P.shape[-1]} != len(v) {v.shape[0]}")
    second = P @ (v * v)
    first = P @ v
    out = second - first * first
    scale = max(1.0, float(np.max(np.abs(second), initial=0.0)))
    if np.any(out < -VAR_CLAMP_TOL * scale):
        raise ArithmeticError(f"negative variance {out.min():.3e} beyond rounding")
    return np.maximum(out, 0.0)


def max_row_l1(m: np.ndarray) -> float:
    """Largest row-wise l1 norm of a matrix."""
    return float(np.abs(np.asarray(m)).sum(axis=1).max())


@dataclass(frozen=True)
class Solution:
    q_star: np.ndarray
    v_star: np.ndarray
    iterations: int
    residual: float


def value_iteration(mdp: TabularMdp, tol: float = 1e-10, max_iters: int = 10**6) -> Solution:
    """Iterate the Bellman optimality operator from zero until the sup residual is <= tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = np.zeros(mdp.reward.shape)
    residual = np.inf
    for it in range(1, max_iters + 1):
        nq = bellman_optimality(mdp, q)
        residual = float(np.abs(nq - q)[mdp.mask].max())
        q = nq
        if residual <= tol:
            return Solution(q, state_values(q, mdp.mask), it, residual)
    raise ConvergenceError(f"value iteration did not converge in {max_iters} iterations", residual)


def exact_policy_value(mdp: TabularMdp, pi) -> np.ndarray:
    """V^pi from the linear system (I - gamma P_pi) V = r_pi."""
    pi = np.asarray(pi, dtype=int)
    _, P_pi = policy_matrices(mdp, pi)
    r_pi = mdp.reward[np.arange(mdp.num_states), pi]
    system = np.eye(mdp.num_states) - mdp.discount * P_pi
    try:
        v = np.linalg.solve(system, r_pi)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"policy evaluation failed: {exc}") from exc
    if not np.all(np.isfinite(v)):
        raise ArithmeticError("policy evaluation produced non-finite values")
    return v


def policy_q(mdp: TabularMdp, pi) -> np.ndarray:
    """Q^pi = r + gamma P V^pi."""
    return mdp.reward + mdp.discount * (mdp.transition @ exact_policy_value(mdp, pi))


def backward_induction(fmdp: FiniteHorizonMdp) -> np.ndarray:
    """Optimal Q_h for h = 1..H, returned as an (H, S, A) array."""
    H = fmdp.horizon
    q = np.zeros(fmdp.reward.shape)
    v_next = np.zeros(fmdp.num_states)
    for h in range(H - 1, -1, -1):
        q[h] = fmdp.reward[h] + fmdp.transition[h] @ v_next
        v_next = q[h].max(axis=1)
    return q
