"""Compiled inner loops. Callers own all validation and stream bookkeeping."""
import numpy as np
from numba import njit


@njit(cache=True)
def _lookup(cdf_row, u):
    k = 0
    n = cdf_row.shape[0]
    while k < n - 1 and cdf_row[k] <= u:
        k += 1
    return k


@njit(cache=True)
def _state_values(q, mask, out):
    S, A = q.shape
    for s in range(S):
        best = -np.inf
        for a in range(A):
            if mask[s, a] and q[s, a] > best:
                best = q[s, a]
        out[s] = best


@njit(cache=True)
def sync_q_chunk(q, reward, gamma, mask, cdf, u, etas):
    """Run len(etas) synchronous updates in place; u has shape (B, S, A)."""
    S, A = q.shape
    v = np.empty(S)
    for b in range(etas.shape[0]):
        eta = etas[b]
        _state_values(q, mask, v)
        for s in range(S):
            for a in range(A):
                if mask[s, a]:
                    nxt = _lookup(cdf[s, a], u[b, s, a])
                    q[s, a] = (1.0 - eta) * q[s, a] + eta * (reward[s, a] + gamma * v[nxt])


@njit(cache=True)
def finite_q_chunk(q, reward, cdf, u, etas):
    """Finite-horizon updates in place; q is (H, S, A), u is (B, H or 1, S, A)."""
    H, S, A = q.shape
    shared = u.shape[1] == 1
    v_next = np.empty(S)
    for b in range(etas.shape[0]):
        eta = etas[b]
        for h in range(H - 1, -1, -1):
            if h == H - 1:
                v_next[:] = 0.0
            else:
                for s in range(S):
                    best = -np.inf
                    for a in range(A):
                        if q[h + 1, s, a] > best:
                            best = q[h + 1, s, a]
                    v_next[s] = best
            slot = 0 if shared else h
            for s in range(S):
                for a in range(A):
                    nxt = _lookup(cdf[h, s, a], u[b, slot, s, a])
                    q[h, s, a] = (1.0 - eta) * q[h, s, a] + eta * (reward[h, s, a] + v_next[nxt])


@njit(cache=True)
def async_q_chunk(q, reward, gamma, mask, cdf, behavior_cdf, u, eta, state, counts):
    """Trajectory steps in place; u has shape (B, 2): action draw, next-state draw.

    Returns the state reached after the last step.
    """
    S, A = q.shape
    for b in range(u.shape[0]):
        a = _lookup(behavior_cdf[state], u[b, 0])
        nxt = _lookup(cdf[state, a], u[b, 1])
        best = -np.inf
        for a2 in range(A):
            if mask[nxt, a2] and q[nxt, a2] > best:
                best = q[nxt, a2]
        q[state, a] = (1.0 - eta) * q[state, a] + eta * (reward[state, a] + gamma * best)
        counts[state, a] += 1
        state = nxt
    return state


@njit(cache=True)
def trajectory_chunk(cdf, behavior_cdf, u, state, out_states, out_actions):
    for b in range(u.shape[0]):
        a = _lookup(behavior_cdf[state], u[b, 0])
        out_states[b] = state
        out_actions[b] = a
        state = _lookup(cdf[state, a], u[b, 1])
    return state
