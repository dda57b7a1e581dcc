"""Seeded random test instances.

Instance generation draws from its own Philox key (seed, INSTANCE_STREAM) so it
never shares variates with learner runs keyed by the same seed.
"""
from __future__ import annotations

import numpy as np

from .mdp import FiniteHorizonMdp, TabularMdp, TabularMrp

INSTANCE_STREAM = 0x1D57A9CE


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, INSTANCE_STREAM], dtype=np.uint64)))


def random_mdp(num_states: int, num_actions: int, gamma: float, seed: int) -> TabularMdp:
    """Dirichlet(1) transition rows and Uniform[0, 1] rewards."""
    g = _generator(seed)
    P = g.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    r = g.uniform(size=(num_states, num_actions))
    return TabularMdp(P, r, gamma)


def random_mrp(num_states: int, gamma: float, seed: int) -> TabularMrp:
    mdp = random_mdp(num_states, 1, gamma, seed)
    return TabularMrp(mdp.transition[:, 0], mdp.reward[:, 0], gamma)


def random_finite_mdp(num_states: int, num_actions: int, horizon: int, seed: int, time_invariant: bool = True) -> FiniteHorizonMdp:
    g = _generator(seed)
    shape = (num_states, num_actions) if time_invariant else (horizon, num_states, num_actions)
    P = g.dirichlet(np.ones(num_states), size=shape)
    r = g.uniform(size=(horizon, num_states, num_actions))
    return FiniteHorizonMdp(P, r)
