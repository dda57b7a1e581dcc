import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qlab.hard_instance import build_hard_mdp
from qlab.instances import random_finite_mdp, random_mdp
from qlab.mdp import (
    ConvergenceError,
    DimensionError,
    FiniteHorizonMdp,
    InvalidMdpError,
    TabularMdp,
    TabularMrp,
    backward_induction,
    bellman_optimality,
    check_valid,
    exact_policy_value,
    greedy_policy,
    max_row_l1,
    policy_matrices,
    policy_q,
    state_values,
    validate,
    value_iteration,
    var_p,
)

gammas = st.floats(0.1, 0.95)
small = st.integers(1, 5)


def one_state(r=0.5, gamma=0.9):
    return TabularMdp(np.ones((1, 1, 1)), np.full((1, 1), r), gamma)


def test_bad_shapes_raise():
    with pytest.raises(DimensionError):
        TabularMdp(np.ones((2, 1, 3)), np.zeros((2, 1)), 0.9)
    with pytest.raises(DimensionError):
        TabularMdp(np.ones((2, 1, 2)) / 2, np.zeros((3, 1)), 0.9)


def test_arrays_are_read_only():
    m = one_state()
    with pytest.raises(ValueError):
        m.reward[0, 0] = 1.0


def test_validate_lists_every_violation():
    P = np.array([[[0.5, 0.6]], [[-0.1, 1.1]]])
    r = np.array([[1.5], [0.2]])
    out = validate(TabularMdp(P, r, 1.0))
    kinds = {v.split(":")[0] for v in out}
    assert kinds == {"discount", "row-sum", "row-negative", "reward-range"}
    with pytest.raises(InvalidMdpError) as exc:
        check_valid(TabularMdp(P, r, 1.0))
    assert exc.value.violations == out


def test_fully_masked_state_rejected():
    m = TabularMdp(np.ones((1, 1, 1)), np.zeros((1, 1)), 0.5, np.zeros((1, 1), bool))
    assert any(v.startswith("mask") for v in validate(m))


def test_one_state_value_iteration_closed_form():
    sol = value_iteration(one_state(0.5, 0.9), tol=1e-12)
    assert sol.v_star[0] == pytest.approx(5.0, abs=1e-10)


def test_value_iteration_cap_raises_with_residual():
    with pytest.raises(ConvergenceError) as exc:
        value_iteration(one_state(1.0, 0.99), tol=1e-12, max_iters=5)
    assert exc.value.residual > 0


def test_value_iteration_matches_policy_enumeration():
    m = random_mdp(3, 2, 0.8, seed=4)
    sol = value_iteration(m, tol=1e-12)
    best = max(
        (exact_policy_value(m, pi) for pi in itertools.product(range(2), repeat=3)),
        key=lambda v: v.sum(),
    )
    np.testing.assert_allclose(sol.v_star, best, atol=1e-9)
    np.testing.assert_allclose(policy_q(m, greedy_policy(sol.q_star)), sol.q_star, atol=1e-9)


def test_greedy_ties_pick_first_and_respect_mask():
    q = np.array([[1.0, 1.0], [0.0, 2.0]])
    assert greedy_policy(q).tolist() == [0, 1]
    mask = np.array([[True, True], [True, False]])
    assert greedy_policy(q, mask).tolist() == [0, 0]
    with pytest.raises(ValueError):
        greedy_policy(np.array([[np.nan, 0.0]]))


def test_policy_matrices_shapes_and_rows():
    m = random_mdp(4, 3, 0.9, seed=1)
    big, small_ = policy_matrices(m, [0, 1, 2, 0])
    assert big.shape == (12, 12) and small_.shape == (4, 4)
    np.testing.assert_allclose(big.sum(1), 1.0, atol=1e-12)
    np.testing.assert_allclose(small_[1], m.transition[1, 1])


def test_var_p_deterministic_row_is_zero():
    P = np.zeros((2, 1, 2))
    P[:, 0, 1] = 1.0
    m = TabularMdp(P, np.zeros((2, 1)), 0.9)
    np.testing.assert_array_equal(var_p(m, np.array([3.0, 7.0])), 0.0)


def test_var_p_bernoulli():
    P = np.array([[[0.3, 0.7]], [[1.0, 0.0]]])
    v = np.array([0.0, 1.0])
    assert var_p(P, v)[0, 0] == pytest.approx(0.21, abs=1e-15)


def test_backward_induction_one_step():
    r = np.array([[[0.2, 0.9]]])
    q = backward_induction(FiniteHorizonMdp(np.ones((1, 2, 1)), r))
    np.testing.assert_array_equal(q, r)


def test_time_invariant_flag():
    f = random_finite_mdp(2, 2, 3, seed=0)
    assert f.time_invariant and f.transition.shape == (3, 2, 2, 2)
    g = random_finite_mdp(2, 2, 3, seed=0, time_invariant=False)
    assert not g.time_invariant


def test_mrp_as_mdp():
    mrp = TabularMrp(np.eye(2), np.array([0.1, 0.2]), 0.5)
    m = mrp.as_mdp()
    assert m.transition.shape == (2, 1, 2)


@settings(max_examples=30, deadline=None)
@given(S=small, A=small, gamma=gammas, seed=st.integers(0, 10**6))
def test_bellman_is_gamma_contraction(S, A, gamma, seed):
    m = random_mdp(S, A, gamma, seed)
    rng = np.random.default_rng(seed)
    q1 = rng.uniform(0, m.horizon_scale, (S, A))
    q2 = rng.uniform(0, m.horizon_scale, (S, A))
    lhs = np.abs(bellman_optimality(m, q1) - bellman_optimality(m, q2)).max()
    assert lhs <= gamma * np.abs(q1 - q2).max() + 1e-12


@settings(max_examples=30, deadline=None)
@given(S=small, A=small, gamma=gammas, seed=st.integers(0, 10**6))
def test_q_star_fixed_point_and_range(S, A, gamma, seed):
    m = random_mdp(S, A, gamma, seed)
    sol = value_iteration(m, tol=1e-11)
    assert np.all(sol.q_star >= 0) and np.all(sol.q_star <= m.horizon_scale + 1e-9)
    assert np.abs(bellman_optimality(m, sol.q_star) - sol.q_star).max() <= 1e-9


@settings(max_examples=30, deadline=None)
@given(S=small, A=small, seed=st.integers(0, 10**6))
def test_var_p_nonnegative_and_bounded(S, A, seed):
    m = random_mdp(S, A, 0.9, seed)
    v = np.random.default_rng(seed).uniform(0, 10, S)
    var = var_p(m, v)
    assert np.all(var >= 0)
    assert np.all(var <= (v.max() - v.min()) ** 2 / 4 + 1e-9)


@settings(max_examples=30, deadline=None)
@given(S=small, A=small, seed=st.integers(0, 10**6))
def test_policy_matrices_row_l1_is_one(S, A, seed):
    m = random_mdp(S, A, 0.9, seed)
    pi = np.random.default_rng(seed).integers(0, A, S)
    big, small_ = policy_matrices(m, pi)
    assert max_row_l1(big) == pytest.approx(1.0, abs=1e-12)
    assert max_row_l1(small_) == pytest.approx(1.0, abs=1e-12)


def test_hard_mdp_masked_pairs_ignored_by_state_values():
    m = build_hard_mdp(0.9)
    q = np.array([[0.0, 9.0], [1.0, 2.0], [3.0, 9.0], [4.0, 9.0]])
    assert state_values(q, m.mask).tolist() == [0.0, 2.0, 3.0, 4.0]


# -- listed examples -----------------------------------------------------------

def two_state():
    P = np.array([[[0.2, 0.8], [1.0, 0.0]], [[0.5, 0.5], [0.0, 1.0]]])
    r = np.array([[0.1, 0.4], [0.9, 0.0]])
    return TabularMdp(P, r, 0.8)


def test_validate_examples():
    assert validate(two_state()) == []
    P = two_state().transition.copy()
    P[1, 0] = [0.45, 0.45]
    out = validate(TabularMdp(P, two_state().reward, 0.8))
    assert len(out) == 1 and out[0].startswith("row-sum") and "(.|1,0)" in out[0]
    r = two_state().reward.copy()
    r[0, 0] = 1.5
    out = validate(TabularMdp(two_state().transition, r, 0.8))
    assert len(out) == 1 and out[0].startswith("reward-range") and "r(0,0)" in out[0]


def test_bellman_zero_case_and_direct_summation():
    m = random_mdp(3, 2, 0.9, seed=7)
    z = TabularMdp(m.transition, np.zeros((3, 2)), 0.9)
    np.testing.assert_array_equal(bellman_optimality(z, np.zeros((3, 2))), 0.0)
    q = np.random.default_rng(0).uniform(0, 10, (3, 2))
    direct = np.zeros((3, 2))
    for s, a in itertools.product(range(3), range(2)):
        direct[s, a] = m.reward[s, a] + 0.9 * sum(m.transition[s, a, s2] * q[s2].max() for s2 in range(3))
    np.testing.assert_allclose(bellman_optimality(m, q), direct, atol=1e-12)


@pytest.mark.parametrize("row, expected", [([1.0, 3.0], 1), ([2.0, 2.0], 0), ([5.0, 5.0, 5.0], 0)])
def test_greedy_examples(row, expected):
    assert greedy_policy(np.array([row]))[0] == expected


@settings(max_examples=50, deadline=None)
@given(
    q=st.lists(st.lists(st.integers(-5, 5), min_size=3, max_size=3), min_size=1, max_size=4),
    shift=st.integers(-100, 100),
    scale=st.integers(1, 50),
)
def test_greedy_shift_and_scale_invariant(q, shift, scale):
    # integer tables keep ties exact under the transformation
    q = np.array(q, dtype=float)
    base = greedy_policy(q)
    np.testing.assert_array_equal(greedy_policy(q + shift), base)
    np.testing.assert_array_equal(greedy_policy(q * scale), base)


def test_policy_matrices_examples():
    big, small_ = policy_matrices(one_state(), [0])
    np.testing.assert_array_equal(big, [[1.0]])
    np.testing.assert_array_equal(small_, [[1.0]])
    m = two_state()
    pi = [1, 0]
    big, small_ = policy_matrices(m, pi)
    for s, s2 in itertools.product(range(2), repeat=2):
        assert small_[s, s2] == m.transition[s, pi[s], s2]
    for s, a, s2, a2 in itertools.product(range(2), repeat=4):
        assert big[s * 2 + a, s2 * 2 + a2] == (m.transition[s, a, s2] if a2 == pi[s2] else 0.0)


def test_var_p_two_outcome_formula_and_monte_carlo():
    P = np.array([[[0.5, 0.5]], [[1.0, 0.0]]])
    v = np.array([0.0, 2.0])
    assert var_p(P, v)[0, 0] == pytest.approx(1.0, abs=1e-15)
    draws = v[np.random.default_rng(3).integers(0, 2, 10**5)]
    assert draws.var() == pytest.approx(1.0, abs=0.02)
    np.testing.assert_array_equal(var_p(P, np.full(2, 4.2)), 0.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), c=st.floats(-5, 5))
def test_var_p_shift_invariant(seed, c):
    m = random_mdp(4, 2, 0.9, seed)
    v = np.random.default_rng(seed).uniform(0, 3, 4)
    np.testing.assert_allclose(var_p(m, v + c), var_p(m, v), atol=1e-9)


def test_var_p_large_negative_is_internal_error():
    # a "kernel" with negative mass makes the second-moment identity fail loudly
    P = np.array([[[2.0, -1.0]]])
    with pytest.raises(ArithmeticError):
        var_p(P, np.array([0.0, 1.0]))


def test_value_iteration_examples():
    m = random_mdp(3, 2, 0.9, seed=2)
    z = TabularMdp(m.transition, np.zeros((3, 2)), 0.9)
    np.testing.assert_array_equal(value_iteration(z).q_star, 0.0)
    np.testing.assert_allclose(value_iteration(build_hard_mdp(0.8)).v_star, [0, 3.75, 3.75, 5], atol=1e-7)


def test_value_iteration_random_4x3_against_all_policies():
    m = random_mdp(4, 3, 0.85, seed=11)
    sol = value_iteration(m)
    values = np.array([exact_policy_value(m, pi) for pi in itertools.product(range(3), repeat=4)])
    np.testing.assert_allclose(sol.v_star, values.max(axis=0), atol=1e-7)
    np.testing.assert_allclose(policy_q(m, greedy_policy(sol.q_star)), sol.q_star, atol=1e-7)


def test_exact_policy_value_examples():
    absorbing = TabularMdp(np.ones((1, 1, 1)), np.zeros((1, 1)), 0.9)
    assert exact_policy_value(absorbing, [0])[0] == 0.0
    assert exact_policy_value(build_hard_mdp(0.9), [0, 0, 0, 0])[3] == pytest.approx(10.0, abs=1e-12)
    mrp = random_mdp(5, 1, 0.9, seed=5)
    P, r = mrp.transition[:, 0], mrp.reward[:, 0]
    series, term = np.zeros(5), r.copy()
    for _ in range(2001):
        series += term
        term = 0.9 * P @ term
    np.testing.assert_allclose(exact_policy_value(mrp, np.zeros(5, int)), series, atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(S=small, gamma=gammas, seed=st.integers(0, 10**6))
def test_single_action_value_iteration_matches_linear_solve(S, gamma, seed):
    m = random_mdp(S, 1, gamma, seed)
    tol = 1e-10
    v = value_iteration(m, tol=tol).v_star
    np.testing.assert_allclose(v, exact_policy_value(m, np.zeros(S, int)), atol=tol / (1 - gamma) + 1e-12)


def test_backward_induction_self_loop_ones():
    H = 3
    P = np.zeros((2, 1, 2))
    P[0, 0, 0] = P[1, 0, 1] = 1.0
    q = backward_induction(FiniteHorizonMdp(P, np.ones((H, 2, 1))))
    for h in range(H):
        np.testing.assert_array_equal(q[h], H - h)


def _enumerate_finite(fmdp):
    """Best expected return from each (h, s, a) by brute force over all policy trees."""
    H, S, A = fmdp.reward.shape

    def best(h, s):
        if h == H:
            return 0.0
        return max(value(h, s, a) for a in range(A))

    def value(h, s, a):
        cont = sum(fmdp.transition[h, s, a, s2] * best(h + 1, s2) for s2 in range(S))
        return fmdp.reward[h, s, a] + cont

    return np.array([[[value(h, s, a) for a in range(A)] for s in range(S)] for h in range(H)])


def test_backward_induction_matches_enumeration():
    f = random_finite_mdp(2, 2, 4, seed=3)
    np.testing.assert_array_equal(backward_induction(f), _enumerate_finite(f))


@settings(max_examples=20, deadline=None)
@given(S=small, A=small, H=st.integers(1, 5), seed=st.integers(0, 10**6))
def test_backward_induction_range(S, A, H, seed):
    q = backward_induction(random_finite_mdp(S, A, H, seed, time_invariant=False))
    hi = (H - np.arange(H))[:, None, None]
    assert np.all(q >= 0) and np.all(q <= hi + 1e-12)
