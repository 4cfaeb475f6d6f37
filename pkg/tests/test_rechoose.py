import numpy as np
import pytest

from catdyn.dynamics import build_hamiltonian, default_model, evolve_trajectory
from catdyn.expectations import ddt_decomposition_aa, richardson_ratio
from catdyn.fockspace import build_space, coherent_state
from catdyn.rechoose import (ConditioningError, bt_anchor_derivative_check, decomposition_check,
                             max_separation, partial_derivatives_fd, rechoose_b, rechoose_terms)


@pytest.fixture(scope="module")
def traj():
    sp = build_space(30, 1.0, 1.0, 0.01)
    H = build_hamiltonian(default_model(), sp)
    return sp, evolve_trajectory(H, coherent_state(sp, 1 + 0.5j), np.linspace(0, 1, 51))


def test_rechosen_b_coincides_with_a_at_anchor(traj):
    sp, tr = traj
    rb = rechoose_b(tr, 0.4)
    np.testing.assert_allclose(rb.state_at(0.4), tr.a_at(0.4))
    assert rb.state_at(0.2) is rb.state_at(0.2)


def test_route_equivalence(traj):
    sp, tr = traj
    for t in (0.1, 0.5, 0.9):
        tp, tt = rechoose_terms(sp.q_op, tr, t)
        aa = ddt_decomposition_aa(sp.q_op, tr.H, tr.a_at(t), 0.0, 0.02)
        assert abs(tp + tt - aa.commutator_term - aa.fluctuation_term) < 1e-10


def test_decomposition_second_order(traj):
    sp, tr = traj
    ratio, _, _ = richardson_ratio(lambda d: decomposition_check(sp.q_op, tr, 0.5, d), 0.04)
    assert 3.5 <= ratio <= 4.5


def test_partial_derivatives_match_terms(traj):
    sp, tr = traj
    tp, tt = rechoose_terms(sp.p_op, tr, 0.5)
    d_tp, d_t = partial_derivatives_fd(sp.p_op, tr, 0.5, 0.01)
    assert abs(d_tp - tp) < 1e-3
    assert abs(d_t - tt) < 1e-3


@pytest.mark.parametrize("t2", [0.3, 0.5])
def test_anchor_derivative_second_order(traj, t2):
    _, tr = traj
    ratio, r1, _ = richardson_ratio(lambda d: bt_anchor_derivative_check(tr, 0.5, t2, d), 0.02)
    assert 3.5 <= ratio <= 4.5
    assert r1 < 1e-2


def test_conditioning_guard(traj):
    _, tr = traj
    sp = build_space(30, 1.0, 1.0, 0.01)
    H = tr.H
    long = evolve_trajectory(H, coherent_state(sp, 1 + 0.5j), np.linspace(0, 3, 31))
    with pytest.raises(ConditioningError, match="reduce the separation"):
        bt_anchor_derivative_check(long, 2.9, 0.1, 0.02)
    res, cond = bt_anchor_derivative_check(tr, 0.5, 0.3, 0.02, return_cond=True)
    assert 1 <= cond < 1e8
    assert 0 < max_separation(H) < np.inf
