import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catdyn.contour import PolyFunction
from catdyn.dynamics import ModelConfig, build_hamiltonian, default_model, evolve, split_hermitian
from catdyn.expectations import (IllConditionedError, breakdown_time, classical_path,
                                 ddt_decomposition_aa, ddt_identity_ba, effective_quantities,
                                 exp_aa, exp_ba, fluctuation_term, richardson_ratio,
                                 trajectory_compare)
from catdyn.fockspace import build_space, coherent_state

cnum = st.complex_numbers(min_magnitude=0.1, max_magnitude=10, allow_nan=False, allow_infinity=False)


@pytest.fixture(scope="module")
def setup():
    sp = build_space(60, 1.0, 1.0, 0.01)
    cfg = default_model()
    return sp, cfg, build_hamiltonian(cfg, sp)


def test_coherent_expectations(setup):
    sp, _, _ = setup
    alpha = 1.0 + 0.5j
    a = coherent_state(sp, alpha)
    assert exp_aa(sp.q_op, a) == pytest.approx(np.sqrt(2) * alpha.real, abs=1e-12)
    assert exp_aa(sp.p_op, a) == pytest.approx(np.sqrt(2) * alpha.imag, abs=1e-12)
    # BA value between two coherent states is analytic in the ket amplitude
    b = coherent_state(sp, 0.3 - 0.2j)
    assert exp_ba(sp.a, b, a) == pytest.approx(alpha, abs=1e-12)


def test_exp_ba_ill_conditioned(setup):
    sp, _, _ = setup
    e0, e1 = np.eye(60)[0], np.eye(60)[1]
    with pytest.raises(IllConditionedError):
        exp_ba(sp.q_op, e0, e1)
    with pytest.raises(ValueError):
        exp_aa(sp.q_op, np.zeros(60))


@settings(max_examples=30, deadline=None)
@given(cnum, cnum)
def test_exp_ba_rescaling_invariance(s1, s2):
    sp = build_space(20, 1.0, 1.0, 0.01)
    a = coherent_state(sp, 0.7 + 0.2j)
    b = coherent_state(sp, 0.4 - 0.1j)
    ref = exp_ba(sp.q_op, b, a)
    assert abs(exp_ba(sp.q_op, s1 * b, s2 * a) - ref) < 1e-10 * (1 + abs(ref))
    assert abs(exp_aa(sp.q_op, s2 * a) - exp_aa(sp.q_op, a)) < 1e-10


@pytest.mark.parametrize("op", ["q", "p", "q2"])
def test_ba_identity_second_order(setup, op):
    sp, _, H = setup
    O = {"q": sp.q_op, "p": sp.p_op, "q2": sp.q_op @ sp.q_op}[op]
    a0 = coherent_state(sp, 1 + 0.5j)
    bT = coherent_state(sp, 0.8 - 0.3j)
    ratio, r1, _ = richardson_ratio(lambda d: ddt_identity_ba(O, H, a0, bT, 0.3, d, t_final=1.0), 0.02)
    assert 3.5 <= ratio <= 4.5
    assert r1 < 1e-3


def test_ba_velocity_is_p_over_m(setup):
    sp, cfg, H = setup
    a0 = coherent_state(sp, 1 + 0.5j)
    b = coherent_state(sp, 0.8 - 0.3j)
    rep = ddt_identity_ba(sp.q_op, H, a0, b, 0.3, 0.02)
    a_t = evolve(a0, H, 0.3)
    assert abs(rep.commutator_term - exp_ba(sp.p_op, b, a_t) / cfg.m) < 1e-10


@pytest.mark.parametrize("op", ["q", "p", "q2"])
def test_aa_decomposition_second_order(setup, op):
    sp, _, H = setup
    O = {"q": sp.q_op, "p": sp.p_op, "q2": sp.q_op @ sp.q_op}[op]
    a0 = coherent_state(sp, 1 + 0.5j)
    ratio, _, _ = richardson_ratio(lambda d: ddt_decomposition_aa(O, H, a0, 0.3, d), 0.02)
    assert 3.5 <= ratio <= 4.5


def test_aa_velocity_is_p_over_m_eff(setup):
    sp, cfg, H = setup
    a0 = coherent_state(sp, 1 + 0.5j)
    rep = ddt_decomposition_aa(sp.q_op, H, a0, 0.3, 0.02)
    a_t = evolve(a0, H, 0.3)
    assert abs(rep.commutator_term - exp_aa(sp.p_op, a_t) / cfg.m_eff) < 1e-10


def test_fluctuation_vanishes_on_eigenstate(setup):
    sp, _, H = setup
    _, H_a = split_hermitian(H)
    N = sp.a_dag @ sp.a
    fock3 = np.eye(60)[3].astype(complex)
    assert abs(fluctuation_term(N, H_a, fock3)) < 1e-12


def test_fluctuation_vanishes_for_hermitian_model():
    sp = build_space(40, 1.0, 1.0, 0.01)
    H = build_hamiltonian(ModelConfig(1.0, PolyFunction([0, 0, 0.5])), sp)
    rep = ddt_decomposition_aa(sp.q_op, H, coherent_state(sp, 1.0 + 0.5j), 0.2, 0.01)
    assert rep.fluctuation_term == 0


def test_effective_objects(setup):
    sp, cfg, _ = setup
    eff = effective_quantities(cfg, sp)
    assert eff.m_eff == 1.25
    assert np.max(np.abs(eff.H_eff_matrix - eff.H_h_matrix)) < 1e-13
    assert np.max(np.abs(eff.H_R_matrix - eff.H_h_matrix)) < 1e-13
    assert eff.L_I["kinetic"] == 0.25
    assert eff.L_eff["potential"] == PolyFunction([0, 0, 0.5])


def test_classical_path_harmonic():
    t = np.linspace(0, 2, 21)
    q, p = classical_path(1.0, lambda x: -x, 0.5, 0.2, t)
    np.testing.assert_allclose(q, 0.5 * np.cos(t) + 0.2 * np.sin(t), atol=1e-9)
    np.testing.assert_allclose(p, -0.5 * np.sin(t) + 0.2 * np.cos(t), atol=1e-9)


def test_breakdown_time():
    t = np.arange(5.0)
    tb, dev = breakdown_time(t, [1, 1, 1.02, 1.2, 2], [1, 1, 1, 1, 1])
    assert tb == 3.0
    np.testing.assert_allclose(dev, [0, 0, 0.02, 0.2, 1.0])
    assert breakdown_time(t, np.ones(5), np.ones(5))[0] == np.inf


def test_trajectory_compare_hermitian_ehrenfest():
    # real harmonic model: Ehrenfest holds exactly, only the FD error remains
    sp = build_space(60, 1.0, 1.0, 0.01)
    cfg = ModelConfig(1.0, PolyFunction([0, 0, 0.5]))
    ts = trajectory_compare(cfg, sp, coherent_state(sp, 1.0 + 0.5j), 1.0, 0.02, "fni")
    c = ts.columns
    assert np.nanmax(c["ehrenfest_resid"]) < 2e-4
    np.testing.assert_allclose(c["q_re"], c["q_cl_re"], atol=1e-8)
    assert np.isnan(c["ehrenfest_resid"][0]) and np.isnan(c["ehrenfest_resid"][-1])


def test_trajectory_compare_modes(setup):
    sp, cfg, _ = setup
    a0 = coherent_state(sp, 1 + 0.5j)
    fi = trajectory_compare(cfg, sp, a0, 0.4, 0.02, "fi", coherent_state(sp, 0.5))
    assert len(fi) == 21
    assert np.all(fi.columns["fluct_re"] == 0)
    fni = trajectory_compare(cfg, sp, a0, 0.4, 0.02, "fni")
    inner = slice(1, -1)
    assert np.all(fni.columns["ehrenfest_resid"][inner] <= fni.columns["resid_bound"][inner])
    with pytest.raises(ValueError):
        trajectory_compare(cfg, sp, a0, 0.4, 0.02, "fi")
    with pytest.raises(ValueError):
        trajectory_compare(cfg, sp, a0, 0.4, 0.02, "other")
