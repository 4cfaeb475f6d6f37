import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.special import eval_hermite, factorial

from catdyn.fockspace import (K_GUARD, TrustRegionError, basis_ket, build_space, coherent_state,
                              gaussian_coefficients, ladder, modified_bra, new_operators,
                              overlap, polynomial_operator, required_ncut, theorem1_residual,
                              wavepacket)


def hermite_function(n, x, length):
    """Oscillator eigenfunction <x|n> for an oscillator of the given length."""
    y = x / length
    norm = 1.0 / np.sqrt(2.0 ** n * factorial(n) * np.sqrt(np.pi) * length)
    return norm * eval_hermite(n, y) * np.exp(-y * y / 2)


def test_ladder_two_level():
    # the smallest ladder, built directly (spaces themselves need n_cut >= 8)
    a = ladder(2)
    np.testing.assert_allclose(a, [[0, 1], [0, 0]])
    q = np.sqrt(1.0 * 1.0 / 2) * (a + a.conj().T)
    np.testing.assert_allclose(q, np.sqrt(0.5) * np.array([[0, 1], [1, 0]]))


def test_ladder_entries():
    a = ladder(5)
    np.testing.assert_allclose(np.diag(a, 1), np.sqrt([1, 2, 3, 4]))
    assert np.count_nonzero(a) == 4


def test_build_space_rejects_bad_input():
    with pytest.raises(ValueError):
        build_space(4)
    with pytest.raises(ValueError):
        build_space(20, eps=2.0, eps_prime=0.6)
    with pytest.raises(ValueError):
        build_space(20, hbar=-1)


def test_operators_are_read_only():
    sp = build_space(10)
    with pytest.raises(ValueError):
        sp.q_op[0, 0] = 1


def test_hermitian_canonical_pair_interior():
    sp = build_space(40, hbar=2.0, eps=0.3)
    c = sp.q_op @ sp.p_op - sp.p_op @ sp.q_op
    err = np.max(np.abs(sp.interior(c - 1j * sp.hbar * sp.identity, guard=1)))
    assert err < 1e-12


@pytest.mark.parametrize("eps,eps_p", [(1e-2, 1e-2), (0.3, 0.5), (1.0, 0.01)])
def test_new_pair_canonical_interior(eps, eps_p):
    sp = build_space(60, 1.0, eps, eps_p)
    q, p = new_operators(sp)
    err = np.max(np.abs(sp.interior(q @ p - p @ q - 1j * sp.identity, K_GUARD)))
    assert err < 1e-10


def test_new_operators_not_hermitian():
    sp = build_space(20, 1.0, 0.1, 0.1)
    q, p = new_operators(sp)
    assert np.max(np.abs(q - q.conj().T)) > 1e-3
    assert np.max(np.abs(p - p.conj().T)) > 1e-3


def test_coherent_state_matches_displacement():
    sp = build_space(60)
    alpha = 1.2 - 0.7j
    vac = np.zeros(60, complex)
    vac[0] = 1
    big = build_space(120)
    D = expm(alpha * big.a_dag - np.conj(alpha) * big.a)
    ref = (D @ np.eye(120)[0])[:60]
    np.testing.assert_allclose(coherent_state(sp, alpha), ref, atol=1e-12)


def test_coherent_state_eigenvector_of_a():
    sp = build_space(60)
    c = coherent_state(sp, 2 + 1j)
    np.testing.assert_allclose((sp.a @ c)[:40], (2 + 1j) * c[:40], atol=1e-12)


def test_trust_region():
    sp = build_space(20)
    assert required_ncut(8) == 112
    with pytest.raises(TrustRegionError) as info:
        coherent_state(sp, 8)
    assert info.value.required == 112


def test_gaussian_coefficients_against_hermite_projection():
    length = 0.7
    alpha, beta = 0.4 + 0.2j, 0.3 - 0.5j
    x = np.linspace(-12, 12, 6001)
    f = np.exp(-alpha * x * x + beta * x)
    ref = [np.trapezoid(hermite_function(n, x, length) * f, x) for n in range(12)]
    got = gaussian_coefficients(12, length, alpha, beta)
    np.testing.assert_allclose(got, ref, atol=1e-9)


def test_wavepacket_normalized():
    sp = build_space(80, 1.0, 1.0, 0.01)
    w = wavepacket(sp, 0.5, -0.3, 1.0)
    assert abs(np.linalg.norm(w) - 1) < 1e-10


def _eigen_residual(n, val):
    sp = build_space(n)
    q, _ = new_operators(sp)
    ket = basis_ket(sp, "q", val)
    return np.linalg.norm(q.conj().T @ ket - val * ket) / np.linalg.norm(ket)


def test_q_ket_eigenrelation_of_adjoint():
    # |q>_new is an eigenket of the adjoint of q_new
    for val in (1.0, 0.5 + 0.2j):
        assert _eigen_residual(200, val) < 1e-8


def test_eigenrelation_residual_decreases_with_ncut():
    res = [_eigen_residual(n, 1.0) for n in (94, 100, 110, 120)]
    assert all(res[i + 1] < res[i] for i in range(3))


def test_q_ket_alias_and_unknown_kind():
    sp = build_space(20)
    np.testing.assert_array_equal(basis_ket(sp, "q-ket", 0.3), basis_ket(sp, "q", 0.3))
    with pytest.raises(ValueError):
        basis_ket(sp, "x", 0.0)


def test_modified_bra_is_analytic():
    sp = build_space(60)
    v = 0.4 + 0.3j
    np.testing.assert_allclose(modified_bra(sp, "q", v), np.conj(basis_ket(sp, "q", np.conj(v))))


def test_qq_overlap_is_smeared_delta():
    # <q'|q> with the modified bra is a Gaussian of variance set by eps, eps'
    sp = build_space(100)
    k2 = sp.k ** 2
    for a, b in ((0.1, -0.05), (0.3, 0.2)):
        val = overlap(sp, "q", a, "q", b)
        width = sp.hbar * sp.eps / k2
        ref = np.sqrt(1 / (4 * np.pi * width)) * np.exp(-(a - b) ** 2 / (4 * width))
        assert abs(val - ref) < 1e-8 * abs(ref)


def test_fourier_kernel_large_hbar():
    hbar = 100.0
    sp = build_space(200, hbar, 1.5e-4, 1.5e-4)
    val = overlap(sp, "q", 0.75, "p", -1.5)
    ref = np.exp(1j * 0.75 * -1.5 / hbar) / np.sqrt(2 * np.pi * hbar)
    assert abs(val - ref) < 1e-6


def test_polynomial_operator_words():
    sp = build_space(20, 1.0, 0.1, 0.2)
    q, p = new_operators(sp)
    op = polynomial_operator(sp, [(2.0, "q p"), (1j, ["qd"]), (3.0, [])])
    np.testing.assert_allclose(op, 2 * q @ p + 1j * q.conj().T + 3 * sp.identity)
    herm = polynomial_operator(sp, [(1.0, "q pd")], use_new=False)
    np.testing.assert_allclose(herm, sp.q_op @ sp.p_op)
    with pytest.raises(ValueError):
        polynomial_operator(sp, [(1.0, "z")])


def test_theorem1_residual_shrinks_with_eps():
    res = []
    for e in (2e-3, 1e-3):
        lam = 1.0 / np.sqrt(2 * e)
        sp = build_space(required_ncut(lam) + 8, 1.0, e, e)
        res.append(theorem1_residual(sp, [(1.0, ["q"])]))
    assert res[1] < res[0] < 1e-2


@settings(max_examples=25, deadline=None)
@given(st.complex_numbers(max_magnitude=2.5, allow_nan=False, allow_infinity=False))
def test_coherent_norm_property(alpha):
    sp = build_space(60)
    assert abs(np.linalg.norm(coherent_state(sp, alpha)) - 1) < 1e-9
