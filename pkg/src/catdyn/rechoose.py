"""B-state re-chosen to coincide with the A-state at an anchor time, and the
checks that its two-time derivatives reassemble the AA time derivative."""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, solve

from .dynamics import EvolutionRecord, evolve, growth_rate, split_hermitian
from .expectations import (DecompositionReport, anticommutator, commutator, exp_aa,
                           exp_ba)

COND_LIMIT = 1e8


class ConditioningError(ArithmeticError):
    pass


@dataclass
class RechosenB:
    """B_t(t') = exp(-i H^dag (t' - t)/hbar) A(t) for a fixed anchor t."""

    anchor_time: float
    anchor_state: np.ndarray
    H: np.ndarray = field(repr=False)
    hbar: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    def state_at(self, t_prime):
        if t_prime == self.anchor_time:
            return self.anchor_state
        key = float(t_prime)
        if key not in self._cache:
            self._cache[key] = evolve(self.anchor_state, self.H, t_prime - self.anchor_time,
                                      "B", self.hbar)
        return self._cache[key]


def rechoose_b(traj: EvolutionRecord, t, base=None):
    """Anchor B at A(t); ``base`` fixes the stored state A(t) is evolved from."""
    a_t = traj.a_at(t, base)
    return RechosenB(float(t), a_t, traj.H, traj.hbar)


def max_separation(H, hbar=1.0):
    """Cap on |t - t''| from the growth rate of the H^dag propagator."""
    rate = max(growth_rate(np.asarray(H).conj().T, hbar), growth_rate(-np.asarray(H).conj().T, hbar))
    return np.log(COND_LIMIT) / (2 * rate) if rate > 0 else np.inf


def bt_anchor_derivative_check(traj: EvolutionRecord, t, t2, dt, return_cond=False):
    """Relative residual of i hbar d/dt B_t(t'') against U^{-1} 2 H_a U B_t(t''),
    with U = exp(-i H^dag (t - t'')/hbar).  The inverse is applied by a linear solve."""
    H = traj.H
    hbar = traj.hbar
    U = expm(-1j * H.conj().T * (t - t2) / hbar)
    cond = np.linalg.cond(U)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ConditioningError(
            f"propagator over |t - t''| = {abs(t - t2):.3g} has condition number {cond:.3g} "
            f"> {COND_LIMIT:.0e}; reduce the separation below {max_separation(H, hbar):.3g}")
    # the three anchors share one stored state so their norms are consistent
    b_mid = rechoose_b(traj, t, base=t).state_at(t2)
    b_plus = rechoose_b(traj, t + dt, base=t).state_at(t2)
    b_minus = rechoose_b(traj, t - dt, base=t).state_at(t2)
    lhs = 1j * hbar * (b_plus - b_minus) / (2 * dt)
    _, H_a = split_hermitian(H)
    rhs = solve(U, 2 * H_a @ (U @ b_mid))
    res = float(np.linalg.norm(lhs - rhs) / np.linalg.norm(b_mid))
    return (res, cond) if return_cond else res


def rechoose_terms(O, traj: EvolutionRecord, t):
    """Analytic (term_t', term_t) at the anchor."""
    hbar = traj.hbar
    H = traj.H
    _, H_a = split_hermitian(H)
    a_t = traj.a_at(t)
    term_tp = 1j / hbar * exp_aa(commutator(H, O), a_t)
    mean = exp_aa(O, a_t)
    shifted = O - mean * np.eye(O.shape[0])
    term_t = (-exp_aa(commutator(O, H_a), a_t) + exp_aa(anticommutator(shifted, H_a), a_t)) / (1j * hbar)
    return term_tp, term_t


def decomposition_check(O, traj: EvolutionRecord, t, dt):
    """Re-chosen-B decomposition of d/dt <O>^AA.

    The report's ``commutator_term`` slot holds the t'-derivative term
    (i/hbar)<[H,O]> and ``fluctuation_term`` holds the anchor-derivative term;
    ``total_fd`` is the central difference of <O>^AA and ``residual`` the
    mismatch with their sum.
    """
    hbar = traj.hbar
    term_tp, term_t = rechoose_terms(O, traj, t)
    fd = (exp_aa(O, traj.a_at(t + dt)) - exp_aa(O, traj.a_at(t - dt))) / (2 * dt)
    return DecompositionReport(fd, term_tp, term_t, fd - term_tp - term_t)


def partial_derivatives_fd(O, traj: EvolutionRecord, t, dt):
    """Finite-difference versions of both partial derivatives of <O>^{B_t(t') A(t')}."""
    rb = rechoose_b(traj, t)
    d_tp = (exp_ba(O, rb.state_at(t + dt), traj.a_at(t + dt))
            - exp_ba(O, rb.state_at(t - dt), traj.a_at(t - dt))) / (2 * dt)
    a_t = traj.a_at(t)
    d_t = (exp_ba(O, rechoose_b(traj, t + dt).state_at(t), a_t)
           - exp_ba(O, rechoose_b(traj, t - dt).state_at(t), a_t)) / (2 * dt)
    return d_tp, d_t
