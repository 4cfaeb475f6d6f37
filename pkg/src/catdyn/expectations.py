"""BA and AA expectation functionals, their time-derivative identities and the
effective classical objects derived from a complex action."""

from dataclasses import dataclass

import numpy as np

from .contour import PolyFunction, poly_reim_split
from .dynamics import (ModelConfig, build_hamiltonian, evolve, evolve_trajectory,
                       split_hermitian)
from .series import TimeSeries


class IllConditionedError(ValueError):
    pass


@dataclass(frozen=True)
class DecompositionReport:
    """total_fd is the finite-difference d/dt; the two terms already include
    their 1/(i hbar) factors, so residual = total_fd - (commutator + fluctuation)."""

    total_fd: complex
    commutator_term: complex
    fluctuation_term: complex
    residual: complex


@dataclass(frozen=True)
class EffectiveObjects:
    m_eff: float
    V_R: PolyFunction
    V_I: PolyFunction
    L_R: dict
    L_I: dict
    L_eff: dict
    H_R_matrix: np.ndarray
    H_eff_matrix: np.ndarray
    H_h_matrix: np.ndarray


def exp_ba(O, B, A, tol=1e-10):
    """<B|O|A> / <B|A>."""
    den = np.vdot(B, A)
    if abs(den) <= tol * np.linalg.norm(B) * np.linalg.norm(A):
        raise IllConditionedError("BA-functional ill-conditioned: <B|A> is nearly zero")
    return complex(np.vdot(B, O @ A) / den)


def exp_aa(O, A):
    """<A|O|A> / <A|A>."""
    nrm2 = np.vdot(A, A).real
    if nrm2 == 0:
        raise ValueError("zero state")
    return complex(np.vdot(A, O @ A) / nrm2)


def commutator(X, Y):
    return X @ Y - Y @ X


def anticommutator(X, Y):
    return X @ Y + Y @ X


def ddt_identity_ba(O, H, a0, b_final, t, dt, t0=0.0, t_final=None, hbar=1.0):
    """Central difference of <O>^BA at t against (i/hbar)<[H,O]>^BA.

    A(t) = exp(-iH(t-t0)) a0 and B(t) = exp(-iH^dag(t-t_final)) b_final;
    ``t_final`` defaults to t (then b_final is B(t)).
    """
    if t_final is None:
        t_final = t
    a_t = evolve(a0, H, t - t0, "A", hbar)
    b_t = evolve(b_final, H, t - t_final, "B", hbar)

    def f(s):
        return exp_ba(O, evolve(b_t, H, s, "B", hbar), evolve(a_t, H, s, "A", hbar))

    fd = (f(dt) - f(-dt)) / (2 * dt)
    comm = 1j / hbar * exp_ba(commutator(H, O), b_t, a_t)
    return DecompositionReport(fd, comm, 0j, fd - comm)


def fluctuation_term(O, H_a, A, hbar=1.0):
    """(1/i hbar) <{O - <O>, H_a}>^AA."""
    mean = exp_aa(O, A)
    shifted = O - mean * np.eye(O.shape[0])
    return exp_aa(anticommutator(shifted, H_a), A) / (1j * hbar)


def ddt_decomposition_aa(O, H, a0, t, dt, t0=0.0, hbar=1.0):
    """Central difference of <O>^AA at t against its commutator and fluctuation parts."""
    a_t = evolve(a0, H, t - t0, "A", hbar)
    fd = (exp_aa(O, evolve(a_t, H, dt, "A", hbar))
          - exp_aa(O, evolve(a_t, H, -dt, "A", hbar))) / (2 * dt)
    H_h, H_a = split_hermitian(H)
    comm = exp_aa(commutator(O, H_h), a_t) / (1j * hbar)
    fl = fluctuation_term(O, H_a, a_t, hbar)
    return DecompositionReport(fd, comm, fl, fd - comm - fl)


def richardson_ratio(check, dt):
    """|residual(dt)| / |residual(dt/2)| for a callable returning a report or a number."""
    r1 = check(dt)
    r2 = check(dt / 2)
    r1 = abs(getattr(r1, "residual", r1))
    r2 = abs(getattr(r2, "residual", r2))
    return r1 / r2, r1, r2


def effective_quantities(cfg: ModelConfig, space):
    """m_eff, real/imaginary Lagrangian pieces and the effective Hamiltonians."""
    m = cfg.m
    if m.real == 0:
        raise ValueError("effective mass singular (m_R = 0)")
    m_eff = m.real + m.imag ** 2 / m.real
    V_R, V_I = poly_reim_split(cfg.potential)
    q, p = space.q_op, space.p_op
    H = build_hamiltonian(cfg, space, "hermitian-args")
    H_h, _ = split_hermitian(H)
    # H_R: coefficient-wise real part of H(p, q) = p^2/(2m) + V(q)
    H_R = (1.0 / m).real * (p @ p) / 2.0 + V_R.of_matrix(q)
    H_eff = p @ p / (2.0 * m_eff) + V_R.of_matrix(q)
    return EffectiveObjects(
        m_eff=m_eff, V_R=V_R, V_I=V_I,
        L_R={"kinetic": m.real / 2, "potential": V_R},
        L_I={"kinetic": m.imag / 2, "potential": V_I},
        L_eff={"kinetic": m_eff / 2, "potential": V_R},
        H_R_matrix=H_R, H_eff_matrix=H_eff, H_h_matrix=H_h,
    )


def rk4(rhs, y0, t0, t1, n_steps):
    """Fixed-step classical RK4 returning the end state."""
    y = np.asarray(y0, dtype=complex)
    h = (t1 - t0) / n_steps
    t = t0
    for _ in range(n_steps):
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def classical_path(mass, force, q0, p0, times, substeps=10):
    """Integrate mass * qddot = force(q) from (q0, p0) on the given times (RK4, dt/substeps)."""
    def rhs(_, y):
        return np.array([y[1] / mass, force(y[0])])

    out = np.empty((len(times), 2), dtype=complex)
    y = np.array([q0, p0], dtype=complex)
    out[0] = y
    for i in range(1, len(times)):
        y = rk4(rhs, y, times[i - 1], times[i], substeps)
        out[i] = y
    return out[:, 0], out[:, 1]


def breakdown_time(times, quantum, classical, rel=0.05):
    """First time the quantum/classical deviation exceeds rel * max|classical|."""
    scale = np.max(np.abs(classical))
    dev = np.abs(np.asarray(quantum) - np.asarray(classical)) / scale
    bad = np.flatnonzero(dev > rel)
    return float(times[bad[0]]) if bad.size else float("inf"), dev


def trajectory_compare(cfg, space, a0, horizon, dt, mode="fni", b_final=None):
    """Time series of <q>, <p>, identity terms and classical comparison.

    mode "fni" uses AA functionals and the real effective classical path
    (m_eff, V_R); mode "fi" uses BA functionals (needs ``b_final`` at the
    horizon) and the complex classical path (m, V).
    """
    hbar = cfg.hbar
    n = int(round(horizon / dt))
    times = dt * np.arange(n + 1)
    H = build_hamiltonian(cfg, space)
    H_h, H_a = split_hermitian(H)
    q, p = space.q_op, space.p_op
    vr1 = cfg.V_R.deriv().of_matrix(q)
    v1 = cfg.potential.deriv().of_matrix(q)
    if mode == "fi":
        if b_final is None:
            raise ValueError("fi mode needs B at the horizon")
        rec = evolve_trajectory(H, a0, times, b_final, hbar)
        pairs = list(zip(rec.b_states, rec.a_states))
        qv = np.array([exp_ba(q, b, a) for b, a in pairs])
        pv = np.array([exp_ba(p, b, a) for b, a in pairs])
        force = np.array([-exp_ba(v1, b, a) for b, a in pairs])
        comm = np.array([1j / hbar * exp_ba(commutator(H, q), b, a) for b, a in pairs])
        fluct = np.zeros_like(comm)
        fluct_p = np.zeros_like(comm)
        mass = cfg.m
        qc, pc = classical_path(cfg.m, cfg.force, qv[0], pv[0], times)
    elif mode == "fni":
        rec = evolve_trajectory(H, a0, times, None, hbar)
        qv = np.array([exp_aa(q, a) for a in rec.a_states])
        pv = np.array([exp_aa(p, a) for a in rec.a_states])
        force = np.array([-exp_aa(vr1, a) for a in rec.a_states])
        comm = np.array([exp_aa(commutator(q, H_h), a) / (1j * hbar) for a in rec.a_states])
        fluct = np.array([fluctuation_term(q, H_a, a, hbar) for a in rec.a_states])
        fluct_p = np.array([fluctuation_term(p, H_a, a, hbar) for a in rec.a_states])
        mass = cfg.m_eff
        qc, pc = classical_path(cfg.m_eff, lambda x: -cfg.V_R.deriv()(x), qv[0].real, pv[0].real, times)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    # Ehrenfest residual m * d2<q>/dt2 - <force> by central second differences
    resid = np.full(len(times), np.nan, dtype=complex)
    resid[1:-1] = mass * (qv[2:] - 2 * qv[1:-1] + qv[:-2]) / dt ** 2 - force[1:-1]
    # what the residual may be: fluctuation forcing plus finite-difference error
    dfluct = np.full(len(times), np.nan, dtype=complex)
    dfluct[1:-1] = (fluct[2:] - fluct[:-2]) / (2 * dt)
    bound = np.abs(fluct_p) + abs(mass) * np.abs(dfluct) + 10 * dt ** 2
    ratio = np.abs(fluct) / np.maximum(np.abs(comm), 1e-300)
    cols = {
        "t": times,
        "q_re": qv.real, "q_im": qv.imag,
        "p_re": pv.real, "p_im": pv.imag,
        "comm_re": comm.real, "comm_im": comm.imag,
        "fluct_re": fluct.real, "fluct_im": fluct.imag,
        "fluct_ratio": ratio,
        "ehrenfest_resid": np.abs(resid),
        "resid_bound": bound,
        "q_cl_re": qc.real, "q_cl_im": qc.imag,
        "p_cl_re": pc.real, "p_cl_im": pc.imag,
    }
    return TimeSeries(cols, {"mode": mode, "dt": dt, "horizon": horizon})
