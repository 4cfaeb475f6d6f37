"""Time-sliced path integrals with complex mass and potential, xi-states and
the formal Lagrangian used for the momentum relation."""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .contour import ContourPath, contour_integrate, quadrature_rule, sign
from .dynamics import ModelConfig, build_hamiltonian, propagator
from .expectations import classical_path
from .fockspace import gaussian_coefficients


def principal_sqrt(z):
    return np.sqrt(np.asarray(z, dtype=complex))


@dataclass(frozen=True)
class GaussianWave:
    """psi(x) = scale * exp(-alpha x^2 + beta x), analytic in x."""

    alpha: complex
    beta: complex = 0.0
    scale: complex = 1.0

    @classmethod
    def packet(cls, q0=0.0, p0=0.0, width=1.0, hbar=1.0):
        """Normalized packet exp(-(x-q0)^2/(2 width^2) + i p0 x/hbar)."""
        a = 1.0 / (2.0 * width ** 2)
        return cls(a, 2 * a * q0 + 1j * p0 / hbar,
                   (np.pi * width ** 2) ** -0.25 * np.exp(-a * q0 ** 2))

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        return self.scale * np.exp(-self.alpha * x * x + self.beta * x)

    def coefficients(self, space):
        return gaussian_coefficients(space.n_cut, space.length, self.alpha, self.beta, self.scale)


@dataclass(frozen=True)
class Lattice:
    """n_slices time points (n_slices - 1 intervals of width dt) over ``horizon``."""

    n_slices: int
    horizon: float
    q_path: ContourPath
    order: int = 16

    def __post_init__(self):
        if self.n_slices < 1:
            raise ValueError("n_slices must be positive")
        if self.n_slices > 1 and self.horizon <= 0:
            raise ValueError("horizon must be positive")

    @property
    def dt(self):
        return self.horizon / (self.n_slices - 1) if self.n_slices > 1 else 0.0

    @property
    def extent(self):
        return self.q_path.extent


def slice_angle(cfg: ModelConfig, min_angle=np.pi / 12):
    """Tilt of the per-slice q contour: half the mass phase, at least ``min_angle``."""
    return max(0.5 * np.arctan2(cfg.m.imag, cfg.m.real), min_angle)


def make_lattice(cfg: ModelConfig, n_slices, horizon, extent=10.0, angle=None, order=16):
    """Lattice with a straight tilted contour and panels that resolve one slice kernel."""
    if angle is None:
        angle = slice_angle(cfg)
    dt = horizon / (n_slices - 1) if n_slices > 1 else horizon
    phase = np.angle(cfg.m) + 2 * angle
    damping = abs(cfg.m) * np.sin(phase) / (cfg.hbar * dt) if dt > 0 else np.inf
    width = 1.0 / np.sqrt(damping) if damping > 0 else 0.05
    panel = float(np.clip(1.5 * width, 0.02, 0.5))
    n_seg = int(np.ceil(2 * extent / (panel * np.cos(angle))))
    return Lattice(n_slices, horizon, ContourPath.line(0.0, extent, angle, n_seg), order)


def lagrangian(cfg: ModelConfig, q, qdot):
    return 0.5 * cfg.m * qdot ** 2 - cfg.potential(q)


def slice_exponent(q_next, q_cur, cfg: ModelConfig, dt):
    """(i/hbar) dt L(qdot, q_cur) with qdot = (q_next - q_cur)/dt."""
    q_next = np.asarray(q_next, dtype=complex)
    q_cur = np.asarray(q_cur, dtype=complex)
    qdot = (q_next - q_cur) / dt
    return 1j / cfg.hbar * dt * lagrangian(cfg, q_cur, qdot)


def slice_kernel(q_next, q_cur, cfg: ModelConfig, dt):
    """sqrt(m/(2 pi i hbar dt)) exp[(i/hbar) dt L(qdot, q_cur)], principal root."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    pref = principal_sqrt(cfg.m / (2j * np.pi * cfg.hbar * dt))
    return pref * np.exp(slice_exponent(q_next, q_cur, cfg, dt))


def saddle_path(cfg: ModelConfig, qdot, dt, n_seg=400):
    """Steepest-descent line through the saddle p = m*qdot of the momentum integrand."""
    m = cfg.m
    angle = 0.5 * np.angle(m) - np.pi / 4
    lim = np.pi / 4 - 0.05
    angle = float(np.clip(angle, -lim, lim))
    # decay exp(-dt s^2 |sin(2 angle - arg m)| / (2 hbar |m|)) to 1e-16 at the ends
    rate = dt * abs(np.sin(2 * angle - np.angle(m))) / (2 * cfg.hbar * abs(m))
    half = np.sqrt(40.0 / rate)
    return ContourPath.line(m * qdot, half * np.cos(angle), angle, n_seg)


def momentum_integrand(p, q_cur, qdot, cfg: ModelConfig, dt):
    """(2 pi hbar)^-1 exp[(i/hbar) dt (p qdot - H(p, q_cur))]."""
    p = np.asarray(p, dtype=complex)
    h = p * p / (2 * cfg.m) + cfg.potential(q_cur)
    return np.exp(1j / cfg.hbar * dt * (p * qdot - h)) / (2 * np.pi * cfg.hbar)


def gaussian_p_integral(q_cur, qdot, cfg: ModelConfig, dt, p_path: ContourPath = None):
    """Momentum integral of one time slice along ``p_path`` (default: the saddle path)."""
    if p_path is None:
        p_path = saddle_path(cfg, qdot, dt)
    return contour_integrate(lambda p: momentum_integrand(p, q_cur, qdot, cfg, dt), p_path)


def lattice_amplitude(psi_i, psi_f, cfg: ModelConfig, lattice: Lattice):
    """Composed slice kernels between psi_i and the analytic bra function psi_f.

    ``psi_f`` is the function q -> <f|q> (coefficient-conjugated continuation
    of the final wavefunction); for real-coefficient Gaussians it is the
    wavefunction itself.
    """
    z, w = quadrature_rule(lattice.q_path, lattice.order)
    for name, fn in (("psi_i", psi_i), ("psi_f", psi_f)):
        ends = np.abs(fn(lattice.q_path.nodes[[0, -1]]))
        peak = np.max(np.abs(fn(z)))
        if np.max(ends) >= 1e-12 * peak:
            raise ValueError(f"{name} does not decay on the contour; increase extent beyond "
                             f"{lattice.extent:.3g}")
    v = psi_i(z).astype(complex)
    if lattice.n_slices > 1:
        K = slice_kernel(z[:, None], z[None, :], cfg, lattice.dt) * w[None, :]
        for _ in range(lattice.n_slices - 1):
            v = K @ v
    return complex(np.sum(w * psi_f(z) * v))


def operator_amplitude(psi_i: GaussianWave, psi_f: GaussianWave, cfg: ModelConfig, space,
                       horizon):
    """<f| exp(-i H T/hbar) |i> in the truncated Fock basis (hermitian-args H)."""
    H = build_hamiltonian(cfg, space, "hermitian-args")
    ci = psi_i.coefficients(space)
    cf = psi_f.coefficients(space)
    return complex(cf @ (propagator(H, horizon, "A", cfg.hbar) @ ci))


def _gaussian_2d_integral(A, b):
    """int exp(-1/2 v^T A v + b^T v) d^2v for complex symmetric A with Re A > 0.

    The square root of det A is continued from the identity along
    (1 - s) I + s A, which stays inside the convergent region.
    """
    s = np.linspace(0.0, 1.0, 2001)
    dets = [np.linalg.det((1 - x) * np.eye(2) + x * A) for x in s]
    phase = np.unwrap(np.angle(dets))[-1]
    sqrt_det = np.sqrt(abs(dets[-1])) * np.exp(0.5j * phase)
    return 2 * np.pi / sqrt_det * np.exp(0.5 * b @ np.linalg.solve(A, b))


def harmonic_amplitude(psi_i: GaussianWave, psi_f: GaussianWave, mass, omega, horizon, hbar=1.0):
    """Closed-form <f|exp(-iHT)|i> for H = p^2/(2m) + m omega^2 q^2/2 (real m, omega).

    Uses the Mehler kernel; valid for 0 < omega*T < pi.
    """
    st = np.sin(omega * horizon)
    ct = np.cos(omega * horizon)
    kappa = mass * omega / (2 * hbar * st)
    pref = np.sqrt(mass * omega / (2j * np.pi * hbar * st))
    # exponent of psi_f(x) K(x, y) psi_i(y) written as -1/2 v^T A v + b^T v, v = (x, y)
    A = np.array([[2 * psi_f.alpha - 2j * kappa * ct, 2j * kappa],
                  [2j * kappa, 2 * psi_i.alpha - 2j * kappa * ct]], dtype=complex)
    b = np.array([psi_f.beta, psi_i.beta], dtype=complex)
    return complex(pref * psi_f.scale * psi_i.scale * _gaussian_2d_integral(A, b))


def xi_exponent(q, xi, cfg: ModelConfig, dt):
    q = np.asarray(q, dtype=complex)
    return 1j / cfg.hbar * cfg.m / dt * (xi * q - 0.5 * q * q)


def xi_state(q, xi, cfg: ModelConfig, dt):
    """exp[(i/hbar)(m/dt)(xi q - q^2/2)]: momentum m(xi - q)/dt at q, value 1 at q = 0."""
    return np.exp(xi_exponent(q, xi, cfg, dt))


def xi_ode_residual(q, xi, cfg: ModelConfig, dt, h):
    """|(hbar/i) psi'/psi - m (xi - q)/dt| with a central difference of step h."""
    d = (xi_state(q + h, xi, cfg, dt) - xi_state(q - h, xi, cfg, dt)) / (2 * h)
    return abs(cfg.hbar / 1j * d / xi_state(q, xi, cfg, dt) - cfg.m * (xi - q) / dt)


def propagate_xi(q_next, xi, cfg: ModelConfig, dt, source=0.0, width=1.0):
    """One slice of the xi-state with the known prefactor exp[i m q_next^2/(2 hbar dt)] removed.

    The plane-wave-like xi-state is regularized by the Gaussian envelope
    exp(-(q - source)^2 / (2 width^2)).  With complex mass an off-centre
    envelope moves the peak by O(dt) even for V = 0.
    """
    path = ContourPath.line(source, 12 * width, 0.0, int(np.ceil(24 * width / 0.1)))
    pref = principal_sqrt(cfg.m / (2j * np.pi * cfg.hbar * dt))
    out = np.empty(len(q_next), dtype=complex)
    for i, qn in enumerate(q_next):
        strip = 1j * cfg.m * qn ** 2 / (2 * cfg.hbar * dt)

        def f(q):
            # exponents are summed first: the factors alone overflow for complex m
            expo = (slice_exponent(qn, q, cfg, dt) + xi_exponent(q, xi, cfg, dt)
                    - (q - source) ** 2 / (2 * width ** 2) - strip)
            return np.exp(expo)

        out[i] = pref * contour_integrate(f, path)
    return out


def xi_propagation_check(xi, cfg: ModelConfig, dt, lattice=None, angle=None, n_grid=161,
                         halfwidth=None, source=0.0, width=1.0):
    """Peak of the propagated xi-state along a grid through xi.

    Returns (peak_location, |peak_location - xi|).  The grid is a straight
    permitted line through xi (angle 0 unless given) and the peak is refined
    by a parabola through log|amplitude| at the discrete maximum.
    """
    xi = complex(xi)
    if angle is None:
        angle = 0.0
    if halfwidth is None:
        halfwidth = 8 * cfg.hbar * dt / (abs(cfg.m) * width)
        if lattice is not None:
            halfwidth = min(halfwidth, lattice.extent)
    s = np.linspace(-halfwidth, halfwidth, n_grid)
    direction = np.exp(1j * angle)
    grid = xi + s * direction
    amp = propagate_xi(grid, xi, cfg, dt, source, width)
    la = np.log(np.abs(amp))
    j = int(np.argmax(la))
    if j == 0 or j == n_grid - 1:
        raise ValueError(f"peak at the grid edge; widen the grid beyond halfwidth {halfwidth:.3g}")
    y0, y1, y2 = la[j - 1], la[j], la[j + 1]
    h = s[1] - s[0]
    shift = 0.5 * h * (y0 - y2) / (y0 - 2 * y1 + y2)
    peak = xi + (s[j] + shift) * direction
    return complex(peak), float(abs(peak - xi))


def step(x):
    """Time step function used by the formal mass and potential, step(0) = 0."""
    return sign(x)


def formal_lagrangian_eval(q_val, qdot_val, t_prime, t, cfg: ModelConfig):
    """(L_formal, m_formal, V_formal) at formal time t_prime about the anchor t."""
    e = step(t_prime - t)
    m_f = cfg.m.real - 1j * e * cfg.m.imag
    V_f = cfg.V_R(q_val) - 1j * e * cfg.V_I(q_val)
    return 0.5 * m_f * qdot_val ** 2 - V_f, m_f, V_f


def action_weight(t_prime, t, variant="formal"):
    """Prefactor multiplying the Lagrangian inside the exponent.

    ``"formal"`` carries -step(t' - t) from the time reflection.  ``"formal2"``
    is the naive alternative that keeps weight 1 on the whole interval; as a
    function it evaluates to the same Lagrangian, but it only maps the
    history up to t onto the full time range and is kept as a negative
    example (it does not represent the norm of the state at t).
    """
    if variant == "formal":
        return -step(t_prime - t)
    if variant == "formal2":
        return 1.0
    raise ValueError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class FormalTrajectory:
    anchor: float
    times: np.ndarray
    q_formal: np.ndarray
    p_formal: np.ndarray
    qdot_formal: np.ndarray
    step_size: float

    @property
    def half_width(self):
        return 0.5 * (self.times[-1] - self.times[0])


def formal_trajectory(cfg: ModelConfig, q_anchor, v_anchor, t=0.0, half_width=0.5, h=1e-3,
                      reflect_only=False):
    """Formal trajectory around the anchor t.

    Before t it follows the classical effective path (m_eff qddot = -V_R')
    through (q_anchor, v_anchor) at t, with p_formal = m * qdot.  After t the
    path is the mirrored history; by default its velocity is rescaled by
    m / conj(m) so that p_formal = conj(m) * qdot is continuous at t.  With
    ``reflect_only`` the bare reflection q_formal(t'') = q(2t - t'') is used.
    """
    n = int(round(half_width / h))
    s = h * np.arange(n + 1)
    force = lambda x: -cfg.V_R.deriv()(x)
    # integrate backwards from the anchor: time runs t, t-h, ...
    q_back, p_back = classical_path(cfg.m_eff, force, q_anchor, cfg.m_eff * v_anchor, -s, 10)
    v_back = p_back / cfg.m_eff
    m = cfg.m
    times = t + h * np.arange(-n, n + 1)
    q_left = q_back[::-1]
    v_left = v_back[::-1]
    if reflect_only:
        q_right = q_back[1:]
        v_right = -v_back[1:]
    else:
        ratio = m / np.conj(m)
        q_right = q_back[0] + ratio * (q_back[0] - q_back[1:])
        v_right = ratio * v_back[1:]
    q_f = np.concatenate([q_left, q_right])
    v_f = np.concatenate([v_left, v_right])
    m_f = np.array([formal_lagrangian_eval(0.0, 0.0, tp, t, cfg)[1] for tp in times])
    # at t itself the step is 0; use the left (history) value m there
    m_f[n] = m
    return FormalTrajectory(t, times, q_f, m_f * v_f, v_f, h)


def window_identity(cfg: ModelConfig, window, h=None):
    """(1/2W) int dt' / m_formal(t' - t) over a symmetric window, by quadrature."""
    if h is None:
        h = window / 8
    k = int(round(window / h))
    left = np.full(k + 1, 1.0 / cfg.m)
    right = np.full(k + 1, 1.0 / np.conj(cfg.m))
    return complex((simpson(left, dx=h) + simpson(right, dx=h)) / (2 * k * h))


def _window_points(traj: FormalTrajectory, window):
    h = traj.step_size
    k = int(round(window / h))
    if abs(k * h - window) > 1e-9 * max(1.0, window) or k < 2:
        raise ValueError("window must be a multiple (>= 2) of the grid step")
    n = (len(traj.times) - 1) // 2
    if k > n:
        raise ValueError(f"window {window} exceeds the trajectory half-width {traj.half_width}")
    return n, k, h


def averaged_momentum_check(traj: FormalTrajectory, cfg: ModelConfig, window):
    """lhs = window average of p_formal / m_formal; rhs = p(t)/m_eff.

    Each side of t is integrated with its own one-sided limit of
    1/m_formal, so the jump of the formal mass at t costs no accuracy.
    """
    n, k, h = _window_points(traj, window)
    left = traj.p_formal[n - k:n + 1] / cfg.m
    right = traj.p_formal[n:n + k + 1] / np.conj(cfg.m)
    lhs = complex((simpson(left, dx=h) + simpson(right, dx=h)) / (2 * window))
    rhs = complex(traj.p_formal[n] / cfg.m_eff)
    return lhs, rhs, abs(lhs - rhs)
