"""Non-Hermitian Hamiltonian construction and A/B state evolution."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .contour import PolyFunction, poly_reim_split
from .fockspace import new_operators

NORM_LIMIT = 1e100
GROWTH_WARN = 1e3


class NormOverflowError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Complex mass m, complex polynomial potential V and hbar."""

    m: complex
    potential: PolyFunction
    hbar: float = 1.0

    def __post_init__(self):
        m = complex(self.m)
        object.__setattr__(self, "m", m)
        if not isinstance(self.potential, PolyFunction):
            object.__setattr__(self, "potential", PolyFunction(self.potential))
        if m.imag < 0:
            raise ValueError(f"precondition m_I >= 0 violated (m_I = {m.imag})")
        if m.real == 0:
            raise ValueError("m_R must be nonzero (effective mass singular)")
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        if self.potential.degree < 2:
            raise ValueError("potential degree must be >= 2")
        lead = self.potential.coefficients[-1]
        if self.potential.degree % 2 or lead.imag > 0:
            # positive Im of the leading coefficient makes e^{-iHt} grow without bound
            warnings.warn("potential leading term is not damping (need even degree, Im(b_lead) <= 0)",
                          RuntimeWarning, stacklevel=2)

    @property
    def m_eff(self):
        return self.m.real + self.m.imag ** 2 / self.m.real

    @property
    def V_R(self):
        return poly_reim_split(self.potential)[0]

    @property
    def V_I(self):
        return poly_reim_split(self.potential)[1]

    def force(self, q):
        """-V'(q) for complex q."""
        return -self.potential.deriv()(q)


def default_model(hbar=1.0):
    """m = 1 + 0.5i, V = (0.5 + 0.1i) q^2 - 0.02i q^4."""
    return ModelConfig(1 + 0.5j, PolyFunction([0, 0, 0.5 + 0.1j, 0, -0.02j]), hbar)


def build_hamiltonian(cfg: ModelConfig, space, variant="hermitian-args"):
    """H = p^2/(2m) + V(q) with either the Hermitian or the regularized operators."""
    if variant == "hermitian-args":
        q, p = space.q_op, space.p_op
    elif variant == "new-args":
        q, p = new_operators(space)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return p @ p / (2.0 * cfg.m) + cfg.potential.of_matrix(q)


def split_hermitian(H):
    H = np.asarray(H)
    Hd = H.conj().T
    return 0.5 * (H + Hd), 0.5 * (H - Hd)


def growth_rate(H, hbar=1.0):
    """Largest growth rate of |e^{-iHt/hbar}v|: top eigenvalue of the Hermitian part of -iH/hbar."""
    X = -1j * np.asarray(H) / hbar
    return float(np.linalg.eigvalsh(0.5 * (X + X.conj().T))[-1])


def spectral_check(H, hbar=1.0):
    rate = growth_rate(H, hbar)
    if rate > GROWTH_WARN:
        warnings.warn(f"numerical range allows growth rate {rate:.3g} per unit time; "
                      "truncation corner modes may dominate", RuntimeWarning, stacklevel=2)
    return rate


def propagator(H, dt, flavor="A", hbar=1.0):
    """exp(-i H dt / hbar) for flavor A, exp(-i H^dag dt / hbar) for flavor B."""
    H = np.asarray(H)
    if flavor == "B":
        H = H.conj().T
    elif flavor != "A":
        raise ValueError(f"unknown flavor {flavor!r}")
    return expm(-1j * H * (dt / hbar))


def _checked(state):
    nrm = np.linalg.norm(state)
    if not np.isfinite(nrm) or nrm > NORM_LIMIT:
        raise NormOverflowError(
            f"state norm {nrm:.3g} exceeds {NORM_LIMIT:.0e}; renormalize more often")
    return state


def evolve(state, H, dt, flavor="A", hbar=1.0):
    if dt == 0:
        return np.array(state, dtype=complex)
    return _checked(propagator(H, dt, flavor, hbar) @ state)


def normalize(state):
    state = np.asarray(state, dtype=complex)
    nrm = np.linalg.norm(state)
    if nrm == 0:
        raise ValueError("cannot normalize the zero state")
    return state / nrm


@dataclass
class EvolutionRecord:
    """A- and B-state trajectories on a common time grid.

    A-states are renormalized at every stored step; ``renorm_log[i]`` is the
    log of the norm divided out at step i, so the unnormalized A(t_i) has
    norm ``exp(cumsum(renorm_log)[i])``.  B-states are stored
    normalized as well (functionals are invariant under this).
    """

    times: np.ndarray
    a_states: list
    b_states: list
    renorm_log: np.ndarray
    H: np.ndarray = field(repr=False)
    hbar: float = 1.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if not (len(self.times) == len(self.a_states) == len(self.renorm_log)):
            raise ValueError("trajectory arrays must have equal lengths")
        if self.b_states and len(self.b_states) != len(self.times):
            raise ValueError("trajectory arrays must have equal lengths")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def raw_log_norms(self):
        return np.cumsum(self.renorm_log)

    def a_at(self, t, base=None):
        """A(t) evolved from a stored state.

        By default the nearest stored (unit-norm) state is used.  Pass
        ``base`` (a time) to evolve several times from one stored state so
        that their relative norms are the true ones.
        """
        lo, hi = self.times[0] - 1e-12, self.times[-1] + 1e-12
        if t < lo or t > hi:
            raise ValueError(f"t={t} outside trajectory range [{self.times[0]}, {self.times[-1]}]")
        i = int(np.argmin(np.abs(self.times - (t if base is None else base))))
        return evolve(self.a_states[i], self.H, t - self.times[i], "A", self.hbar)


def evolve_trajectory(H, a0, times, b_final=None, hbar=1.0):
    """Evolve A forward from times[0] and B backward from times[-1]."""
    times = np.asarray(times, dtype=float)
    a = np.asarray(a0, dtype=complex)
    nrm = np.linalg.norm(a)
    a_states = [a / nrm]
    logs = [np.log(nrm)]
    cache = {}
    for i in range(1, len(times)):
        step = times[i] - times[i - 1]
        key = round(step, 14)
        if key not in cache:
            cache[key] = propagator(H, step, "A", hbar)
        a = _checked(cache[key] @ a_states[-1])
        nrm = np.linalg.norm(a)
        a_states.append(a / nrm)
        logs.append(np.log(nrm))
    b_states = []
    if b_final is not None:
        b = normalize(b_final)
        b_states = [b]
        cacheb = {}
        for i in range(len(times) - 1, 0, -1):
            step = times[i - 1] - times[i]
            key = round(step, 14)
            if key not in cacheb:
                cacheb[key] = propagator(H, step, "B", hbar)
            b = normalize(_checked(cacheb[key] @ b_states[-1]))
            b_states.append(b)
        b_states = b_states[::-1]
    return EvolutionRecord(times, a_states, b_states, np.array(logs), np.asarray(H), hbar)


def heisenberg_op(O, H, t, t_ref, flavor="fi", a_ref=None, hbar=1.0):
    """Heisenberg-picture operator.

    fi:  e^{+iH tau} O e^{-iH tau}
    fni: <A(t_ref)|A(t_ref)>/<A(t)|A(t)> * e^{+iH^dag tau} O e^{-iH tau}
    with tau = (t - t_ref)/hbar.  ``a_ref`` is A(t_ref), required for fni.
    """
    tau = t - t_ref
    right = expm(-1j * np.asarray(H) * tau / hbar)
    if flavor == "fi":
        left = expm(1j * np.asarray(H) * tau / hbar)
        return left @ O @ right
    if flavor == "fni":
        if a_ref is None:
            raise ValueError("fni Heisenberg operator needs the A-state at t_ref")
        a_ref = np.asarray(a_ref, dtype=complex)
        at = right @ a_ref
        ratio = np.vdot(a_ref, a_ref).real / np.vdot(at, at).real
        return ratio * (right.conj().T @ O @ right)
    raise ValueError(f"unknown flavor {flavor!r}")
