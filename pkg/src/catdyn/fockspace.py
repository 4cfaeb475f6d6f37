"""Truncated Fock-space representation of the regularized position/momentum
operators and their coherent-state eigenkets.

Conventions
-----------
The ladder operator acts on an ``n_cut``-dimensional space with
``a[n-1, n] = sqrt(n)``.  Position and momentum are built in the basis of
an oscillator of length ``sqrt(hbar * eps)``::

    q = sqrt(hbar*eps/2) (a + a^dag)
    p = -i sqrt(hbar/(2*eps)) (a - a^dag)

so that ``q_new^dag`` is proportional to ``a`` and the q-kets are
(unnormalized) coherent states of this oscillator.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

K_GUARD = 5
MIN_NCUT = 8


class TrustRegionError(ValueError):
    """Raised when a coherent amplitude is too large for the truncation."""

    def __init__(self, lam, n_cut):
        self.required = required_ncut(lam)
        super().__init__(
            f"coherent amplitude |lambda|={abs(lam):.4g} outside the trust region "
            f"for n_cut={n_cut}; need n_cut >= {self.required}"
        )


def required_ncut(lam):
    """Smallest n_cut with |lam|^2 + 6|lam| <= n_cut."""
    r = abs(lam)
    return int(np.ceil(r * r + 6.0 * r))


def ladder(n):
    """Lowering operator on an n-dimensional truncated space."""
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), k=1).astype(complex)


@dataclass(frozen=True)
class FockSpace:
    n_cut: int
    hbar: float
    eps: float
    eps_prime: float
    a: np.ndarray = field(repr=False)
    a_dag: np.ndarray = field(repr=False)
    q_op: np.ndarray = field(repr=False)
    p_op: np.ndarray = field(repr=False)

    @property
    def k(self):
        """Normalization factor sqrt(1 - eps*eps')."""
        return np.sqrt(1.0 - self.eps * self.eps_prime)

    @property
    def identity(self):
        return np.eye(self.n_cut, dtype=complex)

    @property
    def length(self):
        """Oscillator length of the basis, sqrt(hbar*eps)."""
        return np.sqrt(self.hbar * self.eps)

    def interior(self, mat, guard=K_GUARD):
        """Top-left block that excludes the last ``guard`` rows/columns."""
        m = self.n_cut - guard
        return np.asarray(mat)[:m, :m]


def build_space(n_cut, hbar=1.0, eps=1e-2, eps_prime=1e-2):
    if int(n_cut) != n_cut or n_cut < MIN_NCUT:
        raise ValueError(f"n_cut must be an integer >= {MIN_NCUT}, got {n_cut}")
    if hbar <= 0 or eps <= 0 or eps_prime <= 0:
        raise ValueError("hbar, eps and eps_prime must be positive")
    if eps * eps_prime >= 1.0:
        raise ValueError("eps*eps_prime must be < 1 (prefactor undefined)")
    n_cut = int(n_cut)
    a = ladder(n_cut)
    a_dag = a.conj().T
    q_op = np.sqrt(hbar * eps / 2.0) * (a + a_dag)
    p_op = -1j * np.sqrt(hbar / (2.0 * eps)) * (a - a_dag)
    for arr in (a, a_dag, q_op, p_op):
        arr.setflags(write=False)
    return FockSpace(n_cut, float(hbar), float(eps), float(eps_prime), a, a_dag, q_op, p_op)


def new_operators(space):
    """Regularized pair (q_new, p_new); neither is Hermitian for eps > 0."""
    k = space.k
    q_new = (space.q_op - 1j * space.eps * space.p_op) / k
    p_new = (space.p_op + 1j * space.eps_prime * space.q_op) / k
    return q_new, p_new


def coherent_coefficients(lam, n, log_prefactor=0.0):
    """exp(log_prefactor) * lam**j / sqrt(j!) for j < n, evaluated in log space."""
    j = np.arange(n)
    lam = complex(lam)
    if lam == 0:
        out = np.zeros(n, dtype=complex)
        out[0] = np.exp(log_prefactor)
        return out
    logs = j * np.log(lam) - 0.5 * gammaln(j + 1.0) + log_prefactor
    return np.exp(logs)


def gaussian_coefficients(n, length, alpha, beta, scale=1.0):
    """Fock coefficients of ``scale * exp(-alpha x^2 + beta x)``.

    The basis is that of an oscillator with length ``length``.  Uses the
    Bargmann generating function B(t) = K exp(u t^2 + v t) and the
    three-term recurrence it implies.  Requires Re(alpha) > -1/(2 length^2).
    """
    l2 = length * length
    A = 1.0 / (2.0 * l2) + complex(alpha)
    if A.real <= 0:
        raise ValueError("Gaussian not normalizable in this basis")
    u = 1.0 / (2.0 * l2 * A) - 0.5
    v = complex(beta) / (np.sqrt(2.0) * length * A)
    log_k = (np.log(complex(scale)) - 0.25 * np.log(np.pi * l2)
             + 0.5 * np.log(np.pi / A) + complex(beta) ** 2 / (4.0 * A))
    d = np.zeros(n, dtype=complex)
    d[0] = 1.0
    if n > 1:
        d[1] = v
    for j in range(1, n - 1):
        d[j + 1] = (v * d[j] + 2.0 * u * np.sqrt(j) * d[j - 1]) / np.sqrt(j + 1.0)
    return d * np.exp(log_k)


def q_amplitude(space, q):
    """Coherent amplitude of |q>_new in the first oscillator."""
    return space.k * complex(q) / np.sqrt(2.0 * space.hbar * space.eps)


def p_amplitude(space, p):
    """Coherent amplitude of |p>_new in the second oscillator (length sqrt(hbar/eps'))."""
    return 1j * space.k * complex(p) / np.sqrt(2.0 * space.hbar * space.eps_prime)


def basis_ket(space, kind, value):
    """Truncated expansion of |q>_new or |p>_new, Gaussian prefactor included.

    kind is ``"q"`` or ``"p"`` (``"q-ket"``/``"p-ket"`` accepted).
    """
    kind = kind.split("-")[0]
    n = space.n_cut
    k = space.k
    hbar = space.hbar
    value = complex(value)
    if kind == "q":
        lam = q_amplitude(space, value)
        if required_ncut(lam) > n:
            raise TrustRegionError(lam, n)
        log_pref = 0.25 * np.log(k * k / (4 * np.pi * hbar * space.eps)) - 0.5 * lam * lam
        return coherent_coefficients(lam, n, log_pref)
    if kind == "p":
        lam = p_amplitude(space, value)
        if required_ncut(lam) > n:
            raise TrustRegionError(lam, n)
        # <x|p>_new = sqrt(k/(2 pi hbar)) exp(-eps' x^2/(2 hbar) + i k p x / hbar)
        return gaussian_coefficients(
            n, space.length,
            alpha=space.eps_prime / (2.0 * hbar),
            beta=1j * k * value / hbar,
            scale=np.sqrt(k / (2 * np.pi * hbar)),
        )
    raise ValueError(f"unknown ket kind {kind!r}")


def modified_bra(space, kind, value):
    """Row vector of the modified bra, i.e. the ordinary bra of the ket at conj(value)."""
    return np.conj(basis_ket(space, kind, np.conj(complex(value))))


def overlap(space, bra_kind, bra_value, ket_kind, ket_value):
    """Bilinear overlap with the analytic (modified) bra convention."""
    bra = modified_bra(space, bra_kind, bra_value)
    ket = basis_ket(space, ket_kind, ket_value)
    return complex(bra @ ket)


def coherent_state(space, alpha, normalized=True):
    """Coherent state of the basis oscillator, optionally normalized."""
    log_pref = -0.5 * abs(alpha) ** 2 if normalized else 0.0
    lam = complex(alpha)
    if required_ncut(lam) > space.n_cut:
        raise TrustRegionError(lam, space.n_cut)
    return coherent_coefficients(lam, space.n_cut, log_pref)


def wavepacket(space, q0, p0, width=1.0):
    """Normalized Gaussian packet centred at (q0, p0) with position spread width/sqrt(2)."""
    hbar = space.hbar
    alpha = 1.0 / (2.0 * width ** 2)
    beta = 2.0 * alpha * q0 + 1j * p0 / hbar
    scale = (np.pi * width ** 2) ** -0.25 * np.exp(-alpha * q0 ** 2)
    c = gaussian_coefficients(space.n_cut, space.length, alpha, beta, scale)
    return c


_WORD_SYMBOLS = ("q", "qd", "p", "pd")


def _word_operators(space, use_new):
    if use_new:
        q_new, p_new = new_operators(space)
        return {"q": q_new, "qd": q_new.conj().T, "p": p_new, "pd": p_new.conj().T}
    return {"q": space.q_op, "qd": space.q_op, "p": space.p_op, "pd": space.p_op}


def polynomial_operator(space, poly_descr, use_new=True):
    """Operator for a polynomial given as ``[(coef, word), ...]``.

    A word is a sequence of symbols from ``("q", "qd", "p", "pd")`` (for
    q_new, q_new^dag, p_new, p_new^dag), multiplied left to right; the empty
    word is the identity.  With ``use_new=False`` every symbol is replaced by
    the Hermitian q_op / p_op.
    """
    ops = _word_operators(space, use_new)
    out = np.zeros((space.n_cut, space.n_cut), dtype=complex)
    for coef, word in poly_descr:
        if isinstance(word, str):
            word = word.split()
        term = space.identity
        for sym in word:
            if sym not in ops:
                raise ValueError(f"unknown operator symbol {sym!r}")
            term = term @ ops[sym]
        out += coef * term
    return out


def theorem1_residual(space, poly_descr, grid=(-1.0, 0.0, 1.0)):
    """Max over the grid of |<q'|O(new ops)|q''> - <q'|O(hermitian ops)|q''>|."""
    diff = polynomial_operator(space, poly_descr, True) - polynomial_operator(space, poly_descr, False)
    kets = np.array([basis_ket(space, "q", g) for g in grid])
    bras = np.array([modified_bra(space, "q", g) for g in grid])
    return float(np.max(np.abs(bras @ diff @ kets.T)))
