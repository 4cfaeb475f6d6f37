"""Complex-plane quadrature, the smeared delta function and
coefficient-wise real/imaginary splitting of polynomials."""

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

PATH_MARGIN = 0.05
GL_ORDER = 16
DECAY_RATIO = 1e-12

_MAX_SLOPE = np.tan(np.pi / 4 - PATH_MARGIN)


class DecayError(ValueError):
    """Integrand does not decay at the path ends; carries a suggested extent."""

    def __init__(self, msg, suggested_extent):
        super().__init__(f"{msg}; try extent >= {suggested_extent:.4g}")
        self.suggested_extent = suggested_extent


def sign(x):
    """Sign with sign(0) = 0."""
    return float(np.sign(x))


@dataclass(frozen=True)
class ContourPath:
    """Piecewise-linear path; segments must keep |slope| <= tan(pi/4 - margin)."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=complex)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a path needs at least two nodes")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("path nodes must be finite")
        dz = np.diff(nodes)
        if np.any(dz.real <= 0):
            raise ValueError("real parts of path nodes must be strictly increasing")
        slope = np.abs(dz.imag / dz.real)
        if np.any(slope > _MAX_SLOPE * (1 + 1e-12)):
            raise ValueError(
                f"segment slope {slope.max():.4g} exceeds the permitted bound {_MAX_SLOPE:.4g}"
            )
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def extent(self):
        return max(abs(self.nodes[0].real), abs(self.nodes[-1].real))

    @classmethod
    def line(cls, center=0.0, extent=10.0, angle=0.0, n_seg=200):
        """Straight path through ``center`` at ``angle`` spanning Re in center.real +- extent."""
        if abs(np.tan(angle)) > _MAX_SLOPE:
            raise ValueError("angle outside the permitted sector")
        s = np.linspace(-extent, extent, n_seg + 1) / np.cos(angle)
        return cls(complex(center) + s * np.exp(1j * angle))

    @classmethod
    def refined(cls, center=0.0, extent=10.0, angle=0.0, fine_step=0.01, fine_halfwidth=1.0,
                coarse_step=0.25):
        """Straight path with a fine segment spacing near ``center``.

        Spacing is ``fine_step`` (measured along Re) within ``fine_halfwidth``
        of the centre and ``coarse_step`` further out.
        """
        fine_halfwidth = min(fine_halfwidth, extent)
        n_fine = max(1, int(np.ceil(2 * fine_halfwidth / fine_step)))
        fine = np.linspace(-fine_halfwidth, fine_halfwidth, n_fine + 1)
        outer = extent - fine_halfwidth
        n_out = int(np.ceil(outer / coarse_step)) if outer > 0 else 0
        right = fine_halfwidth + np.linspace(0, outer, n_out + 1)[1:]
        x = np.concatenate([-right[::-1], fine, right])
        return cls(complex(center) + x * (1 + 1j * np.tan(angle)))


def tilted_line_angle(lo, hi):
    """Midpoint of an allowed angle interval, clipped to the permitted sector."""
    lim = np.arctan(_MAX_SLOPE)
    return float(np.clip(0.5 * (lo + hi), -lim, lim))


class PolyFunction:
    """Polynomial sum_k c_k z^k with complex coefficients."""

    def __init__(self, coefficients: Sequence[complex]):
        c = np.atleast_1d(np.asarray(coefficients, dtype=complex)).copy()
        if not np.all(np.isfinite(c)):
            raise ValueError("polynomial coefficients must be finite")
        # trailing zeros do not change the function
        nz = np.flatnonzero(c)
        c = c[: nz[-1] + 1] if nz.size else c[:1]
        c.setflags(write=False)
        self.coefficients = c

    @classmethod
    def from_powers(cls, powers):
        """Build from a mapping {power: coefficient}."""
        deg = max(powers) if powers else 0
        c = np.zeros(deg + 1, dtype=complex)
        for k, v in powers.items():
            c[int(k)] = v
        return cls(c)

    @property
    def degree(self):
        return len(self.coefficients) - 1

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(z, self.coefficients)

    def deriv(self, order=1):
        if self.degree < order:
            return PolyFunction([0.0])
        return PolyFunction(np.polynomial.polynomial.polyder(self.coefficients, order))

    def conj_coeffs(self):
        """The modified conjugate: coefficients conjugated, variable kept analytic."""
        return PolyFunction(np.conj(self.coefficients))

    def of_matrix(self, x):
        """Evaluate on a square matrix by Horner's rule."""
        out = np.zeros_like(x, dtype=complex)
        eye = np.eye(x.shape[0], dtype=complex)
        for c in self.coefficients[::-1]:
            out = out @ x + c * eye
        return out

    def __add__(self, other):
        n = max(len(self.coefficients), len(other.coefficients))
        a = np.zeros(n, complex)
        b = np.zeros(n, complex)
        a[: len(self.coefficients)] = self.coefficients
        b[: len(other.coefficients)] = other.coefficients
        return PolyFunction(a + b)

    def __mul__(self, scalar):
        return PolyFunction(self.coefficients * complex(scalar))

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, PolyFunction):
            return NotImplemented
        return np.array_equal(self.coefficients, other.coefficients)

    def __repr__(self):
        return f"PolyFunction({self.coefficients.tolist()})"


def poly_reim_split(p: PolyFunction):
    """Split into (Re, Im) parts coefficient-wise, keeping the variable analytic."""
    return PolyFunction(p.coefficients.real), PolyFunction(p.coefficients.imag)


def smeared_delta(z, eps):
    """sqrt(1/(4 pi eps)) exp(-z^2 / (4 eps)), principal square root."""
    eps = np.asarray(eps, dtype=complex)
    if np.any(eps == 0):
        raise ValueError("eps must be nonzero")
    z = np.asarray(z, dtype=complex)
    return np.sqrt(1.0 / (4.0 * np.pi * eps)) * np.exp(-(z * z) / (4.0 * eps))


_GL_CACHE = {}


def _gl(order):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def quadrature_rule(path: ContourPath, order=GL_ORDER):
    """Nodes and complex weights of composite Gauss-Legendre along the path."""
    x, w = _gl(order)
    z0 = path.nodes[:-1, None]
    dz = np.diff(path.nodes)[:, None]
    pts = z0 + 0.5 * (x[None, :] + 1.0) * dz
    wts = 0.5 * w[None, :] * dz
    return pts.ravel(), wts.ravel()


def contour_integrate(f: Callable, path: ContourPath, order=GL_ORDER, check_decay=True):
    """Integral of f along the path by composite Gauss-Legendre quadrature.

    The integrand must decay at both ends: |f(end)| < 1e-12 * max|f| on the nodes.
    """
    if check_decay:
        fn = np.asarray(f(path.nodes), dtype=complex)
        scale = np.max(np.abs(fn))
        if not np.isfinite(scale):
            raise DecayError("integrand not finite on the path", 2 * path.extent)
        ends = max(abs(fn[0]), abs(fn[-1]))
        if scale > 0 and ends >= DECAY_RATIO * scale:
            raise DecayError(
                f"integrand does not decay at path ends (ratio {ends / scale:.2e})",
                2 * path.extent,
            )
    pts, wts = quadrature_rule(path, order)
    return complex(np.sum(np.asarray(f(pts), dtype=complex) * wts))


def delta_path(center=0.0, eps=1e-2, extent=None, angle=0.0):
    """Straight path through ``center`` refined to 0.1*sqrt|eps| spacing near it."""
    if extent is None:
        extent = 10.0 * max(1.0, abs(center))
    w = np.sqrt(abs(eps))
    return ContourPath.refined(center, extent, angle, fine_step=0.1 * w,
                               fine_halfwidth=min(12.0 * w, extent), coarse_step=min(0.25, 2 * w + 0.05))


def delta_angle_window(a, eps):
    """Allowed path angles (lo, hi) for which delta_c^eps(a q) converges along q."""
    th_e = np.angle(eps)
    th_a = np.angle(a)
    mid = 0.5 * (th_e - 2 * th_a)
    # a line and its reverse are the same path: reduce the direction modulo pi
    mid = (mid + np.pi / 2) % np.pi - np.pi / 2
    return mid - np.pi / 4, mid + np.pi / 4


def delta_scaling_check(a, eps, path: ContourPath, test_fn=None, n_samples=101):
    """Compare delta_c^eps(a q) with sign(Re a)/a * delta_c^{eps/a^2}(q).

    Returns the maximum pointwise mismatch over samples of the path.  When
    ``test_fn`` is given the two sides are also integrated against it and the
    larger of the pointwise and integrated mismatches is returned.
    """
    a = complex(a)
    if a.real == 0:
        raise ValueError("Re(a) = 0: sign(Re a) undefined")
    s = sign(a.real)
    lo = path.nodes[0].real
    hi = path.nodes[-1].real
    x = np.linspace(lo, hi, n_samples)
    z = np.interp(x, path.nodes.real, path.nodes.real) + 1j * np.interp(x, path.nodes.real, path.nodes.imag)
    lhs = smeared_delta(a * z, eps)
    rhs = s / a * smeared_delta(z, eps / a ** 2)
    resid = float(np.max(np.abs(lhs - rhs)))
    if test_fn is not None:
        il = contour_integrate(lambda q: test_fn(q) * smeared_delta(a * q, eps), path)
        ir = contour_integrate(lambda q: test_fn(q) * s / a * smeared_delta(q, eps / a ** 2), path)
        resid = max(resid, abs(il - ir))
    return resid


def sifting_error(f, q0, eps, angle=0.0, extent=None):
    """|int f(q) delta_c^eps(q - q0) dq - f(q0)| along a refined path through q0."""
    path = delta_path(q0, eps, extent, angle)
    val = contour_integrate(lambda q: f(q) * smeared_delta(q - q0, eps), path)
    return abs(val - f(q0)), val
