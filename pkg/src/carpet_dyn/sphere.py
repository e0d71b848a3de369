"""Riemann sphere arithmetic: chordal metric, polynomials, rational and Moebius maps.

Points of the sphere are plain Python/numpy complex numbers; the point at
infinity is the marker :data:`INF` (``complex(inf, 0)``).  Every routine that
takes points also accepts numpy arrays of them.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import DegreeError, NotCoprimeError
from .roots import polynomial_roots

__all__ = [
    "INF",
    "is_inf",
    "chordal_distance",
    "to_sphere",
    "Polynomial",
    "RationalMap",
    "MoebiusMap",
    "example_map",
    "power_map",
    "local_degree",
]

INF = complex(math.inf, 0.0)


def is_inf(z):
    """True where ``z`` is the point at infinity (any non-finite value)."""
    if np.isscalar(z):
        return not cmath.isfinite(z)
    return ~np.isfinite(np.asarray(z))


def _recip(z: np.ndarray) -> np.ndarray:
    """1/z on the sphere: 0 <-> INF."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    inf = ~np.isfinite(z)
    zero = z == 0
    ok = ~(inf | zero)
    out[ok] = 1.0 / z[ok]
    out[inf] = 0.0
    out[zero] = INF
    return out


def _scalar_out(x, like):
    if np.ndim(like) == 0:
        return x.item() if isinstance(x, np.ndarray) else x
    return x


def chordal_distance(z, w):
    """sigma(z, w) = 2|z-w| / sqrt((1+|z|^2)(1+|w|^2)), with sigma(z, INF) = 2/sqrt(1+|z|^2)."""
    z_in = z
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    z, w = np.broadcast_arrays(z, w)
    # z -> 1/z is an isometry; use it so at most one coordinate is large
    flip = (np.abs(z) > 1) & (np.abs(w) > 1)
    if flip.any():
        z = np.where(flip, _recip(z), z)
        w = np.where(flip, _recip(w), w)
    zi = ~np.isfinite(z)
    wi = ~np.isfinite(w)
    out = np.zeros(z.shape)
    both = zi & wi
    one_z = zi & ~wi
    one_w = wi & ~zi
    fin = ~(zi | wi)
    out[one_z] = 2.0 / np.hypot(1.0, np.abs(w[one_z]))
    out[one_w] = 2.0 / np.hypot(1.0, np.abs(z[one_w]))
    zf, wf = z[fin], w[fin]
    out[fin] = 2.0 * np.abs(zf - wf) / (np.hypot(1.0, np.abs(zf)) * np.hypot(1.0, np.abs(wf)))
    out[both] = 0.0
    np.clip(out, 0.0, 2.0, out=out)
    if np.ndim(z_in) == 0 and out.ndim == 0:
        return float(out)
    return out


def to_sphere(z) -> np.ndarray:
    """Stereographic lift to the unit sphere in R^3 (chordal distance = Euclidean distance there)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    out = np.empty(z.shape + (3,))
    inf = ~np.isfinite(z)
    zf = np.where(inf, 0, z)
    n2 = np.abs(zf) ** 2
    out[..., 0] = 2 * zf.real / (1 + n2)
    out[..., 1] = 2 * zf.imag / (1 + n2)
    out[..., 2] = (n2 - 1) / (n2 + 1)
    out[inf] = (0.0, 0.0, 1.0)
    return out


class Polynomial:
    """Polynomial with complex coefficients c_0 .. c_d (ascending)."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=complex)).copy()
        nz = np.flatnonzero(c != 0)
        c = c[: nz[-1] + 1] if nz.size else np.zeros(1, dtype=complex)
        c.setflags(write=False)
        self.coeffs = c

    @property
    def degree(self) -> int:
        """Index of the last nonzero coefficient; -1 for the zero polynomial."""
        if self.is_zero:
            return -1
        return self.coeffs.size - 1

    @property
    def is_zero(self) -> bool:
        return self.coeffs.size == 1 and self.coeffs[0] == 0

    def __call__(self, z):
        return npoly.polyval(np.asarray(z, dtype=complex), self.coeffs)

    def deriv(self) -> "Polynomial":
        return Polynomial(npoly.polyder(self.coeffs))

    def __add__(self, other):
        return Polynomial(npoly.polyadd(self.coeffs, _coeffs(other)))

    def __sub__(self, other):
        return Polynomial(npoly.polysub(self.coeffs, _coeffs(other)))

    def __mul__(self, other):
        return Polynomial(npoly.polymul(self.coeffs, _coeffs(other)))

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, Polynomial) and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash(self.coeffs.tobytes())

    def reversed(self, d: int) -> "Polynomial":
        """Coefficients of w^d p(1/w)."""
        c = np.zeros(d + 1, dtype=complex)
        c[: self.coeffs.size] = self.coeffs
        return Polynomial(c[::-1])

    def conj(self) -> "Polynomial":
        return Polynomial(np.conj(self.coeffs))

    def roots(self, **kw) -> list[tuple[complex, int]]:
        return polynomial_roots(self.coeffs, **kw)

    def __repr__(self):
        return f"Polynomial({self.coeffs.tolist()})"


def _coeffs(p):
    if isinstance(p, Polynomial):
        return p.coeffs
    return np.atleast_1d(np.asarray(p, dtype=complex))


def _homogenize(p: Polynomial, d: int, x: Polynomial, y: Polynomial) -> Polynomial:
    """sum_i p_i x^i y^(d-i)."""
    acc = np.zeros(1, dtype=complex)
    xs = [np.ones(1, dtype=complex)]
    ys = [np.ones(1, dtype=complex)]
    for _ in range(d):
        xs.append(npoly.polymul(xs[-1], x.coeffs))
        ys.append(npoly.polymul(ys[-1], y.coeffs))
    for i, c in enumerate(p.coeffs):
        if c != 0:
            acc = npoly.polyadd(acc, c * npoly.polymul(xs[i], ys[d - i]))
    return Polynomial(acc)


def _abs(p: Polynomial) -> Polynomial:
    return Polynomial(np.abs(p.coeffs))


def _trim_cancelled(p: Polynomial, bound: Polynomial, rel: float = 1e-12) -> Polynomial:
    """Zero the coefficients that are rounding noise.

    ``bound`` is the same expression evaluated on absolute values, so each of
    its coefficients bounds the terms that cancelled in ``p``.  Comparing per
    coefficient keeps genuinely small coefficients of high-degree iterates.
    """
    c = np.array(p.coeffs)
    b = np.zeros(c.size)
    m = min(c.size, bound.coeffs.size)
    b[:m] = bound.coeffs[:m].real
    c[np.abs(c) <= rel * b] = 0
    return Polynomial(c)


class RationalMap:
    """f = P/Q with coprime P, Q; degree = max(deg P, deg Q).

    Evaluation always happens in a chart where the coordinate has modulus at
    most one: z itself when |z| <= 1, otherwise w = 1/z.  The image is
    produced the same way, so poles and infinity need no special casing.
    """

    def __init__(self, numerator, denominator, check: bool = True):
        self.P = numerator if isinstance(numerator, Polynomial) else Polynomial(numerator)
        self.Q = denominator if isinstance(denominator, Polynomial) else Polynomial(denominator)
        if self.Q.is_zero:
            raise ValueError("denominator is the zero polynomial")
        if self.P.is_zero:
            raise DegreeError("constant zero map")
        self.degree = max(self.P.degree, self.Q.degree)
        if self.degree < 1:
            raise DegreeError("constant map")
        d = self.degree
        self.Pr = self.P.reversed(d)
        self.Qr = self.Q.reversed(d)
        if check:
            self._check_coprime()

    def _check_coprime(self, tol: float = 1e-6):
        if self.P.degree < 1 or self.Q.degree < 1:
            return
        rp = [r for r, _ in self.P.roots()]
        rq = [r for r, _ in self.Q.roots()]
        for a in rp:
            for b in rq:
                if abs(a - b) <= tol * max(1.0, abs(a)):
                    raise NotCoprimeError(f"numerator and denominator share the root {a}")

    # -- construction helpers -------------------------------------------
    @classmethod
    def from_json(cls, obj) -> "RationalMap":
        num = [complex(re, im) for re, im in obj["numerator"]]
        den = [complex(re, im) for re, im in obj["denominator"]]
        return cls(num, den)

    def to_json(self) -> dict:
        return {
            "numerator": [[c.real, c.imag] for c in self.P.coeffs],
            "denominator": [[c.real, c.imag] for c in self.Q.coeffs],
        }

    def __repr__(self):
        return f"RationalMap({self.P.coeffs.tolist()}, {self.Q.coeffs.tolist()})"

    # -- evaluation ------------------------------------------------------
    def _pair(self, src_inf: bool, dst_inf: bool) -> tuple[Polynomial, Polynomial]:
        n, d = (self.Pr, self.Qr) if src_inf else (self.P, self.Q)
        return (d, n) if dst_inf else (n, d)

    def __call__(self, z):
        z_in = z
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        big = ~np.isfinite(z) | (np.abs(z) > 1)
        u = np.where(big, _recip(np.where(big, z, 1)), z)
        num = np.empty_like(u)
        den = np.empty_like(u)
        num[~big] = self.P(u[~big])
        den[~big] = self.Q(u[~big])
        num[big] = self.Pr(u[big])
        den[big] = self.Qr(u[big])
        out = np.empty_like(u)
        pole = den == 0
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out[~pole] = num[~pole] / den[~pole]
        out[pole] = INF
        out[~np.isfinite(out)] = INF
        if np.ndim(z_in) == 0:
            return complex(out[0])
        return out.reshape(np.shape(z_in))

    def iterate_points(self, z, n: int):
        for _ in range(n):
            z = self(z)
        return z

    def derivative(self, z):
        """Euclidean derivative f'(z) at finite, non-pole points."""
        z = np.asarray(z, dtype=complex)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out = self._wronskian(z) / self.Q(z) ** 2
        return out

    @cached_property
    def _wronskian(self) -> "Polynomial":
        return self.P.deriv() * self.Q - self.P * self.Q.deriv()

    @cached_property
    def _chart_wronskians(self):
        out = {}
        for s in (False, True):
            for t in (False, True):
                n, d = self._pair(s, t)
                out[s, t] = (n.deriv() * d - n * d.deriv(), d)
        return out

    def chart_derivative(self, z, src_inf=None, dst_inf=None):
        """Derivative of f in local charts at z (chart u = z or 1/z by modulus).

        Chart choices can be forced; products of these along a cycle give the
        multiplier independently of the charts used.
        """
        z_in = z
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        fz = np.atleast_1d(self(z))
        s = (~np.isfinite(z) | (np.abs(z) > 1)) if src_inf is None else np.broadcast_to(np.asarray(src_inf), z.shape)
        t = (~np.isfinite(fz) | (np.abs(fz) > 1)) if dst_inf is None else np.broadcast_to(np.asarray(dst_inf), z.shape)
        u = np.where(s, _recip(np.where(s, z, 1)), z)
        out = np.empty(z.shape, dtype=complex)
        for si in (False, True):
            for ti in (False, True):
                m = (s == si) & (t == ti)
                if not m.any():
                    continue
                w, d = self._chart_wronskians[si, ti]
                with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                    out[m] = w(u[m]) / d(u[m]) ** 2
        if np.ndim(z_in) == 0:
            return complex(out[0])
        return out

    def spherical_derivative(self, z):
        """Chordal expansion factor |f'(z)| (1+|z|^2)/(1+|f(z)|^2)."""
        z_in = z
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        fz = np.atleast_1d(self(z))
        s = ~np.isfinite(z) | (np.abs(z) > 1)
        t = ~np.isfinite(fz) | (np.abs(fz) > 1)
        u_in = np.where(s, _recip(np.where(s, z, 1)), z)
        u_out = np.where(t, _recip(np.where(t, fz, 1)), fz)
        d = np.abs(self.chart_derivative(z))
        out = d * (1 + np.abs(u_in) ** 2) / (1 + np.abs(u_out) ** 2)
        if np.ndim(z_in) == 0:
            return float(out[0])
        return out

    # -- algebra -----------------------------------------------------------
    def compose(self, g: "RationalMap") -> "RationalMap":
        """self o g."""
        d = self.degree
        num = _homogenize(self.P, d, g.P, g.Q)
        den = _homogenize(self.Q, d, g.P, g.Q)
        gp, gq = _abs(g.P), _abs(g.Q)
        num = _trim_cancelled(num, _homogenize(_abs(self.P), d, gp, gq))
        den = _trim_cancelled(den, _homogenize(_abs(self.Q), d, gp, gq))
        return RationalMap(num, den, check=False)

    def iterate(self, n: int) -> "RationalMap":
        if n < 1:
            raise ValueError("n must be >= 1")
        out = self
        for _ in range(n - 1):
            out = self.compose(out)
        return out

    def conjugate(self, m: "MoebiusMap") -> "RationalMap":
        """The map m o f o m^-1."""
        f = self
        if m.conjugate:
            f = RationalMap(self.P.conj(), self.Q.conj(), check=False)
        a, b, c, d = m.a, m.b, m.c, m.d
        inv_num = Polynomial([-b, d])
        inv_den = Polynomial([a, -c])
        deg = f.degree
        n1 = _homogenize(f.P, deg, inv_num, inv_den)
        d1 = _homogenize(f.Q, deg, inv_num, inv_den)
        num = n1 * a + d1 * b
        den = n1 * c + d1 * d
        n1a = _homogenize(_abs(f.P), deg, _abs(inv_num), _abs(inv_den))
        d1a = _homogenize(_abs(f.Q), deg, _abs(inv_num), _abs(inv_den))
        num = _trim_cancelled(num, n1a * abs(a) + d1a * abs(b))
        den = _trim_cancelled(den, n1a * abs(c) + d1a * abs(d))
        return RationalMap(num, den, check=False)

    # -- critical points ---------------------------------------------------
    @cached_property
    def critical_points(self) -> tuple[tuple[complex, int], ...]:
        """All critical points with local degrees; (2d-2) counted with multiplicity."""
        d = self.degree
        if d < 2:
            raise DegreeError("critical points need degree >= 2")
        w = self.P.deriv() * self.Q - self.P * self.Q.deriv()
        pa, qa = _abs(self.P), _abs(self.Q)
        w = _trim_cancelled(w, pa.deriv() * qa + pa * qa.deriv())
        out = [(z, m + 1) for z, m in w.roots()]
        at_inf = 2 * d - 2 - w.degree
        if at_inf > 0:
            out.append((INF, at_inf + 1))
        return tuple(out)

    def local_degree(self, p, tol: float = 1e-8) -> int:
        """Local degree at p: one plus the critical multiplicity within chordal ``tol``."""
        return local_degree(self, p, tol)


def local_degree(f: RationalMap, p, tol: float = 1e-8) -> int:
    if f.degree < 2:
        return 1
    k = 1
    for c, deg in f.critical_points:
        if chordal_distance(c, p) < tol:
            k += deg - 1
    return k


@dataclass(frozen=True)
class MoebiusMap:
    """z -> (a z + b)/(c z + d), applied after complex conjugation when ``conjugate``."""

    a: complex
    b: complex
    c: complex
    d: complex
    conjugate: bool = False

    def __post_init__(self):
        for name in "abcd":
            object.__setattr__(self, name, complex(getattr(self, name)))
        det = self.a * self.d - self.b * self.c
        scale = max(abs(self.a), abs(self.b), abs(self.c), abs(self.d)) ** 2
        if scale == 0 or abs(det) <= 1e-14 * scale:
            raise ValueError("singular Moebius matrix")

    @classmethod
    def identity(cls) -> "MoebiusMap":
        return cls(1, 0, 0, 1)

    @classmethod
    def from_matrix(cls, m, conjugate=False) -> "MoebiusMap":
        m = np.asarray(m, dtype=complex)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1], conjugate)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def det(self) -> complex:
        return self.a * self.d - self.b * self.c

    def normalized(self) -> "MoebiusMap":
        """Scaled so that ad - bc = 1 with a canonical choice of the remaining sign."""
        m = self.matrix / cmath.sqrt(self.det)
        flat = m.ravel()
        k = int(np.argmax(np.abs(flat) > 1e-12 * np.abs(flat).max()))
        if flat[k].real < 0 or (flat[k].real == 0 and flat[k].imag < 0):
            m = -m
        return MoebiusMap.from_matrix(m, self.conjugate)

    def __call__(self, z):
        z_in = z
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.conjugate:
            z = np.conj(z)
        out = np.empty_like(z)
        inf = ~np.isfinite(z)
        zf = z[~inf]
        num = self.a * zf + self.b
        den = self.c * zf + self.d
        res = np.empty_like(zf)
        pole = den == 0
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            res[~pole] = num[~pole] / den[~pole]
        res[pole] = INF
        out[~inf] = res
        out[inf] = self.a / self.c if self.c != 0 else INF
        out[~np.isfinite(out)] = INF
        if np.ndim(z_in) == 0:
            return complex(out[0])
        return out.reshape(np.shape(z_in))

    def compose(self, other: "MoebiusMap") -> "MoebiusMap":
        """self o other."""
        m2 = np.conj(other.matrix) if self.conjugate else other.matrix
        return MoebiusMap.from_matrix(self.matrix @ m2, self.conjugate != other.conjugate)

    __matmul__ = compose

    def inverse(self) -> "MoebiusMap":
        a, b, c, d = self.a, self.b, self.c, self.d
        inv = np.array([[d, -b], [-c, a]])
        if self.conjugate:
            inv = np.conj(inv)
        return MoebiusMap.from_matrix(inv, self.conjugate)

    def distance(self, other: "MoebiusMap") -> float:
        """Frobenius distance of det-normalized matrices modulo sign; inf across orientations."""
        if self.conjugate != other.conjugate:
            return math.inf
        a = self.matrix / cmath.sqrt(self.det)
        b = other.matrix / cmath.sqrt(other.det)
        return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))

    def is_identity(self, tol: float = 1e-8) -> bool:
        return self.distance(MoebiusMap.identity()) < tol

    def derivative_modulus(self, z):
        """Euclidean |xi'(z)| = |det| / |c z + d|^2 (conjugation does not change it)."""
        z = np.asarray(z, dtype=complex)
        if self.conjugate:
            z = np.conj(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            return abs(self.det) / np.abs(self.c * z + self.d) ** 2

    @classmethod
    def from_three_points(cls, src, dst, conjugate: bool = False) -> "MoebiusMap":
        """The map sending src[i] to dst[i]; with ``conjugate`` it is M(conj(z))."""
        src = [complex(np.conj(s)) if conjugate and cmath.isfinite(s) else complex(s) for s in src]
        dst = [complex(s) for s in dst]
        t_src = _to_standard(*src)
        t_dst = _to_standard(*dst)
        m = np.linalg.inv(t_dst) @ t_src
        return cls.from_matrix(m, conjugate)

    def to_json(self) -> dict:
        return {
            "a": [self.a.real, self.a.imag],
            "b": [self.b.real, self.b.imag],
            "c": [self.c.real, self.c.imag],
            "d": [self.d.real, self.d.imag],
            "conjugate": self.conjugate,
        }


def _to_standard(p1: complex, p2: complex, p3: complex) -> np.ndarray:
    """Matrix of the Moebius map sending p1, p2, p3 to 0, INF, 1."""
    pts = (p1, p2, p3)
    if len({(round(p.real, 14), round(p.imag, 14)) if cmath.isfinite(p) else "inf" for p in pts}) < 3:
        raise ValueError("three distinct points required")
    if not cmath.isfinite(p1):
        return np.array([[0, p3 - p2], [1, -p2]], dtype=complex)
    if not cmath.isfinite(p2):
        return np.array([[1, -p1], [0, p3 - p1]], dtype=complex)
    if not cmath.isfinite(p3):
        return np.array([[1, -p1], [1, -p2]], dtype=complex)
    return np.array([[p3 - p2, -p1 * (p3 - p2)], [p3 - p1, -p2 * (p3 - p1)]], dtype=complex)


def example_map() -> RationalMap:
    """f(z) = z^2 - 1/(16 z^2) = (16 z^4 - 1) / (16 z^2)."""
    return RationalMap([-1, 0, 0, 0, 16], [0, 0, 16])


def power_map(k: int) -> RationalMap:
    c = np.zeros(k + 1)
    c[k] = 1
    return RationalMap(c, [1])
