"""Böttcher coordinates, Fatou-component basepoints and the rotation solver."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import BasepointError, PreconditionError
from .orbits import orbit_local_degree
from .raster import MIN_COMPONENT_PIXELS, RasterGrid
from .sphere import INF, MoebiusMap, Polynomial, RationalMap, chordal_distance, is_inf, local_degree

__all__ = [
    "BoettcherChart",
    "boettcher_chart",
    "basin_samples",
    "conjugacy_residual",
    "FatouComponentRecord",
    "basepoint",
    "component_records",
    "ComponentRecords",
    "exponent_chain",
    "Incompatible",
    "rotation_solve",
]

BRANCH_JUMP = 0.4
MAX_ITER = 200


# -- Böttcher charts -------------------------------------------------------------


def _chart_moebius(p) -> MoebiusMap:
    """Coordinate change sending p to 0."""
    if is_inf(p):
        return MoebiusMap(0, 1, 1, 0)
    return MoebiusMap(1, -complex(p), 0, 1)


@dataclass
class BoettcherChart:
    p: complex
    k: int
    lam: complex
    chart: MoebiusMap
    z: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    residual: np.ndarray = field(repr=False)
    converged: np.ndarray = field(repr=False)
    flagged: np.ndarray = field(repr=False)
    _num: Polynomial = field(repr=False, default=None)
    _den: Polynomial = field(repr=False, default=None)
    _c: complex = 1.0

    @property
    def confidence(self) -> np.ndarray:
        """Distance of psi from the unit circle; rows near the component boundary score low."""
        return 1.0 - np.abs(self.psi)

    @property
    def max_residual(self) -> float:
        ok = self.converged
        return float(self.residual[ok].max()) if ok.any() else math.inf

    def __call__(self, z):
        psi, _, _ = self._evaluate(self.chart(np.atleast_1d(np.asarray(z, dtype=complex))))
        return psi if np.ndim(z) else complex(psi[0])

    def _evaluate(self, w: np.ndarray):
        """psi(w) = lam * w * prod u(w_n)^(1/k^(n+1)), each root the one nearest the running estimate."""
        k = self.k
        w = np.asarray(w, dtype=complex)
        psi = self.lam * w
        cur = w.copy()
        done = cur == 0
        bad = ~np.isfinite(cur)
        flag = np.zeros(w.shape, dtype=bool)
        for n in range(1, MAX_ITER + 1):
            act = ~done & ~bad
            if not act.any():
                break
            c = cur[act]
            with np.errstate(all="ignore"):
                u = self._num(c) / (self._c * self._den(c))
                L = np.log(u)
            step = L / float(k) ** n
            flag[act] |= np.abs(L.imag) / float(k) ** (n - 1) > BRANCH_JUMP
            psi[act] = psi[act] * np.exp(step)
            with np.errstate(all="ignore"):
                nxt = self._c * c**k * u
            idx = np.flatnonzero(act)
            cur[idx] = nxt
            bad[idx] |= ~np.isfinite(nxt) | ~np.isfinite(step) | (np.abs(nxt) > 1e8)
            done[idx] |= (np.abs(step) < 1e-18) | (nxt == 0)
        conv = done & ~bad
        psi = np.where(conv, psi, np.nan)
        return psi, conv, flag


def boettcher_chart(f: RationalMap, p, samples) -> BoettcherChart:
    """Böttcher coordinate psi at a superattracting fixed point p, tabulated on ``samples``.

    psi conjugates f near p to w -> w^k in the chart where p = 0.  Among the
    k-1 admissible normalizations the one whose derivative at p has the
    smallest argument is used.
    """
    p = INF if is_inf(p) else complex(p)
    if f.degree < 2:
        raise PreconditionError("degree must be at least 2")
    if chordal_distance(f(p), p) > 1e-10:
        raise PreconditionError(f"{p} is not a fixed point")
    k = local_degree(f, p)
    if k < 2:
        raise PreconditionError(f"{p} is not superattracting")
    m = _chart_moebius(p)
    g = f.conjugate(m)
    num = g.P.coeffs
    scale = np.abs(num).max()
    if num.size <= k or np.abs(num[:k]).max() > 1e-8 * scale:
        raise PreconditionError("map in the chart does not vanish to the local degree")
    N1 = Polynomial(num[k:])
    den = g.Q
    c = complex(N1(0) / den(0))
    roots = [cmath.rect(abs(c) ** (1 / (k - 1)), (cmath.phase(c) + 2 * math.pi * j) / (k - 1)) for j in range(k - 1)]
    lam = min(roots, key=lambda r: abs(cmath.phase(r)))
    z = np.atleast_1d(np.asarray(samples, dtype=complex))
    chart = BoettcherChart(p, k, lam, m, z, z, z, z, z, N1, den, c)
    psi, conv, flag = chart._evaluate(m(z))
    psi_f, conv_f, _ = chart._evaluate(m(f(z)))
    res = np.abs(psi_f - psi**k)
    ok = conv & conv_f
    chart.psi = psi
    chart.residual = np.where(ok, res, np.inf)
    chart.converged = ok
    chart.flagged = flag
    return chart


def basin_samples(grid: RasterGrid, component_id: int, count: int = 200, seed: int = 0) -> np.ndarray:
    """Random points of a Fatou component, one per chosen pixel, jittered inside the pixel."""
    ids = grid.components.ids
    r, c = np.nonzero(ids == component_id)
    if r.size == 0:
        raise ValueError(f"component {component_id} has no pixels")
    rng = np.random.default_rng(seed)
    pick = rng.choice(r.size, size=count, replace=r.size < count)
    jr = rng.uniform(-0.5, 0.5, count)
    jc = rng.uniform(-0.5, 0.5, count)
    z = grid.pixel_center(r[pick] + jr, c[pick] + jc)
    return grid.to_sphere_point(z)


def conjugacy_residual(f: RationalMap, table_u, table_v, k: int, tol: float = 1e-9) -> float:
    """max |psi_U(f(z)) - psi_V(z)^k| over matched rows; tables are (points, values) pairs."""
    zu, pu = (np.asarray(a, dtype=complex) for a in table_u)
    zv, pv = (np.asarray(a, dtype=complex) for a in table_v)
    if zu.shape != zv.shape:
        raise ValueError("tables differ in length")
    mismatch = chordal_distance(f(zv), zu)
    if np.any(mismatch > tol):
        raise ValueError(f"unmatched samples: f(z_V) misses z_U by {float(np.max(mismatch)):.3g}")
    return float(np.max(np.abs(pu - pv**k)))


# -- basepoints -------------------------------------------------------------------


@dataclass
class FatouComponentRecord:
    id: int
    level: int
    basepoint: complex
    image: int
    exponent: int

    def to_json(self) -> dict:
        b = self.basepoint
        return {
            "id": self.id,
            "level": self.level,
            "basepoint": "inf" if is_inf(b) else [b.real, b.imag],
            "image": self.image,
            "exponent": self.exponent,
        }


def _basin_of(grid: RasterGrid, z) -> int:
    f = grid.f
    for _ in range(grid.max_iter):
        for i, cyc in enumerate(grid.cycles):
            if any(chordal_distance(z, q) < grid.capture_radius for q in cyc.points):
                return i
        z = f(z)
    return -1


def _component_of(grid: RasterGrid, z) -> int:
    """Component id of a sphere point, or -1 when it sits on a julia pixel or cannot be resolved."""
    table = grid.components
    w = grid.to_sphere_point(z) if grid.chart == "z" else (0j if is_inf(z) else (INF if z == 0 else 1 / z))
    if not is_inf(w):
        r, c = grid.pixel_of(w)
        if r >= 0:
            return table.at(int(r), int(c))
    b = _basin_of(grid, z)
    edge = [u.id for u in table if u.touches_edge and u.basin == b]
    return edge[0] if len(edge) == 1 else -1


def _images(grid: RasterGrid, min_pixels: int) -> dict[int, int]:
    """Image component of each component, by majority over points deep inside it."""
    table = grid.components
    edt = ndimage.distance_transform_edt(~grid.julia)
    out = {}
    comps = [u for u in table if u.pixels >= min_pixels]
    if not comps:
        return out
    labels = table.ids + 1
    pos = ndimage.maximum_position(edt, labels, [u.id + 1 for u in comps])
    for u, (r, c) in zip(comps, pos):
        d = max(0.5, 0.5 * edt[r, c])
        offs = [(0, 0), (d, 0), (-d, 0), (0, d), (0, -d)]
        votes: dict[int, int] = {}
        for dr, dc in offs:
            z = grid.to_sphere_point(grid.pixel_center(r + dr, c + dc))
            rr, cc = grid.pixel_of(grid.pixel_center(r + dr, c + dc))
            if rr < 0 or table.at(int(rr), int(cc)) != u.id:
                continue
            v = _component_of(grid, grid.f(complex(z)))
            if v >= 0:
                votes[v] = votes.get(v, 0) + 1
        if votes:
            out[u.id] = max(votes, key=lambda v: (votes[v], -v))
    return out


def _in_component(grid: RasterGrid, z, cid: int) -> bool:
    return _component_of(grid, z) == cid


def basepoint(f: RationalMap, grid: RasterGrid, component: int, image_basepoint, periodic: bool = False) -> complex:
    """The unique point of the component lying in the backward orbit of post(f).

    Periodic components get the attracting-cycle point they contain; others
    the unique root of f(z) = p_V (p_V the image's basepoint) inside them.
    """
    table = grid.components
    u = table[component]
    if periodic:
        pts = [q for q in grid.cycles[u.basin].points if _in_component(grid, q, component)]
        if len(pts) != 1:
            raise BasepointError(f"component {component}: {len(pts)} cycle points inside")
        return pts[0]
    pv = image_basepoint
    if is_inf(pv):
        poly = f.Q
        at_inf = f.P.degree > f.Q.degree
    else:
        poly = f.P - f.Q * Polynomial([pv])
        at_inf = poly.degree < f.degree
    roots = list(poly.roots()) if poly.degree > 0 else []
    if at_inf:
        roots.append((INF, 1))
    hits = [(r, m) for r, m in roots if _in_component(grid, r, component)]
    if len(hits) != 1:
        raise BasepointError(f"component {component}: {len(hits)} preimages of the image basepoint inside")
    z, mult = hits[0]
    if mult > 1:
        # a multiple root is a simple root of the (mult-1)-th derivative, which is well conditioned
        d = poly
        for _ in range(mult - 1):
            d = d.deriv()
        return _newton_poly(d, z)
    return _newton_preimage(f, z, pv)


def _newton_poly(p: Polynomial, z, steps: int = 8) -> complex:
    dp = p.deriv()
    for _ in range(steps):
        d = dp(z)
        if d == 0:
            break
        step = p(z) / d
        z = z - step
        if abs(step) < 1e-16 * max(1.0, abs(z)):
            break
    return complex(z)


def _newton_preimage(f: RationalMap, z, target, steps: int = 8):
    if is_inf(z) or is_inf(target):
        return z
    for _ in range(steps):
        d = f.derivative(z)
        if d == 0 or not np.isfinite(d):
            break
        step = (f(z) - target) / d
        if not np.isfinite(step):
            break
        z = z - step
        if abs(step) < 1e-16 * max(1.0, abs(z)):
            break
    return complex(z)


@dataclass
class ComponentRecords:
    records: dict[int, FatouComponentRecord]
    unresolved: dict[int, str]

    def __getitem__(self, i) -> FatouComponentRecord:
        return self.records[i]

    def __iter__(self):
        return iter(self.records.values())

    def __len__(self):
        return len(self.records)

    def containing(self, z) -> FatouComponentRecord | None:
        for rec in self.records.values():
            if chordal_distance(rec.basepoint, z) < 1e-8:
                return rec
        return None

    def to_json(self) -> dict:
        return {
            "components": [r.to_json() for r in self.records.values()],
            "unresolved": {str(k): v for k, v in self.unresolved.items()},
        }


def component_records(f: RationalMap, grid: RasterGrid, min_pixels: int = MIN_COMPONENT_PIXELS, max_level: int | None = None) -> ComponentRecords:
    """Levels, images, basepoints and exponents of Fatou components, built level by level."""
    img = _images(grid, min_pixels)
    # periodic components: those on cycles of the component map
    periodic = set()
    for start in img:
        seen = []
        u = start
        while u in img and u not in seen:
            seen.append(u)
            u = img[u]
        if u in seen:
            periodic.update(seen[seen.index(u) :])
    level: dict[int, int] = {u: 0 for u in periodic}
    changed = True
    while changed:
        changed = False
        for u, v in img.items():
            if u not in level and v in level:
                level[u] = level[v] + 1
                changed = True
    records: dict[int, FatouComponentRecord] = {}
    unresolved: dict[int, str] = {}
    for u in img:
        if u not in level:
            unresolved[u] = "image chain does not reach a periodic component"
    for lv in range(0, max(level.values(), default=-1) + 1):
        if max_level is not None and lv > max_level:
            break
        for u in sorted(x for x, l in level.items() if l == lv):
            v = img[u]
            try:
                if lv == 0:
                    b = basepoint(f, grid, u, None, periodic=True)
                else:
                    if v not in records:
                        unresolved[u] = "image component unresolved"
                        continue
                    b = basepoint(f, grid, u, records[v].basepoint)
            except BasepointError as exc:
                unresolved[u] = str(exc)
                continue
            records[u] = FatouComponentRecord(u, lv, b, v, local_degree(f, b))
    return ComponentRecords(records, unresolved)


def exponent_chain(f: RationalMap, records: ComponentRecords, u: int, length: int = 2) -> tuple[int, int]:
    """(product of exponents along U -> f(U) -> ..., local degree of f^length at p_U)."""
    prod = 1
    cur = records[u]
    for _ in range(length):
        prod *= cur.exponent
        cur = records[cur.image]
    return prod, orbit_local_degree(f, records[u].basepoint, length)


# -- rotations of the circle---------------------------------------------------------


@dataclass(frozen=True)
class Incompatible:
    reason: str
    residual: float = math.nan

    def __bool__(self):
        return False


def _interp_on_circle(theta: np.ndarray, values: np.ndarray, at: np.ndarray) -> np.ndarray:
    """Periodic linear interpolation of a circle map given by samples, in unwrapped argument."""
    order = np.argsort(theta)
    t = theta[order]
    arg = np.unwrap(np.angle(values[order]))
    mod = np.abs(values[order])
    turns = arg[-1] - arg[0] + (np.angle(values[order][0] * np.conj(values[order][-1])) % (2 * np.pi))
    tp = np.concatenate([t - 2 * np.pi, t, t + 2 * np.pi])
    ap = np.concatenate([arg - turns, arg, arg + turns])
    mp = np.concatenate([mod, mod, mod])
    at = np.mod(at, 2 * np.pi)
    return np.interp(at, tp, mp) * np.exp(1j * np.interp(at, tp, ap))


def rotation_solve(phi_samples, k: int, l: int, n: int, tol: float = 1e-9):
    """Solve P_l o phi = P_n o phi o P_k for a rotation phi(z) = a z from circle samples.

    ``phi_samples`` is a pair (z, phi(z)) with |z| = 1.  Returns a, or an
    Incompatible verdict carrying the reason.
    """
    z, w = (np.asarray(a, dtype=complex).ravel() for a in phi_samples)
    if k < 2:
        raise PreconditionError("k must be at least 2")
    if z.size < 3 or z.size != w.size:
        raise PreconditionError("need matching samples, at least three")
    theta = np.mod(np.angle(z), 2 * np.pi)
    order = np.argsort(theta)
    ws = w[order]
    steps = np.angle(np.roll(ws, -1) * np.conj(ws))
    if np.any(steps <= 0) or abs(steps.sum() - 2 * np.pi) > 1e-6:
        raise PreconditionError("samples are not from an orientation-preserving circle homeomorphism")
    if l != n * k:
        return Incompatible("degree")
    ratio = w / z
    a = complex(ratio.mean())
    if abs(a) == 0:
        return Incompatible("not a rotation", math.inf)
    a /= abs(a)
    rot = float(np.max(np.abs(w - a * z)))
    if rot > tol:
        return Incompatible("not a rotation", rot)
    phi_zk = _interp_on_circle(theta, w, np.angle(z**k))
    feq = float(np.max(np.abs(w**l - phi_zk**n)))
    root = abs(a ** (n * (k - 1)) - 1)
    if feq > tol or root > tol:
        return Incompatible("functional equation", max(feq, root))
    return a
