"""Blowing small disks on the Julia set up to definite size by iterates of the map.

Works on a normalized map: an attracting fixed point at infinity, the Julia
set inside the disk of radius 1/2, and |f| >= 1 on the unit circle.  All
distances here are Euclidean in that chart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, cKDTree

from .errors import DegreeError, ElevatorError, NotSubhyperbolicError
from .orbits import (
    degree_bound_N,
    julia_samples,
    postcritical_report,
    preimages,
    repelling_fixed_point,
)
from .raster import RasterGrid, Window, rasterize
from .sphere import MoebiusMap, RationalMap, chordal_distance, is_inf

__all__ = [
    "ElevatorContext",
    "ElevatorResult",
    "DistortionStats",
    "normalize",
    "elevate",
    "distortion_stats",
    "pull_back",
    "branch_consistency",
    "disk_samples",
    "affine_context",
    "fit_envelope",
    "pull_back_point",
    "orbit_local_degree_tol",
]

N_BOUNDARY = 256
N_INTERIOR = 32
MAX_ELEVATION = 100_000
J_RADIUS = 0.45


def disk_samples(p: complex, r: float, n_boundary: int = N_BOUNDARY, n_interior: int = N_INTERIOR) -> np.ndarray:
    """Boundary circle, a sunflower of interior points, then the center (last entry)."""
    th = 2 * np.pi * np.arange(n_boundary) / n_boundary
    k = np.arange(n_interior)
    rad = r * np.sqrt((k + 0.5) / n_interior)
    ang = k * math.pi * (3 - math.sqrt(5))
    return np.concatenate([p + r * np.exp(1j * th), p + rad * np.exp(1j * ang), [p]])


def _diameter(z: np.ndarray) -> float:
    z = z[np.isfinite(z)]
    if z.size < 2:
        return 0.0
    pts = np.column_stack([z.real, z.imag])
    if z.size > 8:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except Exception:
            pass
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


@dataclass
class ElevatorContext:
    f: RationalMap
    moebius: MoebiusMap
    period: int
    eps0: float
    delta0: float
    post: list[complex]
    post_c: list[complex]
    julia: np.ndarray
    pixel_size: float
    N: int
    lipschitz: float
    grid: RasterGrid | None = field(default=None, repr=False)
    exact_julia: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self._tree = cKDTree(np.column_stack([self.julia.real, self.julia.imag]))
        self._post = np.array([p for p in self.post if not is_inf(p)], dtype=complex)

    def near_julia(self, z: complex, radius: float) -> np.ndarray:
        idx = self._tree.query_ball_point([z.real, z.imag], radius)
        return self.julia[np.asarray(idx, dtype=int)]

    def nearest_julia_distance(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        d, _ = self._tree.query(np.column_stack([z.real, z.imag]))
        return d

    def post_in(self, center: complex, radius: float) -> np.ndarray:
        if self._post.size == 0:
            return self._post
        return self._post[np.abs(self._post - center) < radius]

    def to_json(self) -> dict:
        m = self.moebius.to_json()
        return {
            "moebius": m,
            "period": self.period,
            "eps0": self.eps0,
            "delta0": self.delta0,
            "lipschitz": self.lipschitz,
            "N": self.N,
            "pixel_size": self.pixel_size,
            "postcritical": [[p.real, p.imag] if not is_inf(p) else "inf" for p in self.post],
            "map": self.f.to_json(),
        }


def _grid_extent(g: RationalMap, cycles, resolution: int) -> tuple[RasterGrid, float]:
    hw = 2.0
    for _ in range(8):
        grid = rasterize(g, Window(0j, hw), resolution, cycles=cycles)
        j = grid.julia
        if not j.any():
            raise ElevatorError("empty julia raster")
        edge = j[0].any() or j[-1].any() or j[:, 0].any() or j[:, -1].any()
        if not edge:
            pts = grid.julia_points
            return grid, float(np.abs(pts).max() + grid.pixel_size * 0.7072)
        hw *= 2
    raise ElevatorError("julia set not bounded after moving the attracting point to infinity")


def _post_ok(ctx_julia_tree, julia, post, post_c, e, jmax):
    if jmax + 8 * e >= 1:
        return False
    if post_c.size:
        d, _ = ctx_julia_tree.query(np.column_stack([post_c.real, post_c.imag]))
        if d.min() <= 8 * e:
            return False
    for i, a in enumerate(post):
        near = ctx_julia_tree.query_ball_point([a.real, a.imag], 8 * e)
        if not near:
            continue
        others = np.delete(post, i)
        if others.size == 0:
            continue
        close = others[np.abs(others - a) < 16 * e]
        if close.size == 0:
            continue
        q = julia[np.asarray(near, dtype=int)]
        if (np.abs(q[:, None] - close[None, :]) < 8 * e).any():
            return False
    return True


def normalize(
    f: RationalMap,
    resolution: int = 512,
    n_calibration: int = 64,
    seed: int = 0,
) -> ElevatorContext:
    """Conjugate and iterate f so that infinity is an attracting fixed point and J lies in |z| < 1/2."""
    if f.degree < 2:
        raise DegreeError("the elevator needs degree >= 2")
    report = postcritical_report(f)
    cycles = report.attracting_cycles
    if not cycles:
        raise NotSubhyperbolicError("no attracting cycle")
    # prefer a superattracting fixed point at infinity, then any fixed point, then the shortest cycle
    cyc = min(cycles, key=lambda c: (c.period, not is_inf(c.points[0]), c.multiplier))
    a = next((p for p in cyc.points if is_inf(p)), cyc.points[0])
    m1 = MoebiusMap.identity() if is_inf(a) else MoebiusMap(0, 1, 1, -a)
    g = f.conjugate(m1)
    if cyc.period > 1:
        g = g.iterate(cyc.period)
    g_report = postcritical_report(g)
    grid, R = _grid_extent(g, g_report.attracting_cycles, resolution)

    scale = R / J_RADIUS
    for _attempt in range(3):
        m2 = MoebiusMap(1, 0, 0, scale)
        h = g.conjugate(m2)
        circle = np.exp(2j * np.pi * np.arange(1000) / 1000)
        if np.all(np.abs(h(circle)) >= 1):
            break
        scale *= 2
    else:
        raise ElevatorError("|f| >= 1 on the unit circle failed after 3 rescalings")
    m = m2.compose(m1)
    h_report = postcritical_report(h)
    grid = rasterize(h, Window(0j, 0.5), resolution, cycles=h_report.attracting_cycles)
    julia = grid.julia_points
    jmax = float(np.abs(julia).max() + grid.pixel_size * 0.7072)
    if jmax >= 0.5 or grid.julia[0].any() or grid.julia[-1].any() or grid.julia[:, 0].any() or grid.julia[:, -1].any():
        raise ElevatorError("julia raster does not fit in the disk of radius 1/2")

    post = _orbit_points(h_report)
    post_c = np.array([p for p in h_report.postcritical_periodic if not is_inf(p)], dtype=complex)
    post_fin = np.array([p for p in post if not is_inf(p)], dtype=complex)
    tree = cKDTree(np.column_stack([julia.real, julia.imag]))
    hull = julia[ConvexHull(np.column_stack([julia.real, julia.imag])).vertices]
    diam_j = float(np.abs(hull[:, None] - hull[None, :]).max())
    lo, hi = 0.0, diam_j / 4
    if _post_ok(tree, julia, post_fin, post_c, hi, jmax):
        lo = hi
    else:
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if _post_ok(tree, julia, post_fin, post_c, mid, jmax):
                lo = mid
            else:
                hi = mid
    if lo <= 0:
        raise ElevatorError("no admissible eps0")
    eps0 = 0.5 * lo

    # Lipschitz bound of h on the eps0-neighborhood of J
    offs = eps0 * np.concatenate([[0], np.exp(2j * np.pi * np.arange(8) / 8), 0.5 * np.exp(2j * np.pi * (np.arange(8) + 0.5) / 8)])
    nbhd = (julia[:, None] + offs[None, :]).ravel()
    lip = float(np.abs(h.derivative(nbhd)).max())

    exact = julia_samples(h, 4000, seed=seed)
    ctx = ElevatorContext(
        f=h,
        moebius=m,
        period=cyc.period,
        eps0=eps0,
        delta0=eps0 / lip,
        post=list(post),
        post_c=list(post_c),
        julia=julia,
        pixel_size=grid.pixel_size,
        N=degree_bound_N(h),
        lipschitz=lip,
        grid=grid,
        exact_julia=exact,
    )
    # calibration: the least blown-up diameter over a fixed batch, never above the analytic bound
    rng = np.random.default_rng(seed)
    diams = []
    for _ in range(n_calibration):
        p = exact[rng.integers(0, exact.size)]
        r = math.exp(rng.uniform(math.log(1e-6), math.log(0.9 * eps0)))
        diams.append(elevate(ctx, p, r).diameter)
    ctx.delta0 = float(min(min(diams), eps0 / lip))
    return ctx


def _orbit_points(report) -> list[complex]:
    """post(f) when finite; otherwise every recorded critical-orbit point plus the cycles."""
    if report.postcritical is not None:
        return list(report.postcritical)
    pts = []
    for t in report.tails:
        pts.extend(t.orbit[1:])
        pts.extend(t.cycle)
    return pts


@dataclass
class ElevatorResult:
    p: complex
    r: float
    n: int
    q_tilde: complex
    q: complex
    radius: float
    postcritical_case: bool
    k: int
    images: np.ndarray = field(repr=False)
    diameter: float = 0.0
    critical_preimage: complex | None = None

    @property
    def center(self) -> complex:
        return self.q

    def inside_half(self) -> bool:
        """Containment: the image lies in the concentric disk of half the radius."""
        return bool(np.all(np.abs(self.images - self.q) <= 0.5 * self.radius * (1 + 1e-12)))


def _contained(ctx: ElevatorContext, img: np.ndarray, center: complex):
    """Julia points q~ with img inside B(q~, eps0); candidates are f^n(p) and nearby julia pixels."""
    cand = np.concatenate([[center], ctx.near_julia(center, ctx.eps0)])
    worst = np.abs(img[None, :] - cand[:, None]).max(axis=1)
    ok = worst < ctx.eps0
    return cand[ok]


def elevate(ctx: ElevatorContext, p, r: float) -> ElevatorResult:
    """Apply the elevator to B(p, r): the maximal n with f^n(B) inside an eps0-disk about a Julia point."""
    p = complex(p)
    if not 0 < r < ctx.eps0:
        raise ElevatorError(f"radius {r} must lie in (0, eps0={ctx.eps0})")
    if ctx.nearest_julia_distance(p)[0] > 1.5 * ctx.pixel_size:
        raise ElevatorError("p is not within a pixel of the julia raster")
    pts = disk_samples(p, r)
    img = pts.copy()
    good = _contained(ctx, img, p)
    n = 0
    while True:
        nxt = ctx.f(img)
        ok = _contained(ctx, nxt, complex(nxt[-1]))
        if ok.size == 0:
            break
        img, good = nxt, ok
        n += 1
        if n > MAX_ELEVATION:
            raise ElevatorError("iteration cap reached: radius below numeric floor")
    bnd = img[:N_BOUNDARY]
    cloud = complex(bnd.mean())
    q_tilde = complex(good[np.argmin(np.abs(good - cloud))])
    post_near = ctx.post_in(q_tilde, 2 * ctx.eps0)
    if post_near.size == 0:
        q, radius, case = q_tilde, 2 * ctx.eps0, False
    else:
        if post_near.size > 1:
            raise ElevatorError("two postcritical points near the image; eps0 too large")
        q, radius, case = complex(post_near[0]), 8 * ctx.eps0, True
    k, x = 1, None
    if case:
        x = pull_back_point(ctx.f, q, p, n)
        k = orbit_local_degree_tol(ctx.f, x, n)
    return ElevatorResult(p, r, n, q_tilde, q, radius, case, k, img, _diameter(img), x)


def orbit_local_degree_tol(f: RationalMap, x: complex, n: int, tol: float = 1e-6) -> int:
    """Local degree of f^n at x with a looser critical-point match (pulled-back points are inexact)."""
    if n == 0:
        return 1
    k = 1
    z = complex(x)
    crit = f.critical_points
    for _ in range(n):
        for c, deg in crit:
            if chordal_distance(c, z) < tol:
                k *= deg
        z = f(z)
    return k


def pull_back_point(f: RationalMap, w: complex, p: complex, n: int) -> complex:
    """The point x near p with f^n(x) = w, following the orbit of p backwards."""
    orbit = [p]
    for _ in range(n - 1):
        orbit.append(complex(f(orbit[-1])))
    x = w
    for i in range(n - 1, -1, -1):
        pre = preimages(f, np.array([x]))[0]
        x = complex(pre[np.argmin(np.abs(pre - orbit[i]))])
    return x


# -- branch consistency -----------------------------------------------------------


def _pull_once(f: RationalMap, y: np.ndarray, base: complex, base_pre: complex, steps: int = 24) -> np.ndarray:
    """Continue the inverse branch sending base -> base_pre along the segments base -> y."""
    z = np.full(y.shape, base_pre, dtype=complex)
    for t in np.linspace(0, 1, steps + 1)[1:]:
        target = base + t * (y - base)
        for _ in range(30):
            step = (f(z) - target) / f.derivative(z)
            z = z - step
            if np.all(np.abs(step) < 1e-15 * np.maximum(1.0, np.abs(z))):
                break
    return z


def pull_back(f: RationalMap, y, p: complex, n: int) -> np.ndarray:
    """The branch of f^-n fixing the repelling fixed point p, applied to each y."""
    out = np.atleast_1d(np.asarray(y, dtype=complex)).copy()
    for _ in range(n):
        out = _pull_once(f, out, p, p)
    return out


def branch_consistency(ctx: ElevatorContext, radii=None, tol_px: float = 2.0, n_samples: int = 64) -> list[dict]:
    """Check f^(n2-n1) o f^-n2 = f^-n1 on a disk about a repelling fixed point for nested elevations."""
    p = repelling_fixed_point(ctx.f)
    rho_post = min([abs(p - q) for q in ctx._post] + [ctx.eps0 * 3]) / 3
    rho = 0.5 * rho_post
    if radii is None:
        radii = [0.5 * ctx.eps0 * 16.0**-j for j in range(4)]
    ys = p + 2 * rho * np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    out = []
    for r in radii:
        triple = (r, r / 2, r / 4)
        ns = [elevate(ctx, p, t).n for t in triple]
        pulls = [pull_back(ctx.f, ys, p, n) for n in ns]
        err = 0.0
        for (n1, a), (n2, b) in zip(zip(ns, pulls), list(zip(ns, pulls))[1:]):
            fwd = b
            for _ in range(n2 - n1):
                fwd = ctx.f(fwd)
            err = max(err, float(np.abs(fwd - a).max()))
        out.append({"radii": triple, "n": tuple(ns), "error": err, "ok": err <= tol_px * ctx.pixel_size})
    return out


# -- distortion statistics ---------------------------------------------------------


@dataclass
class DistortionStats:
    gamma: float
    C1: float
    r1: float
    C2: float
    C3: float | None
    degenerate: bool
    n_disks: int
    n_subsets: int
    residual: float
    d_pairs: int
    d_centers_postcritical: bool
    results: list[ElevatorResult] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "gamma": self.gamma,
            "C1": self.C1,
            "r1": self.r1,
            "C2": self.C2,
            "C3": self.C3 if self.C3 is not None else "no data",
            "degenerate_fit": self.degenerate,
            "disks": self.n_disks,
            "subsets": self.n_subsets,
            "fit_residual": self.residual,
            "d_pairs": self.d_pairs,
            "d_centers_postcritical": self.d_centers_postcritical,
        }


def _upper_hull(x: np.ndarray, y: np.ndarray):
    """Monotone chain, left to right, keeping only clockwise turns."""
    order = np.lexsort((y, x))
    hull: list[tuple[float, float]] = []
    for pt in zip(x[order], y[order]):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (pt[1] - y1) - (y2 - y1) * (pt[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(pt)
    return hull


def fit_envelope(log_y: np.ndarray, log_x: np.ndarray) -> tuple[float, float, bool]:
    """Line log_x = c + gamma * log_y above every point, lowest at the mean of log_y.

    This is the linear programme min c + gamma * mean(log_y) subject to the
    envelope constraints; its optimum is the upper-hull edge over the mean.
    Returns (gamma, c, degenerate).
    """
    if log_y.size < 2 or np.ptp(log_y) < 1e-9:
        return math.nan, float(log_x.max()) if log_x.size else math.nan, True
    hull = _upper_hull(log_y, log_x)
    xm = float(log_y.mean())
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        if x1 <= xm <= x2 and x2 > x1:
            g = (y2 - y1) / (x2 - x1)
            return float(g), float(y1 - g * x1), False
    return math.nan, math.nan, True


def _d_pairs(f: RationalMap, res: ElevatorResult, rng, tries: int = 48):
    """Pairs u != v in B with f^n(u) = f^n(v), found near the critical preimage of q."""
    x = res.critical_preimage
    if x is None or res.k < 2:
        return []
    n = res.n
    out = []

    def fn(z):
        for _ in range(n):
            z = f(z)
        return z

    def dfn(z):
        d = 1 + 0j
        for _ in range(n):
            d *= f.derivative(z)
            z = f(z)
        return d

    for _ in range(tries):
        rad = res.r * math.exp(rng.uniform(math.log(1e-3), 0))
        u = res.p + rad * np.exp(2j * np.pi * rng.uniform())
        if abs(u - res.p) >= res.r:
            continue
        target = fn(u)
        for j in range(1, res.k):
            v = x + (u - x) * np.exp(2j * np.pi * j / res.k)
            for _ in range(40):
                d = dfn(v)
                if d == 0 or not np.isfinite(d):
                    break
                step = (fn(v) - target) / d
                v -= step
                if abs(step) < 1e-15:
                    break
            if abs(v - res.p) < res.r and abs(v - u) > 1e-9 * res.r and abs(fn(v) - target) < 1e-10:
                out.append((u, v, target))
    return out


def distortion_stats(
    ctx: ElevatorContext,
    n_samples: int = 200,
    rng_seed: int = 1,
    r_range=None,
    subsets: int = 8,
    radii_choices=None,
) -> DistortionStats:
    """Empirical constants of the distortion bounds over sampled disks and connected subsets.

    Radii are log-uniform on ``r_range`` (default [1e-5, eps0/2]) unless
    ``radii_choices`` gives a finite set to draw from.
    """
    rng = np.random.default_rng(rng_seed)
    pool = ctx.exact_julia if ctx.exact_julia is not None else ctx.julia
    lo, hi = r_range if r_range is not None else (1e-5, 0.5 * ctx.eps0)
    xs, ys = [], []
    r1 = math.inf
    C2 = 0.0
    C3 = None
    dcount = 0
    d_ok = True
    results = []
    radii = []
    for _ in range(n_samples):
        p = complex(pool[rng.integers(0, pool.size)])
        if radii_choices is not None:
            r = float(radii_choices[rng.integers(0, len(radii_choices))])
        elif hi > lo:
            r = float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
        else:
            r = float(lo)
        radii.append(r)
        res = elevate(ctx, p, r)
        results.append(res)
        n = res.n

        def fn(z, n=n):
            for _ in range(n):
                z = ctx.f(z)
            return z

        diam_b = 2 * r
        # (a) sub-disks and segments
        for s in range(subsets):
            if s % 2 == 0:
                t = r * 0.9 * math.sqrt(rng.uniform())
                c = p + t * np.exp(2j * np.pi * rng.uniform())
                room = r - abs(c - p)
                rad = room * math.exp(rng.uniform(math.log(1e-3), 0))
                A = c + rad * np.exp(2j * np.pi * np.arange(64) / 64)
                dA = 2 * rad
            else:
                u = p + r * math.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
                v = p + r * math.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
                A = u + (v - u) * np.linspace(0, 1, 64)
                dA = abs(v - u)
            if dA <= 0:
                continue
            dfa = _diameter(fn(A))
            if dfa <= 0:
                continue
            xs.append(dA / diam_b)
            ys.append(dfa)
        # (b) disk about f^n(p) inside f^n(B/2)
        half = disk_samples(p, r / 2)[:N_BOUNDARY]
        r1 = min(r1, float(np.abs(fn(half) - res.images[-1]).min()))
        # (c) scaled Lipschitz ratio over sample pairs
        pts = disk_samples(p, r)
        imgs = res.images
        du = np.abs(pts[:, None] - pts[None, :])
        dv = np.abs(imgs[:, None] - imgs[None, :])
        mask = du > 0
        C2 = max(C2, float((dv[mask] * diam_b / du[mask]).max()))
        # (d) distinct points with equal images
        for u, v, w in _d_pairs(ctx.f, res, rng):
            dcount += 1
            if ctx.post_in(res.q, 1e-9).size == 0:
                d_ok = False
            val = abs(w - res.q) * diam_b / abs(u - v)
            C3 = val if C3 is None else max(C3, val)
    lx = np.log(np.array(xs))
    ly = np.log(np.array(ys))
    gamma, c, degenerate = fit_envelope(ly, lx)
    if np.ptp(np.log(radii)) < math.log(1.5):
        degenerate = True
    resid = float(np.max(lx - (c + gamma * ly))) if not degenerate else math.nan
    return DistortionStats(
        gamma=gamma,
        C1=math.exp(c) if np.isfinite(c) else math.nan,
        r1=r1,
        C2=C2,
        C3=C3,
        degenerate=degenerate,
        n_disks=n_samples,
        n_subsets=len(xs),
        residual=resid,
        d_pairs=dcount,
        d_centers_postcritical=d_ok,
        results=results,
    )


def affine_context(factor: complex = 2.0, eps0: float = 0.1) -> ElevatorContext:
    """Synthetic context for z -> factor * z with Julia set {0}; a closed-form test harness."""
    f = RationalMap([0, factor], [1])
    julia = np.array([0j])
    return ElevatorContext(
        f=f,
        moebius=MoebiusMap.identity(),
        period=1,
        eps0=eps0,
        delta0=eps0 / abs(factor),
        post=[],
        post_c=[],
        julia=julia,
        pixel_size=1.0,
        N=1,
        lipschitz=abs(factor),
        exact_julia=julia,
    )

