"""Estimators for the geometry of peripheral circles and of the Julia set.

All distances are chordal unless stated otherwise; curves are handled through
their lift to the unit sphere in R^3, where chordal distance is Euclidean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange
from scipy import ndimage
from scipy.spatial import cKDTree
from shapely.geometry import LinearRing

from .errors import GeometryError
from .raster import PeripheralCurve, RasterGrid
from .sphere import chordal_distance, to_sphere

__all__ = [
    "quasicircle_constant",
    "relative_separation",
    "locations_and_scales",
    "porosity_constant",
    "qs_distortion",
    "ScaleResult",
    "PorosityResult",
    "GeometryReport",
    "geometry_report",
]

MAX_VERTICES = 4096
GEOMETRY_MIN_PIXELS = 32


# -- quasicircle constant -------------------------------------------------------


def _clean(vertices: np.ndarray) -> np.ndarray:
    v = np.asarray(vertices, dtype=complex)
    if v.size == 0:
        return v
    keep = np.abs(v - np.roll(v, 1)) > 0
    if not keep.any():
        return v[:1]
    return v[keep]


@njit(cache=True)
def _quasicircle_dp(x):
    V = x.shape[0]
    half = V // 2

    def dist(i, j):
        a = x[i % V]
        b = x[j % V]
        return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)

    # table[L][i] = diameter of the arc i, i+1, .., i+L (indices mod V)
    table = np.zeros((half + 1, V))
    for L in range(1, half + 1):
        for i in range(V):
            d = dist(i, i + L)
            m = table[L - 1, i]
            if table[L - 1, (i + 1) % V] > m:
                m = table[L - 1, (i + 1) % V]
            table[L, i] = d if d > m else m
    prev = table[half].copy()
    best = 1.0
    cur = np.empty(V)
    # every unordered pair is visited once as (i, i+L) with L >= V/2,
    # its short complementary arc then having length V-L <= V/2
    for L in range(half, V):
        if L > half:
            for i in range(V):
                d = dist(i, i + L)
                m = prev[i]
                if prev[(i + 1) % V] > m:
                    m = prev[(i + 1) % V]
                cur[i] = d if d > m else m
            prev[:] = cur
        comp = V - L
        for i in range(V):
            s = dist(i, i + L)
            if s == 0.0:
                continue
            a = prev[i]
            b = table[comp, (i + L) % V]
            r = (a if a < b else b) / s
            if r > best:
                best = r
    return best


def quasicircle_constant(curve, max_vertices: int = MAX_VERTICES) -> float:
    """Smallest L with min(diam of the two vertex arcs) <= L * sigma(u, v) over all vertex pairs."""
    v = curve.vertices if isinstance(curve, PeripheralCurve) else np.asarray(curve, dtype=complex)
    v = _clean(v)
    if v.size < 8:
        raise GeometryError(f"curve needs at least 8 distinct vertices, got {v.size}")
    if v.size > max_vertices:
        idx = np.linspace(0, v.size, max_vertices, endpoint=False).astype(int)
        v = v[idx]
    return float(_quasicircle_dp(to_sphere(v)))


# -- relative separation ----------------------------------------------------------


def _point_segment(p, a, b):
    ab = b - a
    t = np.einsum("ij,ij->i", p - a, ab) / np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-300)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(p - proj, axis=1)


def _directed(xa, xb, tree_b):
    """Least distance from vertices of A to segments of B (closed polylines in R^3)."""
    d0, _ = tree_b.query(xa)
    seg = np.linalg.norm(np.roll(xb, -1, axis=0) - xb, axis=1).max()
    best = float(d0.min())
    radius = best + seg
    nb = len(xb)
    for i in np.flatnonzero(d0 <= radius):
        near = np.asarray(tree_b.query_ball_point(xa[i], radius), dtype=int)
        if near.size == 0:
            continue
        starts = np.unique(np.concatenate([near, (near - 1) % nb]))
        p = np.repeat(xa[i][None, :], starts.size, axis=0)
        best = min(best, float(_point_segment(p, xb[starts], xb[(starts + 1) % nb]).min()))
    return best


def _curve_distance(xa, xb, tree_a, tree_b) -> float:
    return min(_directed(xa, xb, tree_b), _directed(xb, xa, tree_a))


def _ring(curve: PeripheralCurve) -> LinearRing:
    v = curve.vertices
    return LinearRing(np.column_stack([v.real, v.imag]))


def relative_separation(curves: list) -> tuple[float, tuple[int, int]]:
    """min dist(J_k, J_l) / min(diam J_k, diam J_l) over pairs, with the minimizing pair."""
    if len(curves) < 2:
        raise GeometryError("need at least two curves")
    curves = [c if isinstance(c, PeripheralCurve) else PeripheralCurve(np.asarray(c, dtype=complex), i) for i, c in enumerate(curves)]
    xs = [to_sphere(c.vertices) for c in curves]
    trees = [cKDTree(x) for x in xs]
    diams = np.array([c.diameter for c in curves])
    centers = np.array([x.mean(axis=0) for x in xs])
    radii = np.array([np.linalg.norm(x - m, axis=1).max() for x, m in zip(xs, centers)])

    from shapely.strtree import STRtree

    rings = [_ring(c) for c in curves]
    tree = STRtree(rings)
    for i, r in enumerate(rings):
        for j in tree.query(r):
            j = int(j)
            if j > i and r.intersects(rings[j]):
                return 0.0, (i, j)

    n = len(curves)
    ii, jj = np.triu_indices(n, 1)
    gap = np.linalg.norm(centers[ii] - centers[jj], axis=1) - radii[ii] - radii[jj]
    lower = np.maximum(gap, 0.0) / np.minimum(diams[ii], diams[jj])
    order = np.argsort(lower, kind="stable")
    best = math.inf
    pair = (-1, -1)
    for k in order:
        if lower[k] >= best:
            break
        i, j = int(ii[k]), int(jj[k])
        d = _curve_distance(xs[i], xs[j], trees[i], trees[j])
        ratio = d / min(diams[i], diams[j])
        if ratio < best:
            best, pair = ratio, (i, j)
    return float(best), pair


# -- locations and scales -----------------------------------------------------------


@dataclass
class ScaleResult:
    C: float
    pass_rate: float
    c_max: float
    constants: np.ndarray = field(repr=False)
    radii: np.ndarray = field(repr=False)
    pass_rate_by_scale: list[tuple[float, float]] = field(default_factory=list)


def _log_uniform(rng, lo, hi, n):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), n))


def locations_and_scales(
    curves: list,
    julia_points,
    n_samples: int = 10_000,
    rng_seed: int = 1,
    pixel_size: float | None = None,
    r_min: float | None = None,
    c_max: float = 8.0,
    quantile: float = 0.99,
) -> ScaleResult:
    """Per sampled ball B(p, r): the least C for which some curve meets the ball with r/C <= diam <= C r.

    ``C`` is the ``quantile`` of these constants; ``pass_rate`` is the share of
    samples with constant at most ``c_max``.
    """
    pts = np.asarray(julia_points, dtype=complex).ravel()
    if pts.size == 0 or not curves:
        raise GeometryError("no admissible samples")
    if r_min is None:
        if pixel_size is None:
            raise GeometryError("give pixel_size or r_min")
        r_min = 8.0 * pixel_size
    rng = np.random.default_rng(rng_seed)
    p = pts[rng.integers(0, pts.size, n_samples)]
    r = _log_uniform(rng, r_min, 2.0, n_samples)
    # chordal radius at p of the chart ball, so scales follow the sphere metric
    p3 = to_sphere(p)
    best = np.full(n_samples, np.inf)
    for c in curves:
        x = c.sphere_coords if isinstance(c, PeripheralCurve) else to_sphere(c)
        diam = c.diameter if isinstance(c, PeripheralCurve) else float(np.max(np.linalg.norm(x[:, None] - x[None], axis=2)))
        d, _ = cKDTree(x).query(p3)
        meets = d < r
        need = np.maximum(r / diam, diam / r)
        best = np.where(meets & (need < best), need, best)
    C = float(np.quantile(best, quantile)) if np.isfinite(np.quantile(best, quantile)) else math.inf
    passed = best <= c_max
    edges = np.geomspace(r_min, 2.0, 7)
    by_scale = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = (r >= lo) & (r < hi)
        if m.any():
            by_scale.append((float(math.sqrt(lo * hi)), float(passed[m].mean())))
    return ScaleResult(C, float(passed.mean()), c_max, best, r, by_scale)


# -- porosity ------------------------------------------------------------------------


@dataclass
class PorosityResult:
    c_por: float
    pass_rate: float
    ratios: np.ndarray = field(repr=False)
    radii: np.ndarray = field(repr=False)


@njit(parallel=True, cache=True)
def _largest_hole(edt, rows, cols, radii, floor):
    n_s = rows.shape[0]
    H, W = edt.shape
    out = np.empty(n_s)
    for s in prange(n_s):
        pr = rows[s]
        pc = cols[s]
        r = radii[s]
        step = max(1, int(r / 32.0))
        ri = int(math.ceil(r))
        best = 0.0
        for dr in range(-ri, ri + 1, step):
            y = pr + dr
            if y < 0 or y >= H:
                continue
            for dc in range(-ri, ri + 1, step):
                x = pc + dc
                if x < 0 or x >= W:
                    continue
                room = r - math.sqrt(dr * dr + dc * dc)
                if room <= best:
                    continue
                e = edt[y, x]
                v = e if e < room else room
                if v > best:
                    best = v
        out[s] = best if best > floor else floor
    return out


def porosity_constant(
    grid: RasterGrid,
    n_samples: int = 10_000,
    rng_seed: int = 1,
    r_min_px: float = 8.0,
    r_max_px: float | None = None,
    percentile: float = 1.0,
) -> PorosityResult:
    """Largest julia-free disk inside sampled balls B(p, r), measured in pixels of the chart.

    The hole radius is floored at half a pixel (nothing smaller is visible);
    ``pass_rate`` is the share of samples that found a hole above that floor.
    """
    n = grid.n
    if r_max_px is None:
        r_max_px = n / 2.0
    julia = grid.julia
    if julia.any():
        edt = ndimage.distance_transform_edt(~julia) - 0.5
        edt = np.maximum(edt, 0.0)
    else:
        edt = np.full(julia.shape, np.inf)
    rng = np.random.default_rng(rng_seed)
    jr, jc = np.nonzero(julia)
    if jr.size:
        pick = rng.integers(0, jr.size, n_samples)
        rows, cols = jr[pick], jc[pick]
    else:
        rows = rng.integers(0, n, n_samples)
        cols = rng.integers(0, n, n_samples)
    radii = _log_uniform(rng, r_min_px, r_max_px, n_samples)
    found = _largest_hole(edt, rows.astype(np.int64), cols.astype(np.int64), radii, 0.5)
    ratios = found / radii
    return PorosityResult(float(np.percentile(ratios, percentile)), float((found > 0.5).mean()), ratios, radii)


# -- quasisymmetric distortion ---------------------------------------------------------


def _metric(name):
    if name == "chordal":
        return chordal_distance
    if name == "euclidean":
        return lambda a, b: np.abs(np.asarray(a) - np.asarray(b))
    raise ValueError(f"unknown metric {name!r}")


def qs_distortion(
    samples,
    images,
    n_triples: int = 20_000,
    rng_seed: int = 1,
    n_bins: int = 12,
    metric: str = "chordal",
    q: float = 99.0,
) -> list[tuple[float, float]]:
    """Empirical distortion profile: per input-ratio bin, the ``q``-th percentile output ratio.

    Triples (u, v, w) are drawn from ``samples`` with their images under the
    map; the input ratio is d(u,v)/d(u,w) and the output ratio is the same
    expression for the images.
    """
    z = np.asarray(samples, dtype=complex).ravel()
    w = np.asarray(images, dtype=complex).ravel()
    if z.size != w.size:
        raise ValueError("samples and images differ in length")
    if z.size < 3:
        raise GeometryError("need at least three samples")
    d = _metric(metric)
    rng = np.random.default_rng(rng_seed)
    i, j, k = (rng.integers(0, z.size, n_triples) for _ in range(3))
    d_uw = d(z[i], z[k])
    ok = (d_uw > 0) & (i != j) & (i != k)
    i, j, k = i[ok], j[ok], k[ok]
    rin = d(z[i], z[j]) / d(z[i], z[k])
    den = d(w[i], w[k])
    good = den > 0
    rin = rin[good]
    rout = d(w[i], w[j])[good] / den[good]
    pos = rin > 0
    rin, rout = rin[pos], rout[pos]
    if rin.size == 0:
        return []
    edges = np.geomspace(rin.min(), rin.max() * (1 + 1e-12), n_bins + 1)
    prof = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = (rin >= lo) & (rin < hi)
        if m.sum() >= 5:
            prof.append((float(math.sqrt(lo * hi)), float(np.percentile(rout[m], q))))
    return prof


# -- report ---------------------------------------------------------------------------------


@dataclass
class GeometryReport:
    resolution: int
    L_per_curve: list[float]
    L_max: float
    separation: float
    separation_pair: tuple[int, int]
    C: float
    C_pass_rate: float
    c_por: float
    porosity_pass_rate: float
    julia_area: list[tuple[int, int]]
    curves: int
    seed: int
    samples: int

    def to_json(self) -> dict:
        return {
            "resolution": self.resolution,
            "seed": self.seed,
            "samples": self.samples,
            "curves": self.curves,
            "quasicircle_L_max": self.L_max,
            "quasicircle_L_per_curve": self.L_per_curve,
            "relative_separation": self.separation,
            "relative_separation_pair": list(self.separation_pair),
            "locations_and_scales_C": self.C,
            "locations_and_scales_pass_rate": self.C_pass_rate,
            "porosity_c": self.c_por,
            "porosity_pass_rate": self.porosity_pass_rate,
            "julia_area": [{"resolution": n, "julia_pixels": k} for n, k in self.julia_area],
        }


def geometry_report(
    grid: RasterGrid,
    curves: list[PeripheralCurve],
    n_samples: int = 10_000,
    seed: int = 1,
    julia_area=None,
    min_pixels: int = GEOMETRY_MIN_PIXELS,
) -> GeometryReport:
    """All four estimators on one raster.

    Quasicircle and separation constants use only curves of components with
    at least ``min_pixels`` pixels; smaller ones are pixel-shaped.
    """
    table = grid.components
    shaped = [c for c in curves if table[c.component].pixels >= min_pixels and len(c) >= 8]
    Ls = [quasicircle_constant(c) for c in shaped]
    sep, pair = relative_separation(shaped)
    pair = (shaped[pair[0]].component, shaped[pair[1]].component)
    las = locations_and_scales(curves, grid.to_sphere_point(grid.julia_points), n_samples, seed, r_min=8.0 * grid.pixel_size)
    por = porosity_constant(grid, n_samples, seed)
    return GeometryReport(
        resolution=grid.n,
        L_per_curve=Ls,
        L_max=max(Ls),
        separation=sep,
        separation_pair=pair,
        C=las.C,
        C_pass_rate=las.pass_rate,
        c_por=por.c_por,
        porosity_pass_rate=por.pass_rate,
        julia_area=list(julia_area or [(grid.n, grid.julia_count)]),
        curves=len(curves),
        seed=seed,
        samples=n_samples,
    )
