"""Pixel classification of the sphere into basins and Julia pixels, plus boundary tracing.

A pixel is followed as a small chordal disk: its radius is multiplied by the
spherical derivative along the orbit of the pixel center.  The pixel gets the
label of the first attracting cycle whose capture neighborhood the center
reaches, unless the disk has blown up past ``blowup`` first, in which case it
straddles the Julia set and is left Unresolved (-1).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property

import numba
import numpy as np
from numba import njit, prange
from scipy import ndimage
from shapely.geometry import LinearRing
from skimage import measure

from .errors import NotSubhyperbolicError, TracingError
from .orbits import CycleInfo, postcritical_report
from .sphere import INF, MoebiusMap, RationalMap, chordal_distance, to_sphere

__all__ = [
    "UNRESOLVED",
    "Window",
    "RasterGrid",
    "FatouComponent",
    "ComponentTable",
    "PeripheralCurve",
    "rasterize",
    "label_components",
    "trace_peripheral_curves",
    "trace_all",
    "carpet_verdict",
    "default_capture_radius",
    "chordal_diameter",
]

UNRESOLVED = -1
DEFAULT_BLOWUP = 4.0
DEFAULT_MAX_ITER = 500
MIN_COMPONENT_PIXELS = 4
SMOOTH_MIN_PIXELS = 16
_STRUCT4 = ndimage.generate_binary_structure(2, 1)
_STRUCT8 = ndimage.generate_binary_structure(2, 2)


@dataclass(frozen=True)
class Window:
    """Square window in a chart: center and half-width."""

    center: complex = 0j
    half_width: float = 2.0

    @classmethod
    def parse(cls, text: str) -> "Window":
        cx, cy, hw = (float(t) for t in text.split(","))
        return cls(complex(cx, cy), hw)


# -- kernel -----------------------------------------------------------------


@njit(cache=True, inline="always")
def _horner(c, u):
    p = 0j
    dp = 0j
    for i in range(c.shape[0] - 1, -1, -1):
        dp = dp * u + p
        p = p * u + c[i]
    return p, dp


@njit(cache=True, inline="always")
def _chordal_charts(u, fu, v, fv):
    a = 1.0 + u.real * u.real + u.imag * u.imag
    b = 1.0 + v.real * v.real + v.imag * v.imag
    if fu == fv:
        return 2.0 * abs(u - v) / math.sqrt(a * b)
    return 2.0 * abs(u * v - 1.0) / math.sqrt(a * b)


@njit(parallel=True, cache=True)
def _raster_kernel(P, Q, Pr, Qr, x0, y_top, h, n, max_iter, tu, tflip, tlabel, capture, blowup, labels, iters):
    rho0 = h * 0.7071067811865476
    for r in prange(n):
        y = y_top - (r + 0.5) * h
        for col in range(n):
            z = complex(x0 + (col + 0.5) * h, y)
            a2 = z.real * z.real + z.imag * z.imag
            if a2 > 1.0:
                u = 1.0 / z
                flip = True
            else:
                u = z
                flip = False
            rho = rho0 * 2.0 / (1.0 + a2)
            lab = -1
            it = max_iter
            for k in range(max_iter):
                hit = -1
                for t in range(tu.shape[0]):
                    if _chordal_charts(u, flip, tu[t], tflip[t]) < capture:
                        hit = t
                        break
                if hit >= 0:
                    lab = tlabel[hit]
                    it = k
                    break
                if rho > blowup:
                    it = k
                    break
                if flip:
                    nn, dn = _horner(Pr, u)
                    dd, ddd = _horner(Qr, u)
                else:
                    nn, dn = _horner(P, u)
                    dd, ddd = _horner(Q, u)
                an = abs(nn)
                ad = abs(dd)
                den = an * an + ad * ad
                if den == 0.0:
                    it = k
                    break
                uu = u.real * u.real + u.imag * u.imag
                rho *= abs(dn * dd - nn * ddd) * (1.0 + uu) / den
                if an <= ad:
                    u = nn / dd
                    flip = False
                else:
                    u = dd / nn
                    flip = True
            labels[r, col] = lab
            iters[r, col] = it


def _pad(c: np.ndarray, d: int) -> np.ndarray:
    out = np.zeros(d + 1, dtype=np.complex128)
    out[: c.size] = c
    return out


def _threads():
    env = os.environ.get("CARPET_DYN_THREADS")
    if env:
        numba.set_num_threads(max(1, min(int(env), numba.config.NUMBA_NUM_THREADS)))


def default_capture_radius(cycles: list[CycleInfo]) -> float:
    """Half the least chordal distance between distinct cycles, clipped to [1e-3, 0.05]."""
    best = math.inf
    for i, a in enumerate(cycles):
        for b in cycles[i + 1 :]:
            for p in a.points:
                for q in b.points:
                    best = min(best, chordal_distance(p, q))
    return float(np.clip(0.5 * best, 1e-3, 0.05))


# -- grid ---------------------------------------------------------------------


@dataclass
class RasterGrid:
    """Classified pixels of a square window.

    ``labels[r, c]`` is the index of the attracting cycle the pixel center is
    captured by, or -1.  Row 0 is the top of the window.
    """

    f: RationalMap
    window: Window
    n: int
    labels: np.ndarray
    iters: np.ndarray
    julia: np.ndarray
    cycles: list[CycleInfo]
    capture_radius: float
    max_iter: int
    blowup: float
    chart: str = "z"

    @property
    def pixel_size(self) -> float:
        return 2.0 * self.window.half_width / self.n

    @property
    def x0(self) -> float:
        return self.window.center.real - self.window.half_width

    @property
    def y_top(self) -> float:
        return self.window.center.imag + self.window.half_width

    def pixel_center(self, rows, cols):
        rows = np.asarray(rows, dtype=float)
        cols = np.asarray(cols, dtype=float)
        h = self.pixel_size
        return (self.x0 + (cols + 0.5) * h) + 1j * (self.y_top - (rows + 0.5) * h)

    def subpixel_to_complex(self, rows, cols):
        """Continuous (row, col) image coordinates, pixel centers at integers."""
        return self.pixel_center(rows, cols)

    def pixel_of(self, z):
        """(row, col) of the pixel containing z; -1 when outside the window."""
        z = np.asarray(z, dtype=complex)
        h = self.pixel_size
        with np.errstate(invalid="ignore"):
            col = np.floor((z.real - self.x0) / h)
            row = np.floor((self.y_top - z.imag) / h)
        bad = ~np.isfinite(col) | ~np.isfinite(row) | (col < 0) | (row < 0) | (col >= self.n) | (row >= self.n)
        col = np.where(bad, -1, col).astype(int)
        row = np.where(bad, -1, row).astype(int)
        return row, col

    def to_sphere_point(self, z):
        """Chart coordinate to sphere point in the standard chart."""
        if self.chart == "z":
            return z
        z = np.asarray(z, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(z == 0, INF, 1.0 / np.where(z == 0, 1, z))
        return out

    @cached_property
    def julia_points(self) -> np.ndarray:
        """Centers of julia pixels (chart coordinates)."""
        r, c = np.nonzero(self.julia)
        return self.pixel_center(r, c)

    @property
    def julia_count(self) -> int:
        return int(self.julia.sum())

    @cached_property
    def components(self) -> "ComponentTable":
        return label_components(self)


def rasterize(
    f: RationalMap,
    window: Window | None = None,
    resolution: int = 512,
    max_iter: int = DEFAULT_MAX_ITER,
    capture_radius: float | None = None,
    cycles: list[CycleInfo] | None = None,
    blowup: float = DEFAULT_BLOWUP,
    chart: str = "z",
) -> RasterGrid:
    """Classify the pixels of ``window`` by the attracting cycle their orbit reaches."""
    window = window or Window()
    if resolution < 1:
        raise ValueError("resolution must be positive")
    if max_iter < 0:
        raise ValueError("max_iter must be >= 0")
    if cycles is None:
        report = postcritical_report(f)
        cycles = report.attracting_cycles
    if not cycles:
        raise NotSubhyperbolicError("map not subhyperbolic at tolerance: no attracting cycle found")
    if capture_radius is None:
        capture_radius = default_capture_radius(cycles)
    if capture_radius <= 0:
        raise ValueError("capture_radius must be positive")
    _threads()
    d = f.degree
    P = _pad(f.P.coeffs, d)
    Q = _pad(f.Q.coeffs, d)
    Pr = np.ascontiguousarray(P[::-1])
    Qr = np.ascontiguousarray(Q[::-1])
    tu, tflip, tlabel = [], [], []
    for lab, cyc in enumerate(cycles):
        for p in cyc.points:
            big = not np.isfinite(p) or abs(p) > 1
            tu.append(0j if not np.isfinite(p) else (1 / p if big else p))
            tflip.append(big)
            tlabel.append(lab)
    labels = np.empty((resolution, resolution), dtype=np.int32)
    iters = np.empty((resolution, resolution), dtype=np.int32)
    h = 2.0 * window.half_width / resolution
    _raster_kernel(
        P, Q, Pr, Qr,
        window.center.real - window.half_width,
        window.center.imag + window.half_width,
        h, resolution, max_iter,
        np.array(tu, dtype=np.complex128),
        np.array(tflip, dtype=np.bool_),
        np.array(tlabel, dtype=np.int64),
        float(capture_radius), float(blowup), labels, iters,
    )
    lo = ndimage.minimum_filter(labels, size=3, mode="nearest")
    hi = ndimage.maximum_filter(labels, size=3, mode="nearest")
    julia = (labels == UNRESOLVED) | (lo != hi)
    return RasterGrid(f, window, resolution, labels, iters, julia, list(cycles), float(capture_radius), max_iter, blowup, chart)


def inverted_grid(grid: RasterGrid) -> RasterGrid:
    """Raster of the conjugate w -> 1/f(1/w) over the same window in the w = 1/z chart."""
    inv = MoebiusMap(0, 1, 1, 0)
    g = grid.f.conjugate(inv)
    cycles = [CycleInfo(tuple(inv(p) for p in c.points), c.period, c.multiplier, c.kind) for c in grid.cycles]
    return rasterize(
        g, grid.window, grid.n, grid.max_iter, grid.capture_radius, cycles, grid.blowup,
        chart="w" if grid.chart == "z" else "z",
    )


# -- components -------------------------------------------------------------


@dataclass(frozen=True)
class FatouComponent:
    id: int
    pixels: int
    bbox: tuple[int, int, int, int]  # row0, col0, row1, col1 (exclusive)
    basin: int
    touches_edge: bool
    first_pixel: tuple[int, int]

    @property
    def admissible(self) -> bool:
        return self.pixels >= MIN_COMPONENT_PIXELS


@dataclass
class ComponentTable:
    ids: np.ndarray  # per-pixel component id, -1 on julia pixels
    components: list[FatouComponent]

    def __len__(self):
        return len(self.components)

    def __getitem__(self, i) -> FatouComponent:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def at(self, row: int, col: int) -> int:
        return int(self.ids[row, col])


def label_components(grid: RasterGrid) -> ComponentTable:
    """4-connected components of non-julia pixels, largest first."""
    raw, count = ndimage.label(~grid.julia, structure=_STRUCT4)
    if count == 0:
        return ComponentTable(np.full(raw.shape, -1, dtype=np.int32), [])
    flat = raw.ravel()
    sizes = np.bincount(flat, minlength=count + 1)
    _, first = np.unique(flat, return_index=True)
    uniq = np.unique(flat)
    first_idx = np.zeros(count + 1, dtype=np.int64)
    first_idx[uniq] = first
    order = sorted(range(1, count + 1), key=lambda k: (-sizes[k], first_idx[k]))
    remap = np.full(count + 1, -1, dtype=np.int32)
    for new, old in enumerate(order):
        remap[old] = new
    ids = remap[raw]
    slices = ndimage.find_objects(raw)
    n = grid.n
    comps = []
    for new, old in enumerate(order):
        sl = slices[old - 1]
        r0, r1 = sl[0].start, sl[0].stop
        c0, c1 = sl[1].start, sl[1].stop
        fr, fc = divmod(int(first_idx[old]), n)
        comps.append(
            FatouComponent(
                id=new,
                pixels=int(sizes[old]),
                bbox=(r0, c0, r1, c1),
                basin=int(grid.labels[fr, fc]),
                touches_edge=r0 == 0 or c0 == 0 or r1 == n or c1 == n,
                first_pixel=(fr, fc),
            )
        )
    return ComponentTable(ids.astype(np.int32), comps)


# -- curves -----------------------------------------------------------------


@njit(cache=True)
def _max_pairwise(x):
    best = 0.0
    m = x.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            d0 = x[i, 0] - x[j, 0]
            d1 = x[i, 1] - x[j, 1]
            d2 = x[i, 2] - x[j, 2]
            d = d0 * d0 + d1 * d1 + d2 * d2
            if d > best:
                best = d
    return math.sqrt(best)


def chordal_diameter(points) -> float:
    """Largest chordal distance between two of the given sphere points."""
    pts = np.asarray(points, dtype=complex)
    if pts.size < 2:
        return 0.0
    return float(min(2.0, _max_pairwise(to_sphere(pts))))


@dataclass
class PeripheralCurve:
    """Closed polyline on the sphere (vertices in the standard chart), component on the left."""

    vertices: np.ndarray
    component: int
    chart: str = "z"
    _diameter: float | None = field(default=None, repr=False)

    @property
    def diameter(self) -> float:
        if self._diameter is None:
            self._diameter = chordal_diameter(self.vertices)
        return self._diameter

    @cached_property
    def sphere_coords(self) -> np.ndarray:
        return to_sphere(self.vertices)

    def __len__(self):
        return len(self.vertices)

    @property
    def is_simple(self) -> bool:
        v = self._planar()
        return LinearRing(np.column_stack([v.real, v.imag])).is_simple

    def _planar(self) -> np.ndarray:
        # work in the chart where the curve was traced so it stays bounded
        if self.chart == "w":
            return 1.0 / self.vertices
        return self.vertices

    def winding_number(self, z) -> int:
        v = self._planar()
        if self.chart == "w":
            z = 1.0 / z if z != 0 else INF
        ang = np.angle(np.roll(v, -1) - z) - np.angle(v - z)
        ang = (ang + np.pi) % (2 * np.pi) - np.pi
        return int(round(ang.sum() / (2 * np.pi)))

    @property
    def centroid(self) -> complex:
        """Vertex mean on the unit sphere, projected back to the plane."""
        m = self.sphere_coords.mean(axis=0)
        nrm = np.linalg.norm(m)
        if nrm == 0:
            return 0j
        x, y, t = m / nrm
        if t >= 1 - 1e-15:
            return INF
        return complex(x, y) / (1 - t)


def _signed_area(v: np.ndarray) -> float:
    x, y = v.real, v.imag
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _despike(crop: np.ndarray) -> np.ndarray:
    """Remove one-pixel-wide fingers; keep the raw mask if that would eat the component."""
    if crop.sum() < SMOOTH_MIN_PIXELS:
        return crop
    opened = ndimage.binary_opening(crop, structure=_STRUCT4)
    lab, k = ndimage.label(opened, structure=_STRUCT4)
    if k == 0:
        return crop
    sizes = np.bincount(lab.ravel())[1:]
    keep = lab == (int(np.argmax(sizes)) + 1)
    if keep.sum() < 0.8 * crop.sum():
        return crop
    return keep


def _trace_mask(grid: RasterGrid, mask: np.ndarray, bbox) -> np.ndarray:
    r0, c0, r1, c1 = bbox
    crop = np.zeros((r1 - r0 + 2, c1 - c0 + 2), dtype=bool)
    crop[1:-1, 1:-1] = mask[r0:r1, c0:c1]
    crop = _despike(crop).astype(float)
    contours = measure.find_contours(crop, 0.5, fully_connected="low")
    if not contours:
        raise TracingError("no contour found")
    best = None
    best_area = -1.0
    for cnt in contours:
        if len(cnt) < 4 or not np.allclose(cnt[0], cnt[-1]):
            continue
        rows = cnt[:-1, 0] - 1 + r0
        cols = cnt[:-1, 1] - 1 + c0
        v = grid.pixel_center(rows, cols)
        a = abs(_signed_area(v))
        if a > best_area:
            best, best_area = v, a
    if best is None:
        raise TracingError("no closed contour found")
    # drop repeated vertices
    keep = np.abs(best - np.roll(best, 1)) > 1e-12 * grid.pixel_size
    best = best[keep]
    if _signed_area(best) < 0:
        best = best[::-1]
    return best


def trace_peripheral_curves(
    grid: RasterGrid,
    component_id: int,
    table: ComponentTable | None = None,
    wgrid: RasterGrid | None = None,
) -> PeripheralCurve:
    """Outer boundary of one component as a closed, counter-clockwise polyline.

    Components touching the window edge are traced in a raster of the
    w = 1/z chart and mapped back.
    """
    table = table or grid.components
    comp = table[component_id]
    if not comp.admissible:
        raise TracingError(f"component {component_id} has {comp.pixels} pixels, below {MIN_COMPONENT_PIXELS}")
    if not comp.touches_edge:
        v = _trace_mask(grid, table.ids == component_id, comp.bbox)
        return PeripheralCurve(grid.to_sphere_point(v), component_id, grid.chart)
    wgrid = wgrid or inverted_grid(grid)
    wtable = wgrid.components
    # find this component in the other chart through one of its pixels far from the unit circle
    rows, cols = np.nonzero(table.ids == component_id)
    z = grid.pixel_center(rows, cols)
    wz = np.where(z == 0, 0, 1.0 / np.where(z == 0, 1, z))
    wr, wc = wgrid.pixel_of(wz)
    inside = wr >= 0
    hits = wtable.ids[wr[inside], wc[inside]]
    hits = hits[hits >= 0]
    if hits.size == 0:
        raise TracingError(f"component {component_id} not found in the second chart")
    wid = int(np.bincount(hits).argmax())
    wcomp = wtable[wid]
    if wcomp.touches_edge or not wcomp.admissible:
        raise TracingError(f"component {component_id} touches the window edge in both charts")
    v = _trace_mask(wgrid, wtable.ids == wid, wcomp.bbox)
    return PeripheralCurve(1.0 / v, component_id, "w" if grid.chart == "z" else "z")


def trace_all(grid: RasterGrid, min_pixels: int = MIN_COMPONENT_PIXELS) -> list[PeripheralCurve]:
    """Curves of every admissible component (edge components through the second chart)."""
    table = grid.components
    wgrid = None
    out = []
    for comp in table:
        if comp.pixels < min_pixels:
            break
        if comp.touches_edge and wgrid is None:
            wgrid = inverted_grid(grid)
        out.append(trace_peripheral_curves(grid, comp.id, table, wgrid))
    return out


@dataclass(frozen=True)
class CarpetVerdict:
    consistent: bool
    resolution: int
    components: int
    admissible_curves: int
    pairwise_disjoint: bool
    diameter_decay: bool
    julia_connected: bool

    @property
    def label(self) -> str:
        word = "carpet-consistent" if self.consistent else "not carpet-consistent"
        return f"{word} at resolution {self.resolution}"


def carpet_verdict(grid: RasterGrid, curves: list[PeripheralCurve] | None = None, min_curves: int = 10) -> CarpetVerdict:
    """Necessary numerical evidence for a carpet; never a proof."""
    from shapely.strtree import STRtree

    if curves is None:
        curves = trace_all(grid)
    disjoint = True
    if len(curves) >= 2:
        rings = [LinearRing(np.column_stack([c.vertices.real, c.vertices.imag])) for c in curves]
        tree = STRtree(rings)
        for i, ring in enumerate(rings):
            for j in tree.query(ring):
                if j > i and ring.intersects(rings[j]):
                    disjoint = False
                    break
            if not disjoint:
                break
    diams = [c.diameter for c in curves]
    decay = len(diams) >= 2 and min(diams) < 0.1 * max(diams)
    _, nj = ndimage.label(grid.julia, structure=_STRUCT8)
    connected = nj == 1
    ok = len(curves) >= min_curves and disjoint and decay and connected
    return CarpetVerdict(ok, grid.n, len(grid.components), len(curves), disjoint, decay, connected)
