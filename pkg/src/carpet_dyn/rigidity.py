"""Möbius symmetries of Julia sets and the dynamical functional equation."""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import GeometryError, PreconditionError
from .raster import PeripheralCurve, RasterGrid
from .sphere import MoebiusMap, RationalMap, chordal_distance

__all__ = [
    "candidate_symmetries",
    "centroid_landmarks",
    "basepoint_landmarks",
    "verify_invariance",
    "JuliaCloud",
    "InvarianceScore",
    "SymmetryGroup",
    "group_closure",
    "FunctionalRelation",
    "functional_equation_search",
    "reduced_form",
]

MATRIX_TOL = 1e-8
DEFAULT_BUDGET = 256
DEFAULT_TOL_PX = 2.0


# -- candidates -----------------------------------------------------------------------


def centroid_landmarks(curves: list[PeripheralCurve], count: int) -> list[complex]:
    """Centroids of the ``count`` largest curves (by chordal diameter)."""
    big = sorted(curves, key=lambda c: -c.diameter)[:count]
    return [c.centroid for c in big]


def basepoint_landmarks(records, curves: list[PeripheralCurve], count: int) -> list[complex]:
    """Basepoints of the components bounded by the ``count`` largest curves.

    Symmetries commuting with the dynamics permute basepoints exactly, so
    these landmarks carry no rasterization error.
    """
    out = []
    seen = set()
    for c in sorted(curves, key=lambda c: -c.diameter):
        if c.component in seen or c.component not in records.records:
            continue
        seen.add(c.component)
        out.append(records[c.component].basepoint)
        if len(out) == count:
            break
    return out


def _distinct(pts, tol=1e-9) -> bool:
    return all(chordal_distance(a, b) > tol for a, b in itertools.combinations(pts, 2))


def candidate_symmetries(curves=None, landmark_count: int = 6, landmarks=None) -> list[MoebiusMap]:
    """Möbius maps (both orientations) sending the first landmark triple to any ordered landmark triple."""
    if landmarks is None:
        if curves is None or len(curves) < 3:
            raise GeometryError("need at least three curves")
        landmarks = centroid_landmarks(curves, landmark_count)
    landmarks = list(landmarks)
    if len(landmarks) < 3:
        raise GeometryError("need at least three landmarks")
    src = None
    for tri in itertools.combinations(landmarks, 3):
        if _distinct(tri):
            src = tri
            break
    if src is None:
        raise GeometryError("landmarks do not contain three distinct points")
    out: list[MoebiusMap] = []
    for dst in itertools.permutations(landmarks, 3):
        if not _distinct(dst):
            continue
        for conj in (False, True):
            try:
                m = MoebiusMap.from_three_points(src, dst, conjugate=conj).normalized()
            except (ValueError, np.linalg.LinAlgError):
                continue
            if all(m.distance(o) > MATRIX_TOL for o in out):
                out.append(m)
    return out


# -- invariance ----------------------------------------------------------------------------


@dataclass
class InvarianceScore:
    score: float  # normalized symmetric Hausdorff distance, in pixels
    accepted: bool
    tolerance_px: float

    @property
    def borderline(self) -> bool:
        return 0.5 * self.tolerance_px <= self.score <= 2 * self.tolerance_px


class JuliaCloud:
    """Julia samples with a nearest-neighbor index, in the raster chart."""

    def __init__(self, points, pixel_size: float):
        pts = np.asarray(points, dtype=complex).ravel()
        if pts.size == 0:
            raise PreconditionError("empty sample cloud")
        self.points = pts
        self.pixel_size = float(pixel_size)
        self.tree = cKDTree(np.column_stack([pts.real, pts.imag]))

    @classmethod
    def from_grid(cls, grid: RasterGrid) -> "JuliaCloud":
        if grid.chart != "z":
            raise PreconditionError("sample clouds live in the z chart")
        return cls(grid.julia_points, grid.pixel_size)

    def directed(self, xi: MoebiusMap, subset: np.ndarray | None = None) -> float:
        """max over samples s of dist(xi(s), samples) / max(1, |xi'(s)|), in pixels."""
        pts = self.points if subset is None else self.points[subset]
        img = xi(pts)
        bad = ~np.isfinite(img)
        if bad.any():
            return math.inf
        d, _ = self.tree.query(np.column_stack([img.real, img.imag]))
        scale = np.maximum(1.0, xi.derivative_modulus(pts))
        return float((d / scale).max() / self.pixel_size)


def verify_invariance(xi: MoebiusMap, cloud, tol_pixels: float = DEFAULT_TOL_PX, pixel_size: float | None = None) -> InvarianceScore:
    """Symmetric Hausdorff test of xi(J) = J on a julia sample cloud.

    Each direction measures how far xi (or its inverse) moves samples off the
    cloud, discounted by the local expansion of the map, which magnifies the
    pixel quantization of the samples themselves.
    """
    if not isinstance(cloud, JuliaCloud):
        if isinstance(cloud, RasterGrid):
            cloud = JuliaCloud.from_grid(cloud)
        else:
            if pixel_size is None:
                raise PreconditionError("pixel_size is required for raw samples")
            cloud = JuliaCloud(cloud, pixel_size)
    inv = xi.inverse()
    # a subset bounds the score from below, so it can only reject early
    sub = np.arange(0, cloud.points.size, max(1, cloud.points.size // 512))
    quick = max(cloud.directed(xi, sub), cloud.directed(inv, sub))
    if quick > tol_pixels:
        return InvarianceScore(quick, False, tol_pixels)
    score = max(cloud.directed(xi), cloud.directed(inv))
    return InvarianceScore(score, score <= tol_pixels, tol_pixels)


# -- group closure ---------------------------------------------------------------------------


@dataclass
class SymmetryGroup:
    elements: list[MoebiusMap]
    scores: list[float]
    table: np.ndarray | None
    order: int | None
    delta0: float | None
    closed: bool
    verdict: str
    rejected_products: int = 0
    caveat: str = (
        "candidates come from landmark triples of the largest peripheral circles; "
        "elements moving only small circles among themselves may be missed"
    )
    generators: list[MoebiusMap] = field(default_factory=list)

    def find(self, m: MoebiusMap, tol: float = MATRIX_TOL) -> int:
        for i, e in enumerate(self.elements):
            if e.distance(m) < tol:
                return i
        return -1

    def closest(self, m: MoebiusMap) -> tuple[int, float]:
        d = [e.distance(m) for e in self.elements]
        i = int(np.argmin(d))
        return i, float(d[i])

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "closed": self.closed,
            "order": self.order,
            "delta0": self.delta0,
            "elements": [dict(e.normalized().to_json(), score_px=s) for e, s in zip(self.elements, self.scores)],
            "multiplication_table": self.table.tolist() if self.table is not None else None,
            "rejected_products": self.rejected_products,
            "completeness_caveat": self.caveat,
        }


def group_closure(
    accepted: list[MoebiusMap],
    cloud,
    budget: int = DEFAULT_BUDGET,
    tol_pixels: float = DEFAULT_TOL_PX,
    pixel_size: float | None = None,
) -> SymmetryGroup:
    """Close ``accepted`` under composition and inverses, re-verifying every new element."""
    if not accepted:
        raise PreconditionError("no accepted maps")
    if not isinstance(cloud, JuliaCloud):
        cloud = JuliaCloud.from_grid(cloud) if isinstance(cloud, RasterGrid) else JuliaCloud(cloud, pixel_size)
    elems: list[MoebiusMap] = []
    scores: list[float] = []
    mats = np.zeros((budget + 1, 2, 2), dtype=complex)
    conj = np.zeros(budget + 1, dtype=bool)
    rejected = 0

    def index(m):
        n = len(elems)
        if n == 0:
            return -1
        a = m.matrix / np.sqrt(m.det)
        d = np.minimum(np.linalg.norm(mats[:n] - a, axis=(1, 2)), np.linalg.norm(mats[:n] + a, axis=(1, 2)))
        d[conj[:n] != m.conjugate] = np.inf
        i = int(np.argmin(d))
        return i if d[i] < MATRIX_TOL else -1

    def add(m, score):
        mats[len(elems)] = m.matrix / np.sqrt(m.det)
        conj[len(elems)] = m.conjugate
        elems.append(m)
        scores.append(score)

    add(MoebiusMap.identity(), 0.0)

    gens = []
    for g in accepted:
        g = g.normalized()
        if index(g) < 0:
            if len(elems) >= budget:
                return SymmetryGroup(elems, scores, None, None, None, False, "closure not reached", rejected, generators=gens)
            s = verify_invariance(g, cloud, tol_pixels)
            if not s.accepted:
                rejected += 1
                continue
            add(g, s.score)
        gens.append(g)
    queue = deque(range(len(elems)))
    closed = True
    while queue:
        i = queue.popleft()
        for j in range(len(elems)):
            for m in (elems[i].compose(elems[j]), elems[j].compose(elems[i]), elems[i].inverse()):
                m = m.normalized()
                if index(m) >= 0:
                    continue
                s = verify_invariance(m, cloud, tol_pixels)
                if not s.accepted:
                    rejected += 1
                    continue
                if len(elems) >= budget:
                    closed = False
                    break
                add(m, s.score)
                queue.append(len(elems) - 1)
            if not closed:
                break
        if not closed:
            break
    if not closed:
        return SymmetryGroup(elems, scores, None, None, None, False, "closure not reached", rejected, generators=gens)
    n = len(elems)
    table = np.full((n, n), -1, dtype=int)
    for i in range(n):
        for j in range(n):
            table[i, j] = index(elems[i].compose(elems[j]).normalized())
    complete = bool((table >= 0).all())
    delta0 = None
    if n > 1:
        delta0 = min(float(np.max(chordal_distance(e(cloud.points), cloud.points))) for e in elems[1:])
    verdict = "finite group" if complete else "closure inconsistent"
    return SymmetryGroup(elems, scores, table, n, delta0, complete, verdict, rejected, generators=gens)


# -- functional equation -------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionalRelation:
    m_prime: int
    m: int
    n: int
    residual: float
    degree_identity: bool

    @property
    def exponents(self) -> tuple[int, int, int]:
        return (self.m_prime, self.m, self.n)

    def to_json(self) -> dict:
        return {
            "m_prime": self.m_prime,
            "m": self.m,
            "n": self.n,
            "residual": self.residual,
            "degree_identity": self.degree_identity,
        }


def _iterates(h: RationalMap, z: np.ndarray, count: int) -> list[np.ndarray]:
    out = [z]
    for _ in range(count):
        out.append(h(out[-1]))
    return out


def functional_equation_search(
    f: RationalMap,
    g: RationalMap,
    xi: MoebiusMap,
    samples,
    max_exp: int = 4,
    pixel_size: float = 1e-3,
    tol_pixels: float = DEFAULT_TOL_PX,
    g_cloud=None,
) -> list[FunctionalRelation]:
    """Relations g^m' o xi = g^m o xi o f^n on J(f) with deg(g)^(m'-m) = deg(f)^n.

    ``samples`` are points of J(f).  ``g_cloud`` (a JuliaCloud or raster of
    J(g); default: the samples themselves) serves the pre-check that xi
    carries J(f) onto J(g).
    """
    if max_exp > 6:
        raise PreconditionError("max_exp is capped at 6")
    z = np.asarray(samples, dtype=complex).ravel()
    if g_cloud is None:
        target = JuliaCloud(z, pixel_size)
    elif isinstance(g_cloud, RasterGrid):
        target = JuliaCloud.from_grid(g_cloud)
    else:
        target = g_cloud
    pixel_size = target.pixel_size
    img = xi(z)
    if not np.all(np.isfinite(img)):
        raise PreconditionError("xi does not map the samples onto J(g)")
    d, _ = target.tree.query(np.column_stack([img.real, img.imag]))
    if float((d / np.maximum(1.0, xi.derivative_modulus(z))).max()) > tol_pixels * pixel_size:
        raise PreconditionError("xi does not map the samples onto J(g)")
    tol = tol_pixels * pixel_size
    left = _iterates(g, img, max_exp)
    f_it = _iterates(f, z, max_exp)
    out = []
    for mp in range(2, max_exp + 1):
        for m in range(1, mp):
            for n in range(1, max_exp + 1):
                if g.degree ** (mp - m) != f.degree**n:
                    continue
                right = _iterates(g, xi(f_it[n]), m)[m]
                res = float(np.max(chordal_distance(left[mp], right)))
                if res <= tol:
                    out.append(FunctionalRelation(mp, m, n, res, True))
    return out


def reduced_form(relations: list[FunctionalRelation]) -> int | None:
    """Least l with g^(l+1) o xi = g^l o xi o f among the relations, if any."""
    ls = [r.m for r in relations if r.n == 1 and r.m_prime == r.m + 1]
    return min(ls) if ls else None


