"""Critical orbits, cycles and postcritical sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegreeError, NotCycleError
from .sphere import INF, Polynomial, RationalMap, chordal_distance, is_inf, local_degree

__all__ = [
    "OrbitTail",
    "CycleInfo",
    "OrbitReport",
    "orbit_tail",
    "refine_cycle",
    "classify_cycle",
    "cycle_multiplier",
    "orbit_local_degree",
    "degree_bound_N",
    "postcritical_report",
    "attracting_cycles",
    "fixed_points",
    "repelling_fixed_point",
    "preimages",
    "julia_samples",
]

CYCLE_TOL = 1e-9
EXACT_TOL = 1e-12
DEFAULT_BUDGET = 10_000


@dataclass(frozen=True)
class OrbitTail:
    """Outcome of following one forward orbit.

    ``verdict`` is ``"finite"`` when the start point lands exactly on a cycle,
    ``"attracted"`` when it only converges to one and ``"unresolved"`` when the
    budget ran out first.  ``orbit`` holds the points visited before the cycle.
    """

    verdict: str
    preperiod: int | None
    period: int | None
    cycle: tuple[complex, ...] = ()
    orbit: tuple[complex, ...] = ()
    iterations: int = 0

    @property
    def resolved(self) -> bool:
        return self.verdict != "unresolved"


@dataclass(frozen=True)
class CycleInfo:
    points: tuple[complex, ...]
    period: int
    multiplier: float
    kind: str

    @property
    def is_attracting(self) -> bool:
        return self.kind in ("superattracting", "attracting")


def _same_point(a, b, tol) -> bool:
    return chordal_distance(a, b) < tol


def _chart(z: complex) -> bool:
    return (not math.isfinite(abs(z))) or abs(z) > 1


def _to_chart(z: complex, flip: bool) -> complex:
    if not flip:
        return z
    if is_inf(z):
        return 0j
    if z == 0:
        return INF
    return 1 / z


def _cycle_derivative(f: RationalMap, z: complex, period: int, flip: bool):
    """(f^period(z) in chart ``flip``, chart derivative of f^period at z)."""
    deriv = 1 + 0j
    cur = z
    for i in range(period):
        dst = flip if i == period - 1 else None
        deriv *= f.chart_derivative(cur, src_inf=flip if i == 0 else None, dst_inf=dst)
        cur = f(cur)
    return cur, deriv


def refine_cycle(f: RationalMap, z: complex, period: int, steps: int = 60) -> complex:
    """Newton on f^period(z) - z in the chart where |z| <= 1."""
    flip = _chart(z)
    u = _to_chart(z, flip)
    best = z
    for _ in range(steps):
        cur = _to_chart(u, flip)
        img, d = _cycle_derivative(f, cur, period, flip)
        g = _to_chart(img, flip) - u
        if not np.isfinite(g):
            break
        denom = d - 1
        if denom == 0 or not np.isfinite(denom):
            break
        step = g / denom
        u = u - step
        best = _to_chart(u, flip)
        if abs(step) <= 1e-16 * max(1.0, abs(u)):
            break
    return complex(best)


def orbit_tail(
    f: RationalMap,
    z,
    max_iter: int = DEFAULT_BUDGET,
    tol: float = CYCLE_TOL,
) -> OrbitTail:
    """Follow z under f until a point is revisited within chordal ``tol``."""
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    z = complex(z)
    hist = np.empty(max_iter + 1, dtype=complex)
    hist[0] = z
    for j in range(1, max_iter + 1):
        z = f(z)
        d = chordal_distance(hist[:j], np.full(j, z))
        hits = np.flatnonzero(d < tol)
        hist[j] = z
        if hits.size == 0:
            continue
        i = int(hits[-1])
        period = j - i
        entry = complex(hist[i])
        refined = refine_cycle(f, entry, period)
        cycle = [refined]
        for _ in range(period - 1):
            cycle.append(f(cycle[-1]))
        closes = _same_point(f(cycle[-1]), cycle[0], EXACT_TOL)
        on_cycle = min(chordal_distance(entry, c) for c in cycle) < EXACT_TOL
        if closes and on_cycle:
            # the refined cycle, rotated to start where the orbit enters it
            k0 = min(range(period), key=lambda t: chordal_distance(entry, cycle[t]))
            cyc = tuple(cycle[k0:] + cycle[:k0])
            return OrbitTail("finite", i, period, cyc, tuple(complex(h) for h in hist[:i]), j)
        return OrbitTail("attracted", None, period, tuple(cycle), tuple(complex(h) for h in hist[:i]), j)
    return OrbitTail("unresolved", None, None, (), (), max_iter)


def cycle_multiplier(f: RationalMap, cycle) -> complex:
    """Chart-independent multiplier of a cycle (product of chart derivatives)."""
    pts = [complex(p) for p in cycle]
    flip = _chart(pts[0])
    _, d = _cycle_derivative(f, pts[0], len(pts), flip)
    return complex(d)


def classify_cycle(f: RationalMap, cycle) -> CycleInfo:
    pts = tuple(complex(p) for p in cycle)
    if not pts:
        raise NotCycleError("empty cycle")
    for a, b in zip(pts, pts[1:] + pts[:1]):
        if chordal_distance(f(a), b) >= 1e-6:
            raise NotCycleError(f"f({a}) is not close to {b}")
    mag = abs(cycle_multiplier(f, pts))
    if mag < 1e-9:
        kind = "superattracting"
    elif mag < 1 - 1e-9:
        kind = "attracting"
    elif mag > 1 + 1e-9:
        kind = "repelling"
    else:
        kind = "indifferent"
    return CycleInfo(pts, len(pts), float(mag), kind)


def orbit_local_degree(f: RationalMap, q, n: int) -> int:
    """Local degree of f^n at q: product of local degrees along the orbit."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = 1
    z = complex(q)
    for _ in range(n):
        k *= local_degree(f, z)
        z = f(z)
    return k


def degree_bound_N(f: RationalMap) -> int:
    return math.prod(k for _, k in f.critical_points)


def _dedup(points, tol=1e-8) -> list[complex]:
    out: list[complex] = []
    for p in points:
        if all(chordal_distance(p, q) >= tol for q in out):
            out.append(complex(p))
    return out


@dataclass
class OrbitReport:
    critical_points: list[tuple[complex, int]]
    tails: list[OrbitTail]
    postcritical: list[complex] | None
    postcritical_periodic: list[complex]
    cycles: list[CycleInfo]
    is_pcf: bool
    is_subhyperbolic: bool
    is_hyperbolic: bool
    degree_bound: int
    unresolved: list[complex] = field(default_factory=list)
    boundary_ambiguous: list[complex] = field(default_factory=list)
    cycle_tol: float = CYCLE_TOL
    budget: int = DEFAULT_BUDGET

    @property
    def attracting_cycles(self) -> list[CycleInfo]:
        return [c for c in self.cycles if c.is_attracting]

    def to_json(self) -> dict:
        def pt(z):
            z = complex(z)
            return "inf" if is_inf(z) else [z.real, z.imag]

        return {
            "critical_points": [{"point": pt(c), "local_degree": k} for c, k in self.critical_points],
            "tails": [
                {
                    "critical_point": pt(c),
                    "verdict": t.verdict,
                    "preperiod": t.preperiod,
                    "period": t.period,
                }
                for (c, _), t in zip(self.critical_points, self.tails)
            ],
            "postcritical": None if self.postcritical is None else [pt(p) for p in self.postcritical],
            "postcritical_status": "finite" if self.postcritical is not None else "not finite within budget",
            "postcritical_periodic": [pt(p) for p in self.postcritical_periodic],
            "cycles": [
                {"points": [pt(p) for p in c.points], "period": c.period, "multiplier": c.multiplier, "class": c.kind}
                for c in self.cycles
            ],
            "is_pcf": self.is_pcf,
            "is_subhyperbolic": self.is_subhyperbolic,
            "is_hyperbolic": self.is_hyperbolic,
            "degree_bound_N": self.degree_bound,
            "unresolved_critical_points": [pt(p) for p in self.unresolved],
            "boundary_ambiguous": [pt(p) for p in self.boundary_ambiguous],
            "cycle_tol": self.cycle_tol,
            "budget": self.budget,
        }


def postcritical_report(f: RationalMap, budget: int = DEFAULT_BUDGET, tol: float = CYCLE_TOL) -> OrbitReport:
    if f.degree < 2:
        raise DegreeError("postcritical analysis needs degree >= 2")
    crit = list(f.critical_points)
    tails = [orbit_tail(f, c, budget, tol) for c, _ in crit]

    post: list[complex] = []
    post_c: list[complex] = []
    cycles: list[CycleInfo] = []
    unresolved, ambiguous = [], []
    pcf = subhyp = hyp = True
    for (c, _), tail in zip(crit, tails):
        if tail.verdict == "unresolved":
            unresolved.append(c)
            pcf = subhyp = hyp = False
            continue
        info = classify_cycle(f, tail.cycle)
        if not any(_same_cycle(info, other) for other in cycles):
            cycles.append(info)
        if tail.verdict == "attracted":
            pcf = False
            if not info.is_attracting:
                subhyp = hyp = False
                ambiguous.append(c)
            continue
        # finite orbit: the forward orbit from step 1 lies in post(f)
        post.extend(tail.orbit[1:])
        post.extend(tail.cycle)
        if tail.preperiod == 0:
            post_c.extend(tail.cycle)
        if info.kind == "indifferent":
            ambiguous.append(c)
            hyp = False
        elif not info.is_attracting:
            # finite orbit landing on a repelling cycle: c lies on the Julia set
            hyp = False
    post = _dedup(post)
    post_c = _dedup(post_c)
    return OrbitReport(
        critical_points=crit,
        tails=tails,
        postcritical=post if pcf else None,
        postcritical_periodic=post_c,
        cycles=cycles,
        is_pcf=pcf,
        is_subhyperbolic=subhyp,
        is_hyperbolic=hyp and subhyp,
        degree_bound=degree_bound_N(f),
        unresolved=unresolved,
        boundary_ambiguous=ambiguous,
        cycle_tol=tol,
        budget=budget,
    )


def _same_cycle(a: CycleInfo, b: CycleInfo, tol: float = 1e-8) -> bool:
    if a.period != b.period:
        return False
    return any(chordal_distance(a.points[0], p) < tol for p in b.points)


def attracting_cycles(f: RationalMap, budget: int = DEFAULT_BUDGET) -> list[CycleInfo]:
    """Attracting and superattracting cycles reached by critical orbits."""
    return postcritical_report(f, budget).attracting_cycles


def fixed_points(f: RationalMap) -> list[tuple[complex, complex]]:
    """Fixed points with their multipliers (chart derivative)."""
    eq = f.P - f.Q * Polynomial([0, 1])
    pts = [z for z, _ in eq.roots(tol=1e-10)]
    if eq.degree < f.degree + 1:
        pts.append(INF)
    return [(z, cycle_multiplier(f, [z])) for z in pts]


def repelling_fixed_point(f: RationalMap) -> complex:
    """The repelling fixed point of largest multiplier modulus."""
    rep = [(abs(m), z) for z, m in fixed_points(f) if abs(m) > 1 + 1e-9]
    if not rep:
        raise NotCycleError("no repelling fixed point")
    return max(rep, key=lambda t: t[0])[1]


def preimages(f: RationalMap, w: np.ndarray) -> np.ndarray:
    """All d preimages of each finite w, shape (len(w), d), from batched companion matrices."""
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    d = f.degree
    P = np.zeros(d + 1, dtype=complex)
    Q = np.zeros(d + 1, dtype=complex)
    P[: f.P.coeffs.size] = f.P.coeffs
    Q[: f.Q.coeffs.size] = f.Q.coeffs
    c = P[None, :] - w[:, None] * Q[None, :]
    lead = c[:, -1]
    comp = np.zeros((w.size, d, d), dtype=complex)
    comp[:, 1:, :-1] = np.eye(d - 1)
    comp[:, :, -1] = -c[:, :-1] / lead[:, None]
    return np.linalg.eigvals(comp)


def julia_samples(f: RationalMap, count: int = 20_000, seed: int = 0, chains: int = 256, burn_in: int = 30) -> np.ndarray:
    """Points on the Julia set by random backward iteration from a repelling fixed point.

    Inverse branches contract near J, so the samples sit on J to rounding
    error rather than to pixel accuracy.
    """
    rng = np.random.default_rng(seed)
    z = np.full(chains, repelling_fixed_point(f), dtype=complex)
    out = []
    steps = burn_in + -(-count // chains)
    for s in range(steps):
        pre = preimages(f, z)
        pick = rng.integers(0, f.degree, chains)
        z = pre[np.arange(chains), pick]
        if s >= burn_in:
            out.append(z.copy())
    return np.concatenate(out)[:count]
