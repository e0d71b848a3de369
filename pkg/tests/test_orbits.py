import time

import numpy as np
import pytest
import sympy as sp

from carpet_dyn.errors import DegreeError, NotCycleError
from carpet_dyn.orbits import (
    classify_cycle,
    degree_bound_N,
    fixed_points,
    julia_samples,
    orbit_local_degree,
    orbit_tail,
    postcritical_report,
    preimages,
    repelling_fixed_point,
)
from carpet_dyn.sphere import INF, RationalMap, chordal_distance, is_inf
from tests.oracles import postcritical as exact


def _as_complex(w):
    return INF if w is sp.zoo else complex(w)


def _same_set(a, b, tol=1e-9):
    a, b = list(a), list(b)
    return len(a) == len(b) and all(min(chordal_distance(x, y) for y in b) < tol for x in a)


def test_postcritical_set_matches_exact_orbits(f):
    rep = postcritical_report(f)
    oracle = [_as_complex(w) for w in exact.postcritical_set()]
    assert _same_set(rep.postcritical, oracle)
    assert _same_set(rep.postcritical, [0.5j, -0.5j, 0, INF])


def test_critical_points_match_exact(f):
    rep = postcritical_report(f)
    oracle = [_as_complex(c) for c in exact.critical_points()]
    assert _same_set([c for c, _ in rep.critical_points], oracle)


def test_orbit_of_half_i(f):
    tail = orbit_tail(f, 0.5j)
    assert tail.verdict == "finite"
    assert (tail.preperiod, tail.period) == (2, 1)
    assert chordal_distance(tail.orbit[1], 0) < 1e-12
    assert is_inf(tail.cycle[0])
    oracle = [_as_complex(w) for w in exact.orbit(sp.I / 2, 3)]
    assert _same_set(list(tail.orbit) + [tail.cycle[0]], oracle[:3])


def test_verdicts_for_example(f):
    rep = postcritical_report(f)
    assert rep.is_pcf and rep.is_hyperbolic and rep.is_subhyperbolic
    assert _same_set(rep.postcritical_periodic, [INF])
    assert rep.degree_bound == 64 == degree_bound_N(f)
    assert not rep.unresolved and not rep.boundary_ambiguous


def test_example_report_is_fast(f):
    t = time.perf_counter()
    postcritical_report(f)
    assert time.perf_counter() - t < 1.0


def test_basilica_like_z2_minus_1():
    g = RationalMap([-1, 0, 1], [1])
    rep = postcritical_report(g)
    assert _same_set(rep.postcritical, [0, -1, INF])
    assert rep.is_pcf and rep.is_hyperbolic


def test_z2_plus_small_constant_is_not_pcf():
    g = RationalMap([0.1, 0, 1], [1])
    rep = postcritical_report(g)
    assert not rep.is_pcf
    assert rep.postcritical is None
    assert rep.to_json()["postcritical_status"] == "not finite within budget"
    assert rep.is_hyperbolic
    assert orbit_tail(g, 0).verdict == "attracted"


def test_critical_point_on_repelling_cycle_is_not_hyperbolic():
    # z^2 - 2: 0 -> -2 -> 2 -> 2, and 2 is a repelling fixed point
    g = RationalMap([-2, 0, 1], [1])
    rep = postcritical_report(g)
    assert rep.is_pcf and rep.is_subhyperbolic
    assert not rep.is_hyperbolic


def test_degree_one_rejected():
    with pytest.raises(DegreeError):
        postcritical_report(RationalMap([0, 2], [1]))


def test_classify_cycle(z2):
    info = classify_cycle(z2, [1.0])
    assert info.kind == "repelling"
    assert info.multiplier == pytest.approx(2.0)
    assert classify_cycle(z2, [0.0]).kind == "superattracting"
    with pytest.raises(NotCycleError):
        classify_cycle(z2, [0.5])


def test_orbit_local_degree(f):
    assert orbit_local_degree(f, 0.5j, 3) == 4
    assert orbit_local_degree(f, 0, 2) == 4
    assert orbit_local_degree(f, 0.3 + 0.2j, 5) == 1


def test_fixed_points_count_and_multipliers(f):
    fps = fixed_points(f)
    assert len(fps) == f.degree + 1
    for z, lam in fps:
        assert chordal_distance(f(z), z) < 1e-10
    p = repelling_fixed_point(f)
    assert abs(dict((complex(z) if not is_inf(z) else "inf", m) for z, m in fps)[complex(p)]) > 1


def test_preimages(f):
    w = np.array([0.3 + 0.1j, -1.2])
    pre = preimages(f, w)
    assert pre.shape == (2, 4)
    assert np.allclose(f(pre), w[:, None])


def test_julia_samples_lie_near_the_raster_julia_set(f, grid512):
    s = julia_samples(f, 2000, seed=3)
    r, c = grid512.pixel_of(s)
    assert np.all(r >= 0)
    from scipy import ndimage

    near = ndimage.binary_dilation(grid512.julia, iterations=2)
    assert near[r, c].mean() > 0.99
