import cmath
import math

import numpy as np
import pytest

from carpet_dyn.errors import DegreeError, NotCoprimeError
from carpet_dyn.roots import polynomial_roots
from carpet_dyn.sphere import (
    INF,
    MoebiusMap,
    Polynomial,
    RationalMap,
    chordal_distance,
    is_inf,
    local_degree,
    power_map,
    to_sphere,
)


def test_chordal_distance_values():
    assert chordal_distance(1, -1) == pytest.approx(2.0)
    assert chordal_distance(0, INF) == pytest.approx(2.0)
    assert chordal_distance(INF, INF) == 0.0
    assert chordal_distance(1j, 1j) == 0.0
    # antipodal points z and -1/conj(z)
    z = 0.3 + 0.4j
    assert chordal_distance(z, -1 / np.conj(z)) == pytest.approx(2.0)


def test_chordal_matches_sphere_lift(rng):
    z = rng.normal(size=200) + 1j * rng.normal(size=200)
    w = (rng.normal(size=200) + 1j * rng.normal(size=200)) * 10 ** rng.uniform(-3, 3, 200)
    lift = np.linalg.norm(to_sphere(z) - to_sphere(w), axis=1)
    assert np.allclose(chordal_distance(z, w), lift, atol=1e-14)


def test_chordal_large_arguments_are_accurate():
    # both points near infinity: 1/z is an isometry, so this equals sigma(1e-12, 2e-12)
    assert chordal_distance(1e12, 5e11) == pytest.approx(2e-12, rel=1e-9)


def test_example_map_values(f):
    assert f(0.5j) == pytest.approx(0)
    assert is_inf(f(0))
    assert is_inf(f(INF))
    assert f.degree == 4


def test_critical_points_of_example(f):
    crit = f.critical_points
    assert len(crit) == 6
    assert sum(k - 1 for _, k in crit) == 2 * f.degree - 2
    quartic = [c for c, _ in crit if not is_inf(c) and abs(c) > 0.1]
    for c in quartic:
        assert abs(16 * c**4 + 1) < 1e-12
    assert any(is_inf(c) for c, _ in crit)
    assert any(abs(c) < 1e-15 for c, _ in crit if not is_inf(c))


def test_local_degree(f):
    assert local_degree(f, 1.0) == 1
    assert local_degree(f, INF) == 2
    assert f.local_degree(0) == 2
    assert local_degree(RationalMap([0, 2], [1]), 0) == 1


def test_degree_errors():
    with pytest.raises(DegreeError):
        RationalMap([0, 1], [1]).critical_points
    with pytest.raises(DegreeError):
        RationalMap([3], [1])


def test_common_factor_rejected():
    # (z - 1)(z + 2) / (z - 1)
    with pytest.raises(NotCoprimeError):
        RationalMap([-2, 1, 1], [-1, 1])


def test_two_chart_evaluation_near_infinity(f):
    z = np.array([1e8, -3e9j, INF])
    out = f(z)
    assert np.all(np.abs(out[:2]) > 1e15)
    assert is_inf(out[2])


def test_spherical_derivative_of_rotation_is_one():
    # z -> 1/z is a sphere isometry
    g = RationalMap([1], [0, 1])
    z = np.array([0.3, 2 + 1j, -5j])
    assert np.allclose(g.spherical_derivative(z), 1.0)


def test_polynomial_roots_against_numpy(rng):
    c = rng.normal(size=9) + 1j * rng.normal(size=9)
    ours = np.sort_complex(np.array([r for r, m in polynomial_roots(c) for _ in range(m)]))
    ref = np.sort_complex(np.roots(c[::-1]))
    assert np.allclose(ours, ref, atol=1e-10)


def test_polynomial_roots_multiplicity():
    # (z - 1)^2 (z + 2) z
    c = Polynomial([1, -1]) * Polynomial([-1, 1]) * Polynomial([2, 1]) * Polynomial([0, 1])
    roots = polynomial_roots(c.coeffs)
    mult = {round(r.real): m for r, m in roots}
    assert mult == {1: 2, -2: 1, 0: 1}


def test_compose_and_iterate(f):
    f2 = f.iterate(2)
    assert f2.degree == 16
    z = np.array([0.3 + 0.2j, 1.1, -0.7j])
    assert np.allclose(f2(z), f(f(z)))


def test_conjugation_by_scaling(f):
    m = MoebiusMap(1, 0, 0, 2.0)
    g = f.conjugate(m)
    z = np.array([0.1 + 0.3j, 0.4, -0.2j])
    assert np.allclose(g(m(z)), m(f(z)))


def test_conjugation_by_reflection(f):
    m = MoebiusMap(1, 0, 0, 1, conjugate=True)
    g = f.conjugate(m)
    z = np.array([0.1 + 0.3j, 0.4 - 1j])
    assert np.allclose(g(m(z)), m(f(z)))


def test_moebius_composition_and_inverse():
    a = MoebiusMap(1j, 2, 0.5, 1)
    b = MoebiusMap(1, 0, 0, 1, conjugate=True)
    z = np.array([0.2 + 0.1j, -3j, 5.0])
    assert np.allclose((a @ b)(z), a(b(z)))
    assert np.allclose((b @ a)(z), b(a(z)))
    assert (a @ a.inverse()).is_identity()
    assert (b @ b).is_identity()


def test_moebius_from_three_points():
    src = (0, 1, INF)
    dst = (1j, 2, -1)
    m = MoebiusMap.from_three_points(src, dst)
    assert m(0) == pytest.approx(1j)
    assert m(1) == pytest.approx(2)
    assert m(INF) == pytest.approx(-1)
    mc = MoebiusMap.from_three_points((1j, 1, 2), (3, 1j, -1), conjugate=True)
    assert [mc(1j), mc(1), mc(2)] == pytest.approx([3, 1j, -1])
    # the anti-Moebius map fixing three real points is the reflection in the real line
    refl = MoebiusMap.from_three_points((0, 1, INF), (0, 1, INF), conjugate=True)
    assert refl.distance(MoebiusMap(1, 0, 0, 1, conjugate=True)) < 1e-14


def test_moebius_distance_mod_sign_and_scale():
    a = MoebiusMap(1j, 0, 0, 1)
    b = MoebiusMap(-3j, 0, 0, -3)
    assert a.distance(b) < 1e-14
    assert math.isinf(a.distance(MoebiusMap(1, 0, 0, 1, conjugate=True)))


def test_singular_moebius_rejected():
    with pytest.raises(ValueError):
        MoebiusMap(1, 2, 2, 4)


def test_json_round_trip(f):
    g = RationalMap.from_json(f.to_json())
    assert np.array_equal(g.P.coeffs, f.P.coeffs) and np.array_equal(g.Q.coeffs, f.Q.coeffs)


def test_power_map_critical_points():
    crit = dict((("inf" if is_inf(c) else complex(c)), k) for c, k in power_map(3).critical_points)
    assert crit == {0j: 3, "inf": 3}
    assert cmath.isclose(power_map(3)(2), 8)
