import math

import numpy as np
import pytest

from carpet_dyn.errors import GeometryError, PreconditionError
from carpet_dyn.rigidity import (
    FunctionalRelation,
    JuliaCloud,
    basepoint_landmarks,
    candidate_symmetries,
    centroid_landmarks,
    functional_equation_search,
    group_closure,
    reduced_form,
    verify_invariance,
)
from carpet_dyn.sphere import MoebiusMap, chordal_distance
from tests.oracles import group_closure as exact_group

XI_IZ = MoebiusMap(1j, 0, 0, 1)
XI_BAR = MoebiusMap(1, 0, 0, 1, conjugate=True)
XI_INV = MoebiusMap(0, 1, 4, 0)
TRANSLATE = MoebiusMap(1, 0.3, 0, 1)


@pytest.fixture(scope="module")
def cloud512(grid512):
    return JuliaCloud.from_grid(grid512)


@pytest.fixture(scope="module")
def cloud1024(grid1024):
    return JuliaCloud.from_grid(grid1024)


@pytest.fixture(scope="module")
def candidates(records512, curves512):
    return candidate_symmetries(curves512, 6, landmarks=basepoint_landmarks(records512, curves512, 6))


@pytest.fixture(scope="module")
def scores512(candidates, cloud512):
    return [verify_invariance(m, cloud512) for m in candidates]


@pytest.fixture(scope="module")
def group(candidates, scores512, cloud512):
    accepted = [m for m, s in zip(candidates, scores512) if s.accepted]
    return group_closure(accepted, cloud512)


@pytest.fixture(scope="module")
def julia_samples(grid512):
    pts = grid512.julia_points
    return pts[np.random.default_rng(1).choice(pts.size, 1000, replace=False)]


# -- candidates ------------------------------------------------------------------


def test_three_generic_landmarks_give_twelve():
    c = candidate_symmetries(landmarks=[0.1 + 0.2j, -0.7 + 0.1j, 0.3 - 0.9j])
    assert len(c) == 2 * math.factorial(3)


def test_repeated_landmark_is_skipped():
    base = [0.1 + 0.2j, -0.7 + 0.1j, 0.3 - 0.9j]
    assert len(candidate_symmetries(landmarks=base + [base[0]])) == 12


def test_too_few_curves():
    with pytest.raises(GeometryError):
        candidate_symmetries([], 6)
    with pytest.raises(GeometryError):
        candidate_symmetries(landmarks=[0, 1])


def test_candidates_contain_the_known_symmetries(candidates):
    for xi in (XI_IZ, XI_BAR, XI_INV):
        assert min(xi.distance(c) for c in candidates) < 1e-3


def test_centroid_landmarks_are_the_largest_curves(curves512):
    cents = centroid_landmarks(curves512, 3)
    top = sorted(curves512, key=lambda c: -c.diameter)[:3]
    assert cents == [c.centroid for c in top]


# -- invariance ------------------------------------------------------------------


def test_identity_scores_zero(cloud512):
    s = verify_invariance(MoebiusMap.identity(), cloud512)
    assert s.score == 0 and s.accepted


@pytest.mark.parametrize("xi", [XI_IZ, XI_BAR, XI_INV], ids=["iz", "conj", "inv4z"])
def test_known_symmetries_accepted(xi, cloud512):
    assert verify_invariance(xi, cloud512, 2).accepted


def test_translation_rejected(cloud512):
    s = verify_invariance(TRANSLATE, cloud512, 2)
    assert not s.accepted and s.score > 10


def test_score_against_brute_force(grid256):
    from tests.oracles.hausdorff import directed

    pts = grid256.julia_points
    h = grid256.pixel_size
    s = verify_invariance(XI_INV, grid256)
    scale_fwd = np.maximum(1, XI_INV.derivative_modulus(pts))
    inv = XI_INV.inverse()
    scale_inv = np.maximum(1, inv.derivative_modulus(pts))
    brute = max((directed(XI_INV(pts), pts) / scale_fwd).max(), (directed(inv(pts), pts) / scale_inv).max()) / h
    assert s.score == pytest.approx(brute, rel=1e-12)


def test_raw_samples_need_pixel_size(grid256):
    with pytest.raises(PreconditionError):
        verify_invariance(XI_IZ, grid256.julia_points)


def test_inverse_accepted_with_the_same_score(candidates, scores512, cloud512):
    for m, s in zip(candidates, scores512):
        if s.accepted:
            t = verify_invariance(m.inverse(), cloud512)
            assert t.accepted
            assert t.score == pytest.approx(s.score, abs=1e-9)


def test_argmax_stable_across_resolutions(candidates, scores512, cloud1024):
    for m, s in zip(candidates, scores512):
        t = verify_invariance(m, cloud1024)
        if s.borderline or t.borderline:
            continue
        assert s.accepted == t.accepted


# -- group -----------------------------------------------------------------------


def test_trivial_group(cloud512):
    g = group_closure([MoebiusMap.identity()], cloud512)
    assert g.order == 1 and g.closed and g.delta0 is None


def test_group_matches_symbolic_closure(group):
    oracle = exact_group.closure(exact_group.example_generators())
    assert group.closed and group.verdict == "finite group"
    assert group.order == len(oracle) == 16
    for xi in (XI_IZ, XI_BAR, XI_INV):
        assert group.closest(xi)[1] < 1e-3
    assert group.delta0 > 0


def test_group_table_is_a_group(group):
    t = group.table
    n = group.order
    ident = group.find(MoebiusMap.identity())
    assert ident >= 0
    assert (t >= 0).all()
    for i in range(n):
        assert sorted(t[i]) == list(range(n))
        assert (t[i] == ident).sum() == 1
    # associativity on the table
    for i in range(n):
        for j in range(n):
            assert np.array_equal(t[t[i, j]], t[i][t[j]])


def test_generators_from_known_maps(cloud512):
    g = group_closure([XI_IZ, XI_BAR, XI_INV], cloud512)
    assert g.order == 16 and g.closed


def test_irrational_rotation_never_closes():
    z = np.exp(2j * np.pi * np.arange(4096) / 4096)
    cloud = JuliaCloud(z, 2 * np.pi / 4096)
    rot = MoebiusMap(np.exp(1j * math.sqrt(2)), 0, 0, 1)
    g = group_closure([rot], cloud)
    assert g.verdict == "closure not reached" and not g.closed and g.order is None


def test_finite_rotation_closes():
    z = np.exp(2j * np.pi * np.arange(4096) / 4096)
    g = group_closure([XI_IZ], JuliaCloud(z, 2 * np.pi / 4096))
    assert g.order == 4


def test_group_json_carries_the_caveat(group):
    body = group.to_json()
    assert body["order"] == 16
    assert "may be missed" in body["completeness_caveat"]


# -- functional equation ---------------------------------------------------------


def test_iz_relations(f, julia_samples, grid512):
    rels = functional_equation_search(f, f, XI_IZ, julia_samples, 4, g_cloud=grid512)
    found = {r.exponents for r in rels}
    assert (3, 2, 1) in found
    assert (2, 1, 1) not in found
    for r in rels:
        assert r.degree_identity and 2 ** (r.m_prime - r.m) == 2**r.n
        assert r.residual <= 2 * grid512.pixel_size
    assert reduced_form(rels) == 2


def test_identity_relations(f, julia_samples, grid512):
    rels = functional_equation_search(f, f, MoebiusMap.identity(), julia_samples, 4, g_cloud=grid512)
    expected = {(m + n, m, n) for m in range(1, 4) for n in range(1, 4) if m + n <= 4}
    assert {r.exponents for r in rels} == expected
    assert reduced_form(rels) == 1


def test_relations_compose(f, julia_samples, grid512):
    for xi in (XI_IZ, MoebiusMap.identity(), XI_BAR):
        rels = functional_equation_search(f, f, xi, julia_samples, 6, g_cloud=grid512)
        found = {r.exponents for r in rels}
        for a, b, n1 in found:
            for b2, c, n2 in found:
                if b2 == b and n1 + n2 <= 6:
                    assert (a, c, n1 + n2) in found
            # apply g on the left
            if a < 6:
                assert (a + 1, b + 1, n1) in found


def test_translation_fails_precheck(f, julia_samples, grid512):
    with pytest.raises(PreconditionError):
        functional_equation_search(f, f, TRANSLATE, julia_samples, 4, g_cloud=grid512)


def test_max_exp_cap(f, julia_samples):
    with pytest.raises(PreconditionError):
        functional_equation_search(f, f, XI_IZ, julia_samples, 7)


def test_relation_json():
    r = FunctionalRelation(3, 2, 1, 1e-15, True)
    assert r.to_json() == {"m_prime": 3, "m": 2, "n": 1, "residual": 1e-15, "degree_identity": True}


def test_symbolic_identity_behind_the_iz_relation(f):
    z = np.exp(1j * np.linspace(0.1, 6, 50)) * np.linspace(0.3, 1.5, 50)
    assert np.abs(f(1j * z) + f(z)).max() < 1e-12
    assert np.abs(f(-z) - f(z)).max() < 1e-12
    assert chordal_distance(f(f(f(1j * z))), f(f(1j * f(z)))).max() < 1e-12
