import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carpet_dyn.errors import GeometryError
from carpet_dyn.geometry import (
    geometry_report,
    locations_and_scales,
    porosity_constant,
    qs_distortion,
    quasicircle_constant,
    relative_separation,
)
from carpet_dyn.raster import PeripheralCurve, RasterGrid, Window
from carpet_dyn.sphere import MoebiusMap, RationalMap
from tests.oracles.quasicircle import brute_constant, square_supremum

# first verified runs on the example map, seed 1, 10^4 samples
FROZEN = {
    512: dict(L=1.1316904342314114, c=0.3965276506121736, C=3.3458517191898323, c_por=0.18582002536039535),
    1024: dict(L=1.1298816491849877, c=0.33589618943245814, C=2.5187341906794716, c_por=0.1927173401952059),
}
SQUARE_1000 = 1.1441155


def circle(n, center=0j, radius=1.0, phase=0.0):
    return center + radius * np.exp(1j * (phase + 2 * np.pi * np.arange(n) / n))


def square(n):
    t = np.arange(n) / n * 4
    side, s = np.divmod(t, 1)
    corners = np.array([0, 1, 1 + 1j, 1j, 0])
    z = corners[side.astype(int)] + s * (corners[side.astype(int) + 1] - corners[side.astype(int)])
    return 1e-3 * (z - (0.5 + 0.5j))


@pytest.fixture(scope="module")
def reports(grid512, grid1024, curves512, curves1024):
    return {512: geometry_report(grid512, curves512), 1024: geometry_report(grid1024, curves1024)}


# -- quasicircle ----------------------------------------------------------------


def test_round_circle():
    assert 1.0 <= quasicircle_constant(circle(64)) <= 1.05


def test_too_few_vertices():
    with pytest.raises(GeometryError):
        quasicircle_constant(np.array([0, 1j]))


def test_duplicate_vertices_are_cleaned():
    v = circle(32)
    assert quasicircle_constant(np.repeat(v, 2)) == pytest.approx(quasicircle_constant(v), abs=1e-12)


def test_square_regression_and_continuum_value():
    L = quasicircle_constant(square(1000))
    assert L == pytest.approx(SQUARE_1000, abs=1e-6)
    assert L == pytest.approx(square_supremum(), abs=1e-4)


def test_square_matches_brute_force_on_a_coarse_polygon():
    v = square(48)
    assert quasicircle_constant(v) == pytest.approx(brute_constant(v), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(8, 28),
    seed=st.integers(0, 2**32 - 1),
    jitter=st.floats(0.0, 0.6),
)
def test_dp_matches_brute_force(n, seed, jitter):
    rng = np.random.default_rng(seed)
    r = 1 + jitter * rng.uniform(-1, 1, n)
    v = 0.3 * r * np.exp(2j * np.pi * np.arange(n) / n)
    assert quasicircle_constant(v) == pytest.approx(brute_constant(v), rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.integers(0, 39))
def test_invariant_under_sphere_rotation_and_relabeling(seed, shift):
    rng = np.random.default_rng(seed)
    v = 0.5 * (1 + 0.4 * rng.uniform(-1, 1, 40)) * np.exp(2j * np.pi * np.arange(40) / 40)
    L = quasicircle_constant(v)
    assert quasicircle_constant(np.roll(v, shift)) == L
    # z -> (z - a)/(1 + conj(a) z) composed with a rotation is a chordal isometry
    a = complex(*rng.uniform(-0.5, 0.5, 2))
    u = np.exp(1j * rng.uniform(0, 6.3))
    rot = MoebiusMap(u, -u * a, np.conj(a), 1)
    assert quasicircle_constant(rot(v)) == pytest.approx(L, abs=1e-9)


# -- separation ------------------------------------------------------------------


def test_two_far_circles():
    # tiny circles so the chordal metric is the Euclidean one scaled by 2
    a, b = circle(2000, 0, 1e-4), circle(2000, 4e-4, 1e-4)
    c, _ = relative_separation([a, b])
    assert c == pytest.approx(1.0, rel=1e-3)


def test_tangent_circles():
    c, pair = relative_separation([circle(400, 0, 1.0), circle(400, 0.5, 0.5)])
    assert c == 0.0 and pair == (0, 1)


def test_separation_against_brute_force(rng):
    curves = [circle(60, complex(*rng.uniform(-1, 1, 2)), r) for r in rng.uniform(0.05, 0.15, 6)]
    from tests.oracles.quasicircle import sphere

    xs = [sphere(c) for c in curves]

    def seg_dist(p, a, b):
        ab = b - a
        t = np.clip(((p[:, None, :] - a[None]) * ab[None]).sum(-1) / (ab * ab).sum(-1), 0, 1)
        proj = a[None] + t[..., None] * ab[None]
        return np.linalg.norm(p[:, None, :] - proj, axis=-1).min()

    def dist(x, y):
        return min(seg_dist(x, y, np.roll(y, -1, 0)), seg_dist(y, x, np.roll(x, -1, 0)))

    def diam(x):
        return np.linalg.norm(x[:, None] - x[None], axis=-1).max()

    brute = min(
        dist(xs[i], xs[j]) / min(diam(xs[i]), diam(xs[j]))
        for i in range(6) for j in range(i + 1, 6)
    )
    c, _ = relative_separation(curves)
    assert c == pytest.approx(brute, rel=1e-6)


def test_separation_symmetric_and_monotone(curves512):
    big = [c for c in curves512 if len(c) >= 8][:12]
    c2, _ = relative_separation(big[:2])
    assert relative_separation(big[1::-1])[0] == pytest.approx(c2, abs=1e-15)
    previous = c2
    for k in range(3, len(big) + 1):
        ck, _ = relative_separation(big[:k])
        assert ck <= previous + 1e-15
        previous = ck


def test_separation_needs_two_curves():
    with pytest.raises(GeometryError):
        relative_separation([circle(10)])


# -- locations and scales ---------------------------------------------------------


def test_single_circle_collapses_at_small_scales():
    c = PeripheralCurve(circle(400), 0)
    pts = circle(400)
    res = locations_and_scales([c], pts, n_samples=2000, r_min=1e-3)
    small = [rate for r, rate in res.pass_rate_by_scale if r < 0.05]
    assert small and max(small) < 0.5


def test_global_scale_accepts_largest_curve(curves512):
    big = curves512[0]
    res = locations_and_scales([big], big.vertices[:10], n_samples=50, r_min=2.0)
    assert np.allclose(res.radii, 2.0)
    assert np.all(res.constants == np.maximum(2.0 / big.diameter, big.diameter / 2.0))


def test_no_samples():
    with pytest.raises(GeometryError):
        locations_and_scales([], [], pixel_size=0.01)


# -- porosity --------------------------------------------------------------------


def _synthetic(julia):
    n = julia.shape[0]
    labels = np.zeros((n, n), dtype=np.int64)
    return RasterGrid(RationalMap([0, 0, 1], [1]), Window(), n, labels, labels, julia, [], 1e-3, 1, 4.0)


def test_porosity_all_fatou():
    res = porosity_constant(_synthetic(np.zeros((64, 64), bool)), n_samples=500)
    assert res.c_por == pytest.approx(1.0, abs=0.05)


def test_porosity_all_julia():
    res = porosity_constant(_synthetic(np.ones((64, 64), bool)), n_samples=500)
    assert res.pass_rate == 0.0
    assert np.allclose(res.ratios * res.radii, 0.5)


def test_porosity_against_brute_force(grid256):
    res = porosity_constant(grid256, n_samples=40, rng_seed=5, r_max_px=12)
    jr, jc = np.nonzero(grid256.julia)
    rng = np.random.default_rng(5)
    pick = rng.integers(0, jr.size, 40)
    rows, cols = jr[pick], jc[pick]
    from scipy import ndimage

    edt = np.maximum(ndimage.distance_transform_edt(~grid256.julia) - 0.5, 0)
    yy, xx = np.indices(edt.shape)
    for s in range(40):
        r = res.radii[s]
        room = r - np.hypot(yy - rows[s], xx - cols[s])
        best = max(np.minimum(edt, room)[room > 0].max(), 0.5)
        assert res.ratios[s] * r == pytest.approx(best, abs=1e-9)


# -- distortion -------------------------------------------------------------------


def test_identity_and_similarity_profiles_are_diagonal(rng):
    z = 1e-3 * (rng.normal(size=300) + 1j * rng.normal(size=300))
    for img in (z, 2 * z):
        prof = qs_distortion(z, img, metric="euclidean")
        assert prof
        for x, y in prof:
            assert y <= x * 3 and y >= x / 3
    for x, y in qs_distortion(z, z):
        assert y <= 3 * x


def test_squaring_distorts_large_ratios(rng):
    z = rng.uniform(1, 2, 400) * np.exp(1j * rng.uniform(0, np.pi / 2, 400))
    ident = qs_distortion(z, z, metric="euclidean")
    sq = qs_distortion(z, z**2, metric="euclidean")
    assert sq[-1][1] > ident[-1][1]


def test_qs_length_mismatch():
    with pytest.raises(ValueError):
        qs_distortion([0, 1, 2], [0, 1])


# -- example map -----------------------------------------------------------------


@pytest.mark.parametrize("n", [512, 1024])
def test_frozen_constants(reports, n):
    r = reports[n]
    ref = FROZEN[n]
    assert r.L_max == pytest.approx(ref["L"], rel=1e-6)
    assert r.separation == pytest.approx(ref["c"], rel=1e-6)
    assert r.C == pytest.approx(ref["C"], rel=1e-6)
    assert r.c_por == pytest.approx(ref["c_por"], rel=1e-6)
    assert r.C_pass_rate >= 0.99
    assert r.L_max >= 1 and r.separation > 0


def test_resolutions_agree_within_factor_two(reports):
    a, b = reports[512], reports[1024]
    for key in ("L_max", "separation", "C", "c_por"):
        x, y = getattr(a, key), getattr(b, key)
        assert np.isfinite(x) and np.isfinite(y) and x > 0 and y > 0
        assert 0.5 <= x / y <= 2


def test_deterministic(grid512, curves512, reports):
    again = geometry_report(grid512, curves512)
    assert again.to_json() == reports[512].to_json()
