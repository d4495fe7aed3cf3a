import math
from dataclasses import replace

import numpy as np
import pytest

from harmep.alternatives import (
    AlternativeSpec,
    SegmentParams,
    _energy,
    _gaussian_energy,
    _random_tangent_frame,
    _segment_coeffs,
    arc_distance,
    generate_alternative,
    mixture_components,
    png_sweep,
    segment_energy,
    segment_map,
)
from harmep.harmonics import SphereGrid, analyze_map, simulate_gaussian_coeffs, synthesize_map
from harmep.seeding import make_rng, seed_sequence
from harmep.testing import calibrate_null, gaussianity_test, power_study

from conftest import cov_z, mc_z


# -- configuration ------------------------------------------------------

@pytest.mark.parametrize(
    "kwargs",
    [
        {"png": 1.0},
        {"png": -0.1},
        {"nu": 2.0},
        {"kind": "strings"},
        {"spectrum": "planck"},
        {"segments": SegmentParams(count_mean=0.0)},
    ],
)
def test_invalid_specs(kwargs):
    with pytest.raises(ValueError):
        AlternativeSpec(**kwargs)


def test_invalid_segment_params():
    with pytest.raises(ValueError):
        SegmentParams(count_mean=-1)
    with pytest.raises(ValueError):
        SegmentParams(length_min=0.5, length_max=0.2)
    with pytest.raises(ValueError):
        SegmentParams(half_width=0.0)


def test_spec_dict_roundtrip():
    spec = AlternativeSpec(kind="heavy-tail", nu=7.0, segments=SegmentParams(count_mean=3.0))
    assert AlternativeSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError, match="unknown"):
        AlternativeSpec.from_dict({"kind": "mixture", "colour": 1})
    with pytest.raises(ValueError, match="unknown segment"):
        AlternativeSpec.from_dict({"segments": {"width": 1}})


# -- generators ---------------------------------------------------------

@pytest.mark.parametrize("spectrum", ["flat", "cmb"])
def test_png_zero_is_gaussian_generator(spectrum):
    spec = AlternativeSpec(kind="mixture", png=0.0, spectrum=spectrum)
    out = generate_alternative(spec, 20, 5)
    ref = simulate_gaussian_coeffs(spec.gaussian_spectrum(20), 5)
    assert np.array_equal(out.data, ref.data)
    gauss = generate_alternative(AlternativeSpec(kind="gaussian", spectrum=spectrum), 20, 5)
    assert np.array_equal(gauss.data, ref.data)


def test_generators_deterministic():
    for kind in ("mixture", "segments", "heavy-tail"):
        spec = AlternativeSpec(kind=kind, png=0.3)
        a, b = generate_alternative(spec, 16, 3), generate_alternative(spec, 16, 3)
        assert np.array_equal(a.data, b.data), kind


def test_png_sweep_matches_individual_draws():
    spec = AlternativeSpec(kind="mixture")
    pngs = (0.0, 0.2, 0.5)
    swept = png_sweep(spec, pngs, 16, 8)
    for p, c in zip(pngs, swept):
        single = generate_alternative(replace(spec, png=p), 16, 8)
        assert np.allclose(c.data, single.data, rtol=1e-14, atol=0)


def test_segment_coefficients_roundtrip():
    c = generate_alternative(AlternativeSpec(kind="segments"), 24, 4)
    assert np.any(c.data != 0)
    grid = SphereGrid.for_lmax(24)
    fmap = synthesize_map(c, grid)
    assert fmap.imag_residue <= 1e-12 * np.max(np.abs(fmap.samples))
    back = analyze_map(fmap, 24)
    assert np.max(np.abs(back.data - c.data)) <= 1e-10


def test_heavy_tail_variance():
    spec = AlternativeSpec(kind="heavy-tail", nu=6.0, spectrum="flat")
    vals = np.concatenate([generate_alternative(spec, 10, seed_sequence(3, i)).data for i in range(3000)])
    # E|a|^2 = nu / (nu - 2) for a unit spectrum
    assert mc_z(np.abs(vals) ** 2, 6.0 / 4.0) < 4.0


def test_heavy_tail_large_nu_has_nominal_size():
    lmax, n = 20, 1000
    cal = calibrate_null(lmax, 1000, seed=111)
    spec = AlternativeSpec(kind="heavy-tail", nu=1e6)
    for level in (0.1, 0.05):
        rate = np.mean(
            [gaussianity_test(generate_alternative(spec, lmax, seed_sequence(112, i)), cal).reject[level] for i in range(n)]
        )
        assert abs(rate - level) <= 4 * math.sqrt(2 * level * (1 - level) / n)


# -- segment geometry ---------------------------------------------------

def brute_arc_distance(points, start, tangent, length, n=20_001):
    s = np.linspace(0.0, length, n)
    arc = np.cos(s)[:, None] * start + np.sin(s)[:, None] * tangent
    return np.arccos(np.clip(points @ arc.T, -1, 1)).min(axis=1)


def test_arc_distance_matches_dense_sampling():
    rng = np.random.default_rng(4)
    pts = rng.standard_normal((1000, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    n = 20_001
    for length in (0.05, 0.6, 2.0, np.pi):
        p, t = _random_tangent_frame(rng, 1)
        d = arc_distance(pts, p[0], t[0], length)
        ref = brute_arc_distance(pts, p[0], t[0], length, n)
        # the nearest sample lies within ds/2 of the foot point: cos(ref) >= cos(d) cos(ds/2)
        half_step = 0.5 * length / (n - 1)
        assert np.all(d <= ref + 1e-9)
        assert np.all(ref <= np.arccos(np.cos(d) * np.cos(half_step)) + 1e-9)


def test_zero_count_gives_zero_map():
    fmap = segment_map(SegmentParams(count_mean=0.0), SphereGrid(20, 40), 1)
    assert np.all(fmap.samples == 0.0)


def test_single_segment_paints_exactly_the_neighbourhood():
    params = SegmentParams(count_mean=1.0, level_mean=1.0, level_sd=0.0, half_width=0.08)
    grid = SphereGrid(80, 160)
    pts = grid.unit_vectors().reshape(-1, 3)
    checked = 0
    for seed in range(40):
        rng = make_rng(seed)
        if rng.poisson(params.count_mean) != 1:
            continue
        p, t = _random_tangent_frame(rng, 1)
        length = rng.uniform(params.length_min, params.length_max)
        ref = brute_arc_distance(pts, p[0], t[0], length)
        painted = segment_map(params, grid, seed).samples.reshape(-1)
        assert set(np.unique(painted)) <= {0.0, 1.0}
        clear = np.abs(ref - params.half_width) > 1e-6
        assert np.array_equal(painted[clear] == 1.0, ref[clear] <= params.half_width)
        checked += 1
    assert checked >= 5


def test_segment_first_moment():
    params = SegmentParams(count_mean=3.0, level_mean=1.0, level_sd=0.5, half_width=0.1)
    grid = SphereGrid(24, 48)
    w = grid.cell_weights()
    means = np.array([np.sum(w * segment_map(params, grid, seed_sequence(5, i)).samples) / (4 * np.pi) for i in range(10_000)])
    expected = params.count_mean * params.level_mean * params.expected_area() / (4 * np.pi)
    assert mc_z(means, expected) < 4.0


def test_expected_area_formula():
    params = SegmentParams(length_min=0.4, length_max=0.4, half_width=0.1)
    rng = np.random.default_rng(6)
    pts = rng.standard_normal((400_000, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    start, tangent = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    inside = (arc_distance(pts, start, tangent, 0.4) <= 0.1).astype(float)
    assert mc_z(inside, params.expected_area() / (4 * np.pi)) < 4.0


# -- mixture ------------------------------------------------------------

def test_mixture_components_independent():
    spec = AlternativeSpec(kind="mixture", png=0.4)
    n = 2000
    pairs = [mixture_components(spec, 10, seed_sequence(7, i)) for i in range(n)]
    g = np.array([p[0].data for p in pairs])
    s = np.array([p[1].data for p in pairs])
    for idx in (0, 3, 20, 64):
        assert cov_z(g[:, idx].real, s[:, idx].real, 0.0) < 4.0
        assert cov_z(np.abs(g[:, idx]) ** 2, np.abs(s[:, idx]) ** 2, 0.0) < 4.0


def test_mixture_energy_split():
    spec = AlternativeSpec(kind="mixture", png=0.3)
    lmax, n = 16, 600
    e_prerun = np.array([
        _energy(_segment_coeffs(spec.segments, lmax, seed_sequence(0, "segment-energy", i))) for i in range(64)
    ])
    assert segment_energy(spec.segments, lmax) == pytest.approx(e_prerun.mean(), rel=1e-12)
    parts = [mixture_components(spec, lmax, seed_sequence(8, i)) for i in range(n)]
    e_s = np.array([_energy(s) for _, s in parts])
    e_g = np.array([_energy(g) for g, _ in parts])
    expected_g = (1 - spec.png) * _gaussian_energy(spec.gaussian_spectrum(lmax))
    assert mc_z(e_g, expected_g) < 4.0
    # the segment energy target carries the pre-run's own error
    target = spec.png * _gaussian_energy(spec.gaussian_spectrum(lmax))
    rel_se = math.hypot(e_prerun.std(ddof=1) / e_prerun.mean() / 8.0, e_s.std(ddof=1) / e_s.mean() / math.sqrt(n))
    assert abs(e_s.mean() / target - 1.0) < 4 * rel_se


def test_level_variance_does_not_reduce_power():
    lmax, reps = 30, 200
    cal = calibrate_null(lmax, 1000, seed=121)
    base = AlternativeSpec(kind="mixture", segments=SegmentParams(level_sd=1.0))
    doubled = replace(base, segments=SegmentParams(level_sd=math.sqrt(2.0)))
    pngs = (0.2, 0.4)
    a = power_study(base, pngs, lmax, reps, cal, seed=122).rates
    b = power_study(doubled, pngs, lmax, reps, cal, seed=122).rates
    band = 4 * np.sqrt(np.maximum(a * (1 - a), 0.01) / reps)
    assert np.all(b >= a - band)
