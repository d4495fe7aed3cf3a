"""Non-Gaussian coefficient generators for power studies.

Four kinds are available:

``gaussian``
    The isotropic Gaussian null, as :func:`harmep.harmonics.simulate_gaussian_coeffs`.
``mixture``
    ``T = sqrt(1 - png) T_G + sqrt(png E_G / E_S) T_S``, a Gaussian map plus an
    independent segment map, scaled so the segment share of the expected
    total energy is ``png``.
``segments``
    The band-limited segment map alone.
``heavy-tail``
    Gaussian coefficients with each ``a_lm`` multiplied by ``sqrt(nu / chi2_nu)``.

Segments are great-circle arcs with a uniformly random start point and
direction, a uniform angular length and a Gaussian level. A segment adds
its level to every grid node within a fixed angular half-width of the arc.
All distributional choices are free parameters of :class:`AlternativeSpec`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from functools import lru_cache

import numpy as np

from .harmonics import (
    AngularPowerSpectrum,
    FieldMap,
    HarmonicCoefficients,
    SphereGrid,
    analyze_map,
    simulate_gaussian_coeffs,
)
from .seeding import SeedLike, make_rng, seed_sequence

__all__ = [
    "KINDS",
    "AlternativeSpec",
    "SegmentParams",
    "segment_map",
    "arc_distance",
    "segment_grid",
    "segment_energy",
    "mixture_components",
    "generate_alternative",
    "png_sweep",
]

KINDS = ("gaussian", "mixture", "segments", "heavy-tail")
ENERGY_PRERUN_SEED = 0
ENERGY_PRERUN_REPS = 64


@dataclass(frozen=True)
class SegmentParams:
    """Law of the segment contaminant.

    Lengths and the half-width are angles in radians. Levels are
    ``N(level_mean, level_sd^2)``.
    """

    count_mean: float = 5.0
    length_min: float = 0.1
    length_max: float = 0.6
    level_mean: float = 0.0
    level_sd: float = 1.0
    half_width: float = 0.03

    def __post_init__(self):
        if not self.count_mean >= 0:
            raise ValueError("segment count mean must be >= 0")
        if not 0 <= self.length_min <= self.length_max <= np.pi:
            raise ValueError("need 0 <= length_min <= length_max <= pi")
        if not self.level_sd >= 0:
            raise ValueError("level sd must be >= 0")
        if not 0 < self.half_width < np.pi / 2:
            raise ValueError("half-width must lie in (0, pi/2)")

    def expected_area(self) -> float:
        """Mean solid angle within ``half_width`` of one arc (no self-overlap)."""
        w = self.half_width
        mean_len = 0.5 * (self.length_min + self.length_max)
        return 2.0 * mean_len * np.sin(w) + 2.0 * np.pi * (1.0 - np.cos(w))


@dataclass(frozen=True)
class AlternativeSpec:
    """Configuration of an alternative.

    ``png`` is used by the ``mixture`` kind and ``nu`` by ``heavy-tail``.
    ``spectrum`` selects the Gaussian component's ``C_l``: ``"flat"`` for
    ``C_l = 1`` or ``"cmb"`` for ``C_l = 1 / (l (l + 1))``.
    """

    kind: str = "mixture"
    png: float = 0.0
    segments: SegmentParams = SegmentParams()
    nu: float = 5.0
    spectrum: str = "cmb"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown alternative kind {self.kind!r}; choose from {KINDS}")
        if not 0.0 <= self.png < 1.0:
            raise ValueError("png must lie in [0, 1)")
        if not self.nu > 2:
            raise ValueError("nu must exceed 2")
        if self.spectrum not in ("flat", "cmb"):
            raise ValueError("spectrum must be 'flat' or 'cmb'")
        if self.kind in ("mixture", "segments") and not self.segments.count_mean > 0:
            raise ValueError("segment count mean must be > 0")

    def gaussian_spectrum(self, lmax: int) -> AngularPowerSpectrum:
        if self.spectrum == "flat":
            return AngularPowerSpectrum.flat(lmax)
        return AngularPowerSpectrum.from_callable(lambda l: 1.0 / (l * (l + 1.0)), lmax)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AlternativeSpec":
        data = dict(data)
        seg = data.pop("segments", {}) or {}
        if isinstance(seg, SegmentParams):
            seg = asdict(seg)
        unknown = set(seg) - set(SegmentParams.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown segment keys {sorted(unknown)}")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown alternative keys {sorted(unknown)}")
        return cls(segments=SegmentParams(**seg), **data)


# -- geometry -----------------------------------------------------------

def _random_tangent_frame(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform start points on the sphere and uniform unit tangents there."""
    p = rng.standard_normal((n, 3))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    # orthonormal basis of the tangent plane, then a uniform angle
    helper = np.where(np.abs(p[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    e1 = np.cross(p, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(p, e1)
    psi = rng.uniform(0.0, 2.0 * np.pi, n)
    t = np.cos(psi)[:, None] * e1 + np.sin(psi)[:, None] * e2
    return p, t


def arc_distance(points: np.ndarray, start: np.ndarray, tangent: np.ndarray, length: float) -> np.ndarray:
    """Angular distance from unit vectors ``points[..., 3]`` to a great-circle arc.

    The arc is ``cos(s) start + sin(s) tangent`` for ``s`` in ``[0, length]``,
    with ``tangent`` a unit vector orthogonal to ``start`` and
    ``length <= pi``.
    """
    x_p = points @ start
    x_t = points @ tangent
    normal = np.cross(start, tangent)
    x_n = points @ normal
    psi = np.mod(np.arctan2(x_t, x_p), 2.0 * np.pi)
    on_span = psi <= length
    to_circle = np.arcsin(np.clip(np.abs(x_n), 0.0, 1.0))
    end = np.cos(length) * start + np.sin(length) * tangent
    to_start = np.arccos(np.clip(x_p, -1.0, 1.0))
    to_end = np.arccos(np.clip(points @ end, -1.0, 1.0))
    return np.where(on_span, to_circle, np.minimum(to_start, to_end))


def segment_map(params: SegmentParams, grid: SphereGrid, seed: SeedLike) -> FieldMap:
    """Poisson number of constant-level arcs painted onto ``grid``."""
    rng = make_rng(seed)
    n = int(rng.poisson(params.count_mean))
    starts, tangents = _random_tangent_frame(rng, n)
    lengths = rng.uniform(params.length_min, params.length_max, n)
    levels = rng.normal(params.level_mean, params.level_sd, n)
    pts = grid.unit_vectors()
    out = np.zeros(grid.shape)
    # cheap pre-filter: a node within w of the arc is within L/2 + w of its midpoint
    for p, t, length, level in zip(starts, tangents, lengths, levels):
        mid = np.cos(0.5 * length) * p + np.sin(0.5 * length) * t
        near = pts @ mid >= np.cos(min(0.5 * length + params.half_width, np.pi))
        if not np.any(near):
            continue
        d = arc_distance(pts[near], p, t, length)
        out[near] += np.where(d <= params.half_width, level, 0.0)
    return FieldMap(grid, out)


def segment_grid(lmax: int) -> SphereGrid:
    """Sphere grid used to rasterize segments before analysis at ``lmax``."""
    return SphereGrid.for_lmax(lmax, oversample=2)


def _segment_coeffs(params: SegmentParams, lmax: int, seed: SeedLike) -> HarmonicCoefficients:
    return analyze_map(segment_map(params, segment_grid(lmax), seed), lmax)


def _energy(coeffs: HarmonicCoefficients) -> float:
    """``sum_{l, |m| <= l} |a_lm|^2`` (the integral of ``T^2`` over the sphere)."""
    a = coeffs.data
    m0 = coeffs.m0_index()
    return float(2.0 * np.sum(np.abs(a) ** 2) - np.sum(np.abs(a[m0]) ** 2))


@lru_cache(maxsize=32)
def segment_energy(params: SegmentParams, lmax: int, n_reps: int = ENERGY_PRERUN_REPS) -> float:
    """Expected band-limited segment energy, estimated by a fixed-seed pre-run.

    The pre-run uses its own master seed, so the estimate is the same
    constant for every study with these parameters.
    """
    total = sum(
        _energy(_segment_coeffs(params, lmax, seed_sequence(ENERGY_PRERUN_SEED, "segment-energy", i)))
        for i in range(n_reps)
    )
    value = total / n_reps
    if value <= 0:
        raise ValueError("segment pre-run produced zero energy; increase count_mean or half_width")
    return value


def _gaussian_energy(spectrum: AngularPowerSpectrum) -> float:
    l = np.arange(1, spectrum.lmax + 1)
    return float(np.sum((2 * l + 1) * spectrum.values))


def _segment_seed(seed: SeedLike) -> SeedLike:
    return seed if isinstance(seed, np.random.Generator) else seed_sequence(seed, "segments")


def mix(spec: AlternativeSpec, gaussian: HarmonicCoefficients, segments: HarmonicCoefficients):
    """Scale unit-weight components to the energy split of ``spec.png``.

    Returns the scaled ``(T_G, T_S)`` coefficient arrays.
    """
    lmax = gaussian.lmax
    e_g = _gaussian_energy(spec.gaussian_spectrum(lmax))
    e_s = segment_energy(spec.segments, lmax)
    g_scaled = HarmonicCoefficients(lmax, np.sqrt(1.0 - spec.png) * gaussian.data)
    s_scaled = HarmonicCoefficients(lmax, np.sqrt(spec.png * e_g / e_s) * segments.data)
    return g_scaled, s_scaled


def mixture_components(
    spec: AlternativeSpec, lmax: int, seed: SeedLike
) -> tuple[HarmonicCoefficients, HarmonicCoefficients]:
    """Scaled Gaussian and segment parts whose sum is the mixture draw.

    The Gaussian part uses ``seed`` itself, exactly as
    :func:`simulate_gaussian_coeffs` would; the segment part uses an
    independent child stream.
    """
    g = simulate_gaussian_coeffs(spec.gaussian_spectrum(lmax), seed)
    if spec.png == 0.0:
        return g, HarmonicCoefficients.zeros(lmax)
    return mix(spec, g, _segment_coeffs(spec.segments, lmax, _segment_seed(seed)))


def combine(g: HarmonicCoefficients, s: HarmonicCoefficients) -> HarmonicCoefficients:
    return HarmonicCoefficients(g.lmax, g.data + s.data)


def generate_alternative(spec: AlternativeSpec, lmax: int, seed: SeedLike) -> HarmonicCoefficients:
    """Draw one coefficient array from the alternative ``spec`` at degree ``lmax``."""
    if lmax < 1:
        raise ValueError("lmax must be >= 1")
    spectrum = spec.gaussian_spectrum(lmax)
    if spec.kind == "gaussian":
        return simulate_gaussian_coeffs(spectrum, seed)
    if spec.kind == "mixture":
        g, s = mixture_components(spec, lmax, seed)
        return g if spec.png == 0.0 else combine(g, s)
    if spec.kind == "segments":
        return _segment_coeffs(spec.segments, lmax, seed)
    # heavy-tail: per-coefficient Gaussian scale mixture
    g = simulate_gaussian_coeffs(spectrum, seed)
    rng = make_rng(seed_sequence(seed, "heavy-tail")) if not isinstance(seed, np.random.Generator) else seed
    scale = np.sqrt(spec.nu / rng.chisquare(spec.nu, g.data.size))
    return HarmonicCoefficients(lmax, g.data * scale)


def png_sweep(spec: AlternativeSpec, png_values, lmax: int, seed: SeedLike) -> list[HarmonicCoefficients]:
    """``generate_alternative`` at each ``png`` with one shared random stream.

    Components are drawn once, so this equals calling
    ``generate_alternative(replace(spec, png=p), lmax, seed)`` for each ``p``
    but rasterizes the segment map only once.
    """
    if spec.kind != "mixture":
        return [generate_alternative(replace(spec, png=p), lmax, seed) for p in png_values]
    g = simulate_gaussian_coeffs(spec.gaussian_spectrum(lmax), seed)
    s = None
    out = []
    for p in png_values:
        if p == 0.0:
            out.append(g)
            continue
        if s is None:
            s = _segment_coeffs(spec.segments, lmax, _segment_seed(seed))
        out.append(combine(*mix(replace(spec, png=p), g, s)))
    return out
