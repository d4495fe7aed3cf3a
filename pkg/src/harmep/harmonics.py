"""Harmonic coefficient arrays, Gaussian simulation, and sphere transforms.

Coefficients are stored in a packed triangular layout, one row per degree
``l = 1 .. L`` holding orders ``m = 0 .. l``::

    [a10, a11, a20, a21, a22, a30, ...]

Negative orders are implied by ``a_{l,-m} = (-1)^m conj(a_{l,m})`` and are
never stored. The monopole ``l = 0`` is not modelled.

Spherical harmonics use the orthonormal convention with the Condon-Shortley
phase included in the associated Legendre functions. Fully normalized
Legendre values are generated by the standard three-term recurrence in
``l`` for each fixed ``m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .seeding import SeedLike, make_rng

__all__ = [
    "AngularPowerSpectrum",
    "HarmonicCoefficients",
    "SphereGrid",
    "FieldMap",
    "simulate_gaussian_coeffs",
    "estimate_spectrum",
    "eval_spherical_harmonic",
    "synthesize_map",
    "analyze_map",
    "row_offset",
    "packed_size",
]


def row_offset(l: int) -> int:
    """Index of ``a_{l,0}`` in the packed layout."""
    return (l - 1) * (l + 2) // 2


def packed_size(lmax: int) -> int:
    return lmax * (lmax + 3) // 2


@dataclass(frozen=True)
class AngularPowerSpectrum:
    """Variances ``C_l`` of the harmonic coefficients for ``l = 1 .. lmax``."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).copy()
        if values.ndim != 1 or values.size == 0:
            raise ValueError("spectrum must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError("nonpositive spectrum")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def lmax(self) -> int:
        return int(self.values.size)

    def __getitem__(self, l: int) -> float:
        if not 1 <= l <= self.lmax:
            raise IndexError(l)
        return float(self.values[l - 1])

    @classmethod
    def flat(cls, lmax: int, level: float = 1.0) -> "AngularPowerSpectrum":
        if lmax < 1:
            raise ValueError("lmax must be >= 1")
        return cls(np.full(lmax, float(level)))

    @classmethod
    def from_callable(cls, func, lmax: int) -> "AngularPowerSpectrum":
        l = np.arange(1, lmax + 1)
        return cls(np.asarray(func(l), dtype=float))


@dataclass(frozen=True)
class HarmonicCoefficients:
    """Triangular array of complex ``a_{l,m}``, ``l = 1 .. lmax``, ``m = 0 .. l``."""

    lmax: int
    data: np.ndarray

    def __post_init__(self):
        if int(self.lmax) < 1:
            raise ValueError("lmax must be >= 1")
        object.__setattr__(self, "lmax", int(self.lmax))
        data = np.array(self.data, dtype=complex)
        if data.shape != (packed_size(self.lmax),):
            raise ValueError(
                f"expected {packed_size(self.lmax)} packed entries for lmax={self.lmax}, got {data.shape}"
            )
        if np.any(data[self.m0_index()].imag != 0.0):
            raise ValueError("a_{l,0} must be real")
        if not np.all(np.isfinite(data)):
            raise ValueError("coefficients must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    # -- layout helpers -------------------------------------------------
    def m0_index(self) -> np.ndarray:
        return row_offset(np.arange(1, self.lmax + 1))

    def positive_m_index(self) -> np.ndarray:
        """Packed positions of all ``m >= 1`` entries, row by row."""
        return _positive_m_index(self.lmax)

    def row(self, l: int) -> np.ndarray:
        if not 1 <= l <= self.lmax:
            raise IndexError(l)
        start = row_offset(l)
        return self.data[start:start + l + 1]

    def __getitem__(self, lm: tuple[int, int]) -> complex:
        l, m = lm
        if not 0 <= abs(m) <= l:
            raise IndexError(lm)
        value = self.row(l)[abs(m)]
        if m < 0:
            return complex((-1) ** m * np.conj(value))
        return complex(value)

    @property
    def rows(self) -> list[np.ndarray]:
        return [self.row(l) for l in range(1, self.lmax + 1)]

    def positive_m_power(self) -> np.ndarray:
        """``|a_{l,m}|^2`` for ``m = 1 .. l``, concatenated over ``l``."""
        a = self.data[self.positive_m_index()]
        return a.real * a.real + a.imag * a.imag

    def scaled_rows(self, factors) -> "HarmonicCoefficients":
        """Multiply row ``l`` by ``factors[l-1]`` (must be positive)."""
        factors = np.asarray(factors, dtype=float)
        if factors.shape != (self.lmax,) or np.any(factors <= 0):
            raise ValueError("need one positive factor per row")
        per_entry = np.repeat(factors, np.arange(2, self.lmax + 2))
        return HarmonicCoefficients(self.lmax, self.data * per_entry)

    def truncated(self, lmax: int) -> "HarmonicCoefficients":
        if not 1 <= lmax <= self.lmax:
            raise ValueError("can only truncate to 1 <= lmax <= current lmax")
        return HarmonicCoefficients(lmax, self.data[: packed_size(lmax)])

    @classmethod
    def zeros(cls, lmax: int) -> "HarmonicCoefficients":
        return cls(lmax, np.zeros(packed_size(lmax), dtype=complex))

    @classmethod
    def from_rows(cls, rows) -> "HarmonicCoefficients":
        rows = [np.asarray(r, dtype=complex) for r in rows]
        for l, r in enumerate(rows, start=1):
            if r.shape != (l + 1,):
                raise ValueError(f"row l={l} must have {l + 1} entries")
        return cls(len(rows), np.concatenate(rows))


_POS_INDEX_CACHE: dict[int, np.ndarray] = {}


def _positive_m_index(lmax: int) -> np.ndarray:
    idx = _POS_INDEX_CACHE.get(lmax)
    if idx is None:
        l = np.repeat(np.arange(1, lmax + 1), np.arange(1, lmax + 1))
        m = np.arange(l.size) - (l * (l - 1)) // 2 + 1
        idx = (l - 1) * (l + 2) // 2 + m
        idx.setflags(write=False)
        _POS_INDEX_CACHE[lmax] = idx
    return idx


@dataclass(frozen=True)
class SphereGrid:
    """Gauss-Legendre nodes in ``cos(theta)`` times equispaced longitudes.

    ``theta_nodes`` are increasing colatitudes, so ``cos(theta_nodes)`` is
    decreasing. The polar weights integrate ``d cos(theta)`` over [-1, 1].
    """

    ntheta: int
    nphi: int
    theta_nodes: np.ndarray = field(init=False, repr=False)
    theta_weights: np.ndarray = field(init=False, repr=False)
    phi_nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.ntheta < 1 or self.nphi < 1:
            raise ValueError("grid needs at least one node in each direction")
        x, w = np.polynomial.legendre.leggauss(self.ntheta)
        # leggauss returns ascending x; flip so theta increases
        theta = np.arccos(x[::-1])
        for name, value in (
            ("theta_nodes", theta),
            ("theta_weights", w[::-1].copy()),
            ("phi_nodes", 2.0 * np.pi * np.arange(self.nphi) / self.nphi),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def cos_theta(self) -> np.ndarray:
        return np.cos(self.theta_nodes)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ntheta, self.nphi)

    def cell_weights(self) -> np.ndarray:
        """Area weights of each node; they sum to 4 pi."""
        return np.outer(self.theta_weights, np.full(self.nphi, 2.0 * np.pi / self.nphi))

    def unit_vectors(self) -> np.ndarray:
        """Cartesian unit vectors of the nodes, shape ``(ntheta, nphi, 3)``."""
        st = np.sin(self.theta_nodes)[:, None]
        ct = np.cos(self.theta_nodes)[:, None]
        return np.stack(
            np.broadcast_arrays(st * np.cos(self.phi_nodes), st * np.sin(self.phi_nodes), ct),
            axis=-1,
        )

    @classmethod
    def for_lmax(cls, lmax: int, oversample: int = 1) -> "SphereGrid":
        """Smallest grid on which band-limited analysis at ``lmax`` is exact, times ``oversample``."""
        return cls(oversample * (lmax + 1), oversample * (2 * lmax + 1))


@dataclass(frozen=True)
class FieldMap:
    grid: SphereGrid
    samples: np.ndarray
    imag_residue: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.shape != self.grid.shape:
            raise ValueError(f"samples shape {samples.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "samples", samples)

    def mean_square(self) -> float:
        """Area-averaged ``T^2`` over the sphere."""
        return float(np.sum(self.grid.cell_weights() * self.samples**2) / (4.0 * np.pi))


def simulate_gaussian_coeffs(spectrum: AngularPowerSpectrum, seed: SeedLike) -> HarmonicCoefficients:
    """Draw the coefficients of an isotropic Gaussian field.

    ``a_{l,0}`` is real ``N(0, C_l)``; for ``m >= 1`` the real and imaginary
    parts are independent ``N(0, C_l / 2)``, so ``E|a_{l,m}|^2 = C_l``.
    """
    if not isinstance(spectrum, AngularPowerSpectrum):
        spectrum = AngularPowerSpectrum(spectrum)
    lmax = spectrum.lmax
    rng = make_rng(seed)
    n = packed_size(lmax)
    re = rng.standard_normal(n)
    im = rng.standard_normal(n)
    counts = np.arange(2, lmax + 2)
    sd = np.repeat(np.sqrt(spectrum.values / 2.0), counts)
    m0 = row_offset(np.arange(1, lmax + 1))
    sd_re = sd.copy()
    sd_re[m0] = np.sqrt(spectrum.values)
    im[m0] = 0.0
    return HarmonicCoefficients(lmax, re * sd_re + 1j * (im * sd))


def estimate_spectrum(coeffs: HarmonicCoefficients) -> AngularPowerSpectrum:
    """Row means of ``|a_{l,m}|^2`` over ``m = 1 .. l`` (``m = 0`` is dropped)."""
    power = coeffs.positive_m_power()
    starts = np.concatenate(([0], np.cumsum(np.arange(1, coeffs.lmax))))
    sums = np.add.reduceat(power, starts)
    if np.any(sums <= 0):
        bad = int(np.flatnonzero(sums <= 0)[0]) + 1
        raise ValueError(f"degenerate row l={bad}: all m >= 1 coefficients are zero")
    return AngularPowerSpectrum(sums / np.arange(1, coeffs.lmax + 1))


def _legendre_m(m: int, lmax: int, x: np.ndarray) -> np.ndarray:
    """Normalized ``P_{l,m}(x) sqrt((2l+1)/4pi (l-m)!/(l+m)!)`` for ``l = m .. lmax``.

    Returns an array of shape ``(lmax - m + 1,) + x.shape``.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    out = np.empty((lmax - m + 1,) + x.shape)
    pmm = np.full(x.shape, np.sqrt(1.0 / (4.0 * np.pi)))
    for k in range(1, m + 1):
        pmm = -np.sqrt((2.0 * k + 1.0) / (2.0 * k)) * s * pmm
    out[0] = pmm
    if lmax == m:
        return out
    out[1] = np.sqrt(2.0 * m + 3.0) * x * pmm
    for l in range(m + 2, lmax + 1):
        a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
        b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
        out[l - m] = a * (x * out[l - m - 1] - b * out[l - m - 2])
    return out


LEGENDRE_CACHE_BYTES = 64 * 2**20


@lru_cache(maxsize=8)
def _cached_blocks(lmax: int, ntheta: int) -> tuple[np.ndarray, ...]:
    x = SphereGrid(ntheta, 1).cos_theta
    blocks = tuple(_legendre_m(m, lmax, x)[max(m, 1) - m:] for m in range(lmax + 1))
    for b in blocks:
        b.setflags(write=False)
    return blocks


def _legendre_blocks(lmax: int, grid: "SphereGrid"):
    """Yield ``(m, P[l, theta])`` for ``l = max(m, 1) .. lmax`` at the grid colatitudes.

    Tables for small grids are cached; large ones are recomputed per call.
    """
    if packed_size(lmax) * grid.ntheta * 8 <= LEGENDRE_CACHE_BYTES:
        yield from enumerate(_cached_blocks(lmax, grid.ntheta))
        return
    x = grid.cos_theta
    for m in range(lmax + 1):
        yield m, _legendre_m(m, lmax, x)[max(m, 1) - m:]


def eval_spherical_harmonic(l: int, m: int, theta, phi):
    """Orthonormal ``Y_{l,m}(theta, phi)`` for ``0 <= m <= l``.

    Works elementwise on broadcastable ``theta`` and ``phi``; scalars in give
    a Python complex out.
    """
    if l < 0 or m < 0 or m > l:
        raise ValueError(f"invalid degree/order (l={l}, m={m}); need 0 <= m <= l")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any((theta < 0) | (theta > np.pi)):
        raise ValueError("colatitude must lie in [0, pi]")
    plm = _legendre_m(m, l, np.cos(theta))[l - m]
    value = plm * np.exp(1j * m * phi)
    if value.ndim == 0:
        return complex(value)
    return value


def synthesize_map(coeffs: HarmonicCoefficients, grid: SphereGrid) -> FieldMap:
    """Evaluate ``sum_l sum_{|m|<=l} a_{lm} Y_{lm}`` at every grid node."""
    lmax = coeffs.lmax
    if grid.nphi < 2 * lmax + 1:
        raise ValueError("under-resolved longitude grid for synthesis (need nphi >= 2L+1)")
    spec = np.zeros((grid.ntheta, grid.nphi), dtype=complex)
    for m, p in _legendre_blocks(lmax, grid):
        lo = max(m, 1)
        a = coeffs.data[row_offset(np.arange(lo, lmax + 1)) + m]
        fm = a @ p
        spec[:, m] += fm
        if m > 0:
            spec[:, grid.nphi - m] += np.conj(fm)
    values = grid.nphi * np.fft.ifft(spec, axis=1)
    return FieldMap(grid, values.real.copy(), float(np.max(np.abs(values.imag), initial=0.0)))


def analyze_map(fmap: FieldMap, lmax: int) -> HarmonicCoefficients:
    """Quadrature inversion ``a_{lm} = int T conj(Y_{lm}) dOmega`` for ``l = 1 .. lmax``.

    Exact (to rounding) for maps band-limited at ``lmax`` when
    ``ntheta >= lmax + 1`` and ``nphi >= 2 lmax + 1``.
    """
    grid = fmap.grid
    if lmax < 1:
        raise ValueError("lmax must be >= 1")
    if grid.ntheta < lmax + 1 or grid.nphi < 2 * lmax + 1:
        raise ValueError(
            f"under-resolved quadrature: grid {grid.shape} cannot resolve lmax={lmax} "
            f"(need ntheta >= {lmax + 1}, nphi >= {2 * lmax + 1})"
        )
    ft = np.fft.rfft(fmap.samples, axis=1) * (2.0 * np.pi / grid.nphi)
    ft *= grid.theta_weights[:, None]
    out = np.zeros(packed_size(lmax), dtype=complex)
    for m, p in _legendre_blocks(lmax, grid):
        lo = max(m, 1)
        vals = p @ ft[:, m]
        out[row_offset(np.arange(lo, lmax + 1)) + m] = vals
    m0 = row_offset(np.arange(1, lmax + 1))
    out[m0] = out[m0].real
    return HarmonicCoefficients(lmax, out)
