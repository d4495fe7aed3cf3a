"""Finite-L empirical processes on the rows of a harmonic coefficient array.

All constructions drop the ``m = 0`` coefficient and work on the ``l``
values ``m = 1 .. l`` of each row. Two row transforms are provided:

* :func:`smirnov_transform` uses a known spectrum, ``u = 1 - exp(-|a|^2 / C_l)``;
* :func:`spacings_transform` uses the row mean instead, which turns the row
  into normalized uniform spacings ``xi`` and ``y = 1 - exp(-l xi)``.

Processes are indexed ``(alpha, r)`` throughout and sampled on an explicit
:class:`ProcessGrid`; field values are stored as a matrix with ``r`` on the
first axis.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .harmonics import AngularPowerSpectrum, HarmonicCoefficients

__all__ = [
    "TriangularUnitArray",
    "SimplexArray",
    "ProcessGrid",
    "ProcessField",
    "smirnov_transform",
    "spacings_transform",
    "spacings_rows",
    "row_process",
    "integrated_process",
    "bias_b",
    "bias_b_l",
    "corrected_process",
    "limit_covariance",
    "degree_count",
]

SIMPLEX_TOL = 1e-12


def _row_starts(lmax: int) -> np.ndarray:
    l = np.arange(1, lmax + 1)
    return l * (l - 1) // 2


class _Triangular:
    """Flat storage for rows ``l = 1 .. L`` of length ``l``."""

    def __init__(self, lmax: int, values):
        lmax = int(lmax)
        if lmax < 1:
            raise ValueError("lmax must be >= 1")
        values = np.array(values, dtype=float)
        if values.shape != (lmax * (lmax + 1) // 2,):
            raise ValueError(f"expected {lmax * (lmax + 1) // 2} values for lmax={lmax}")
        values.setflags(write=False)
        self.lmax = lmax
        self.values = values

    def row(self, l: int) -> np.ndarray:
        if not 1 <= l <= self.lmax:
            raise IndexError(l)
        start = l * (l - 1) // 2
        return self.values[start:start + l]

    @property
    def rows(self) -> list[np.ndarray]:
        return [self.row(l) for l in range(1, self.lmax + 1)]

    def degrees(self) -> np.ndarray:
        """Degree ``l`` of every stored value."""
        return np.repeat(np.arange(1, self.lmax + 1), np.arange(1, self.lmax + 1))

    @classmethod
    def from_rows(cls, rows):
        rows = [np.asarray(r, dtype=float) for r in rows]
        for l, r in enumerate(rows, start=1):
            if r.shape != (l,):
                raise ValueError(f"row l={l} must have {l} entries")
        return cls(len(rows), np.concatenate(rows))

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and self.lmax == other.lmax
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"{type(self).__name__}(lmax={self.lmax})"


class TriangularUnitArray(_Triangular):
    """Rows of values in [0, 1] (``u_lm`` or ``y_lm``)."""

    def __init__(self, lmax: int, values):
        super().__init__(lmax, values)
        if np.any((self.values < 0) | (self.values > 1)) or np.any(np.isnan(self.values)):
            raise ValueError("unit-array values must lie in [0, 1]")


class SimplexArray(_Triangular):
    """Rows of non-negative weights summing to one (``xi_lm``)."""

    def __init__(self, lmax: int, values):
        super().__init__(lmax, values)
        if np.any(self.values < 0):
            raise ValueError("simplex weights must be non-negative")
        sums = np.add.reduceat(self.values, _row_starts(self.lmax))
        if np.any(np.abs(sums - 1.0) > SIMPLEX_TOL):
            raise ValueError("simplex rows must sum to one")


@dataclass(frozen=True)
class ProcessGrid:
    """Evaluation points: ``alphas`` in [0, 1], ``rs`` in (0, 1], both strictly increasing."""

    alphas: np.ndarray
    rs: np.ndarray

    def __post_init__(self):
        alphas = np.array(self.alphas, dtype=float, ndmin=1)
        rs = np.array(self.rs, dtype=float, ndmin=1)
        if alphas.ndim != 1 or rs.ndim != 1 or alphas.size == 0 or rs.size == 0:
            raise ValueError("grid axes must be non-empty 1-d sequences")
        if np.any(np.diff(alphas) <= 0) or np.any(np.diff(rs) <= 0):
            raise ValueError("grid axes must be strictly increasing")
        if alphas[0] < 0 or alphas[-1] > 1:
            raise ValueError("alphas must lie in [0, 1]")
        if rs[0] <= 0 or rs[-1] > 1:
            raise ValueError("rs must lie in (0, 1]")
        for name, value in (("alphas", alphas), ("rs", rs)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rs.size, self.alphas.size)

    @classmethod
    def regular(cls, n_alpha: int, n_r: int) -> "ProcessGrid":
        """``n_alpha`` interior equispaced alphas and ``r = 1/n_r, ..., 1``."""
        return cls(np.arange(1, n_alpha + 1) / (n_alpha + 1), np.arange(1, n_r + 1) / n_r)

    @classmethod
    def degree_steps(cls, lmax: int, alphas) -> "ProcessGrid":
        """Every ``r = l / L`` breakpoint of a degree-``L`` partial-sum process."""
        return cls(alphas, np.arange(1, lmax + 1) / lmax)

    def describe(self) -> str:
        return f"{self.alphas.size}x{self.rs.size}"


@dataclass(frozen=True)
class ProcessField:
    grid: ProcessGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", values)

    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_csv(self, path) -> None:
        """Write ``r,alpha,value`` rows, ``r`` outer and ``alpha`` inner."""
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["r", "alpha", "value"])
            for i, r in enumerate(self.grid.rs):
                for j, a in enumerate(self.grid.alphas):
                    writer.writerow([repr(float(r)), repr(float(a)), repr(float(self.values[i, j]))])

    @classmethod
    def from_csv(cls, path) -> "ProcessField":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["r", "alpha", "value"]:
                raise ValueError(f"unexpected process-field header {header}")
            rows = np.array([[float(x) for x in rec] for rec in reader])
        rs = np.unique(rows[:, 0])
        alphas = np.unique(rows[:, 1])
        if rows.shape[0] != rs.size * alphas.size:
            raise ValueError("process-field file is not a full grid")
        return cls(ProcessGrid(alphas, rs), rows[:, 2].reshape(rs.size, alphas.size))


def smirnov_transform(coeffs: HarmonicCoefficients, spectrum: AngularPowerSpectrum) -> TriangularUnitArray:
    """``u_lm = 1 - exp(-|a_lm|^2 / C_l)`` for ``m = 1 .. l``."""
    if not isinstance(spectrum, AngularPowerSpectrum):
        spectrum = AngularPowerSpectrum(spectrum)
    if spectrum.lmax < coeffs.lmax:
        raise ValueError("spectrum shorter than coefficient array")
    power = coeffs.positive_m_power()
    c = np.repeat(spectrum.values[: coeffs.lmax], np.arange(1, coeffs.lmax + 1))
    return TriangularUnitArray(coeffs.lmax, -np.expm1(-power / c))


def spacings_transform(coeffs: HarmonicCoefficients) -> tuple[SimplexArray, TriangularUnitArray]:
    """Normalized spacings ``xi_lm`` and ``y_lm = 1 - exp(-l xi_lm)`` of each row.

    Multiplying a row by a power of two leaves both outputs bit-identical;
    other positive factors change them only at rounding level.
    """
    lmax = coeffs.lmax
    power = coeffs.positive_m_power()
    sums = np.add.reduceat(power, _row_starts(lmax))
    if np.any(sums <= 0):
        bad = int(np.flatnonzero(sums <= 0)[0]) + 1
        raise ValueError(f"degenerate row l={bad}: all m >= 1 coefficients are zero")
    l = np.arange(1, lmax + 1)
    xi, y = _spacings(power, np.repeat(sums, l), np.repeat(l, l))
    return SimplexArray(lmax, xi), TriangularUnitArray(lmax, y)


def _spacings(power, total, l):
    xi = power / total
    return xi, -np.expm1(-l * xi)


def spacings_rows(power: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spacings of a batch of same-degree rows.

    ``power[..., m-1] = |a_lm|^2`` for ``m = 1 .. l``. Agrees with
    :func:`spacings_transform` row by row up to the rounding of the row
    sum, without building full triangular arrays.
    """
    power = np.asarray(power, dtype=float)
    total = power.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("degenerate row: all m >= 1 coefficients are zero")
    return _spacings(power, total, power.shape[-1])


def row_process(values, alpha):
    """``l^{-1/2} (#{v <= alpha} - l alpha)`` for one row of length ``l``.

    ``alpha`` may be a scalar or an array; the result has the same shape.
    """
    v = np.sort(np.asarray(values, dtype=float))
    a = np.asarray(alpha, dtype=float)
    if np.any((a < 0) | (a > 1)):
        raise ValueError("alpha must lie in [0, 1]")
    l = v.size
    counts = np.searchsorted(v, a, side="right")
    out = (counts - l * a) / np.sqrt(l)
    if out.ndim == 0:
        return float(out)
    return out


def degree_count(lmax: int, r) -> np.ndarray:
    """``floor(L r)``, tolerant of the rounding in ``r = k / L``."""
    r = np.asarray(r, dtype=float)
    return np.floor(lmax * r + 1e-9).astype(np.int64)


def _row_process_table(rows: TriangularUnitArray, alphas: np.ndarray) -> np.ndarray:
    """``G_l(alpha_j)`` for every row, shape ``(L, n_alpha)``."""
    table = np.empty((rows.lmax, alphas.size))
    for l in range(1, rows.lmax + 1):
        v = np.sort(rows.row(l))
        table[l - 1] = (np.searchsorted(v, alphas, side="right") - l * alphas) / np.sqrt(l)
    return table


def integrated_process(rows: TriangularUnitArray, grid: ProcessGrid) -> ProcessField:
    """``L^{-1/2} sum_{l <= floor(L r)} G_l(alpha)`` on the grid."""
    lmax = rows.lmax
    table = _row_process_table(rows, grid.alphas)
    partial = np.vstack([np.zeros(grid.alphas.size), np.cumsum(table, axis=0)]) / np.sqrt(lmax)
    k = degree_count(lmax, grid.rs)
    return ProcessField(grid, partial[k])


def _xlogx_terms(alpha):
    """``(x log x, x log^2 x)`` at ``x = 1 - alpha`` with both set to 0 at ``x = 0``."""
    x = 1.0 - np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.log(x)
        xt = np.where(x > 0, x * t, 0.0)
        xt2 = np.where(x > 0, x * t * t, 0.0)
    return xt, xt2


def bias_b(alpha):
    """Asymptotic row bias ``(1-alpha) log(1-alpha) + (1/2)(1-alpha) log^2(1-alpha)``."""
    a = np.asarray(alpha, dtype=float)
    if np.any((a < 0) | (a > 1)):
        raise ValueError("alpha must lie in [0, 1]")
    xt, xt2 = _xlogx_terms(a)
    out = xt + 0.5 * xt2
    if out.ndim == 0:
        return float(out)
    return out


def bias_b_l(alpha, l: int):
    """Finite-degree bias ``l E{1(xi_l1 <= -log(1-alpha)/l) - alpha}``.

    For ``1 + log(1-alpha)/l > 0`` this is
    ``l {1 - (1 + log(1-alpha)/l)^(l-1) - alpha}``. Past that point the
    indicator is always one and the value saturates to ``l (1 - alpha)``;
    that branch also covers ``l = 1``, where ``xi_11 = 1``.
    """
    if l < 1:
        raise ValueError("degree must be >= 1")
    a = np.asarray(alpha, dtype=float)
    if np.any((a < 0) | (a > 1)):
        raise ValueError("alpha must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        base = 1.0 + np.log1p(-a) / l
    safe = np.where(base > 0, base, 1.0)
    inside = l * (1.0 - safe ** (l - 1) - a)
    out = np.where(base > 0, inside, l * (1.0 - a))
    out = np.where(a == 0, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def corrected_process(rows: TriangularUnitArray, grid: ProcessGrid) -> ProcessField:
    """Bias-corrected field ``K_hat_L(alpha, r) - 2 sqrt(r) b(alpha)``.

    ``rows`` should be the ``y`` output of :func:`spacings_transform`.
    """
    hat = integrated_process(rows, grid)
    surface = 2.0 * np.sqrt(grid.rs)[:, None] * bias_b(grid.alphas)[None, :]
    return ProcessField(grid, hat.values - surface)


def limit_covariance(alpha1, r1, alpha2, r2):
    """Covariance of the limiting bias-corrected field at two points.

    ``(r1 ^ r2) [(a1 ^ a2)(1 - a1 v a2) - (1-a1)(1-a2) log(1-a1) log(1-a2)]``,
    broadcasting over array arguments.
    """
    a1, a2, r1, r2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (alpha1, alpha2, r1, r2)))
    for v in (a1, a2, r1, r2):
        if np.any((v < 0) | (v > 1)):
            raise ValueError("arguments must lie in [0, 1]")
    h1, _ = _xlogx_terms(a1)
    h2, _ = _xlogx_terms(a2)
    out = np.minimum(r1, r2) * (np.minimum(a1, a2) * (1.0 - np.maximum(a1, a2)) - h1 * h2)
    if out.ndim == 0:
        return float(out)
    return out
