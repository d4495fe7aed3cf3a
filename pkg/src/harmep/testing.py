"""Test statistics over the bias-corrected field, null calibration, and power.

The default statistic is the Kolmogorov-Smirnov type sup

    S_L = sup_{alpha, r} |K*_L(alpha, r)|,

computed exactly by :mod:`harmep._supkernel`. A Cramer-von Mises type grid
integral is provided as a second statistic. Both depend on the coefficients
only through the spacings rows, so they are invariant to any positive
per-row rescaling and their null law does not involve the spectrum.

Null critical values are Monte Carlo order statistics. Every replication
draws from its own labelled random stream, so a calibration is a pure
function of ``(L, n_reps, seed, statistic)`` regardless of worker count or
resumption from a checkpoint.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Mapping, Sequence

import numpy as np

from ._supkernel import AUX_POINTS, exact_sup
from ._version import __version__
from .empirical import ProcessField, ProcessGrid, TriangularUnitArray, corrected_process, spacings_transform
from .harmonics import AngularPowerSpectrum, HarmonicCoefficients, simulate_gaussian_coeffs
from .parallel import run_indexed
from .seeding import seed_sequence

if TYPE_CHECKING:
    from .alternatives import AlternativeSpec

__all__ = [
    "DEFAULT_LEVELS",
    "DEFAULT_N_REPS",
    "CalibrationTable",
    "TestReport",
    "PowerTable",
    "CalibrationMismatch",
    "ks_statistic",
    "cvm_statistic",
    "cvm_functional",
    "null_statistics",
    "statistic_from_rows",
    "upper_quantile",
    "calibrate_null",
    "gaussianity_test",
    "power_study",
]

DEFAULT_LEVELS = (0.10, 0.05, 0.01)
DEFAULT_N_REPS = 2000
CVM_ALPHA_POINTS = 1024
EXACT_SUP_GRID = f"exact sup: all jumps, r-step endpoints, {AUX_POINTS}-point auxiliary alpha grid"


class CalibrationMismatch(ValueError):
    """A finite-L calibration was applied to data of a different degree."""


# -- statistics ---------------------------------------------------------

def _ks_from_rows(y: TriangularUnitArray) -> float:
    return exact_sup(y.values, y.degrees(), y.lmax)


def _cvm_from_rows(y: TriangularUnitArray, n_alpha: int = CVM_ALPHA_POINTS) -> float:
    lmax = y.lmax
    grid = ProcessGrid(np.linspace(0.0, 1.0, n_alpha), np.arange(1, lmax + 1) / lmax)
    return cvm_functional(corrected_process(y, grid))


def cvm_functional(process: ProcessField) -> float:
    """Trapezoid rule in ``alpha`` and equal weights over ``r`` of ``process^2``."""
    sq = process.values**2
    return float(np.mean(np.trapezoid(sq, process.grid.alphas, axis=1)))


_STATISTICS: dict[str, Callable[[TriangularUnitArray], float]] = {
    "ks": _ks_from_rows,
    "cvm": _cvm_from_rows,
}


def statistic_from_rows(y: TriangularUnitArray, statistic: str = "ks") -> float:
    """Evaluate a named statistic on spacings rows ``y``."""
    try:
        func = _STATISTICS[statistic]
    except KeyError:
        raise ValueError(f"unknown statistic {statistic!r}; choose from {sorted(_STATISTICS)}") from None
    return func(y)


def ks_statistic(coeffs: HarmonicCoefficients) -> float:
    """Exact ``sup |K*_L(alpha, r)|`` over ``[0, 1] x (0, 1]``.

    In ``r`` the field is a step function in the partial-sum index plus a
    bias term monotone in ``sqrt(r)``, so both ends of each degree step are
    evaluated. In ``alpha`` the candidates are both one-sided limits at every
    jump ``y_lm``, the stationary points of the smooth part, and a fixed
    1024-point auxiliary grid.

    Raises
    ------
    ValueError
        If any row has no nonzero ``m >= 1`` coefficient.
    """
    _, y = spacings_transform(coeffs)
    return _ks_from_rows(y)


def cvm_statistic(coeffs: HarmonicCoefficients, n_alpha: int = CVM_ALPHA_POINTS) -> float:
    """Grid integral of ``K*_L^2``.

    Trapezoidal weights on ``n_alpha`` equispaced points of [0, 1] and
    weight ``1/L`` on each ``r = k/L``, ``k = 1 .. L``.
    """
    if n_alpha < 2:
        raise ValueError("need at least two alpha points")
    _, y = spacings_transform(coeffs)
    return _cvm_from_rows(y, n_alpha)


# -- calibration tables -------------------------------------------------

def upper_quantile(sorted_samples: np.ndarray, level: float) -> float:
    """Order statistic of rank ``ceil(n (1 - level))`` (1-based).

    Warns when ``level < 1 / (n + 1)``, where the tail is beyond what ``n``
    draws can resolve.
    """
    n = sorted_samples.size
    if n == 0:
        raise ValueError("no samples")
    if not 0.0 < level < 1.0:
        raise ValueError("levels must lie in (0, 1)")
    if level < 1.0 / (n + 1):
        warnings.warn(
            f"quantile outside resolvable range: level {level} with {n} replications",
            RuntimeWarning,
            stacklevel=3,
        )
    # small guard so n (1 - level) landing on an integer is not bumped up by rounding
    k = min(max(math.ceil(n * (1.0 - level) - 1e-9), 1), n)
    return float(sorted_samples[k - 1])


@dataclass(frozen=True)
class CalibrationTable:
    """Critical values of a statistic's null law, with provenance.

    ``levels`` are upper-tail probabilities, kept in decreasing order, so
    ``thresholds`` are nondecreasing along the tuple. ``lmax`` is the
    degree of a finite-L calibration or the string ``"limit"``.
    ``samples`` holds the sorted replicate statistics when available.
    """

    levels: tuple[float, ...]
    thresholds: tuple[float, ...]
    lmax: int | str
    n_reps: int
    seed: int | None
    grid: str
    statistic: str = "ks"
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)
    code_version: str = __version__

    def __post_init__(self):
        levels = tuple(float(x) for x in self.levels)
        thresholds = tuple(float(x) for x in self.thresholds)
        if len(levels) != len(thresholds) or not levels:
            raise ValueError("need one threshold per level")
        if any(not 0.0 < a < 1.0 for a in levels):
            raise ValueError("levels must lie in (0, 1)")
        order = sorted(range(len(levels)), key=lambda i: -levels[i])
        levels = tuple(levels[i] for i in order)
        thresholds = tuple(thresholds[i] for i in order)
        if len(set(levels)) != len(levels):
            raise ValueError("duplicate levels")
        if any(t2 < t1 for t1, t2 in zip(thresholds, thresholds[1:])):
            raise ValueError("thresholds must be nonincreasing in level")
        if not (self.lmax == "limit" or (isinstance(self.lmax, (int, np.integer)) and self.lmax >= 1)):
            raise ValueError("lmax must be a positive integer or 'limit'")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "thresholds", thresholds)
        if self.samples is not None:
            s = np.sort(np.asarray(self.samples, dtype=float))
            if s.size != self.n_reps:
                raise ValueError("stored samples must have n_reps entries")
            s.setflags(write=False)
            object.__setattr__(self, "samples", s)

    @property
    def is_limit(self) -> bool:
        return self.lmax == "limit"

    def threshold(self, level: float) -> float:
        for a, t in zip(self.levels, self.thresholds):
            if math.isclose(a, level, rel_tol=0, abs_tol=1e-12):
                return t
        raise KeyError(f"level {level} not in calibration {self.levels}")

    def p_value(self, value: float) -> float:
        """Monte Carlo p-value ``(1 + #{s >= value}) / (1 + n)``.

        Without stored samples, returns the smallest stored level that
        rejects, or 1, which bounds the p-value from above.
        """
        if self.samples is not None:
            n_ge = self.samples.size - int(np.searchsorted(self.samples, value, side="left"))
            return (1.0 + n_ge) / (1.0 + self.samples.size)
        rejected = [a for a, t in zip(self.levels, self.thresholds) if value > t]
        return min(rejected, default=1.0)

    def provenance(self) -> dict:
        return {
            "lmax": self.lmax,
            "n_reps": self.n_reps,
            "seed": self.seed,
            "grid": self.grid,
            "statistic": self.statistic,
            "code_version": self.code_version,
        }

    @classmethod
    def from_samples(cls, samples, levels, **meta) -> "CalibrationTable":
        s = np.sort(np.asarray(samples, dtype=float))
        thresholds = [upper_quantile(s, a) for a in levels]
        return cls(levels=tuple(levels), thresholds=tuple(thresholds), n_reps=s.size, samples=s, **meta)


# -- null calibration ---------------------------------------------------

def _null_replicate(index: int, *, lmax: int, seed: int, statistic: str) -> float:
    coeffs = simulate_gaussian_coeffs(AngularPowerSpectrum.flat(lmax), seed_sequence(seed, "null", lmax, index))
    _, y = spacings_transform(coeffs)
    return statistic_from_rows(y, statistic)


def null_statistics(
    lmax: int,
    n_reps: int,
    seed: int,
    statistic: str = "ks",
    *,
    start: int = 0,
    workers: int | None = None,
) -> np.ndarray:
    """Null replicates ``start .. start + n_reps - 1`` in index order."""
    func = partial(_null_replicate, lmax=lmax, seed=seed, statistic=statistic)
    return np.asarray(run_indexed(func, range(start, start + n_reps), workers), dtype=float)


def _load_checkpoint(path: Path, meta: dict) -> np.ndarray:
    with np.load(path, allow_pickle=False) as data:
        stored = json.loads(str(data["meta"]))
        if stored != meta:
            raise ValueError(f"checkpoint {path} was written for a different run: {stored}")
        return np.array(data["values"], dtype=float)


def _save_checkpoint(path: Path, meta: dict, values: np.ndarray) -> None:
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, meta=np.array(json.dumps(meta, sort_keys=True)), values=values)
    os.replace(tmp, path)


def calibrate_null(
    lmax: int,
    n_reps: int = DEFAULT_N_REPS,
    levels: Sequence[float] = DEFAULT_LEVELS,
    seed: int = 0,
    *,
    statistic: str = "ks",
    workers: int | None = None,
    checkpoint: str | os.PathLike | None = None,
    chunk: int = 250,
) -> CalibrationTable:
    """Monte Carlo null critical values of ``statistic`` at degree ``lmax``.

    Replications use the flat spectrum ``C_l = 1``; by scale invariance the
    choice does not affect the statistic's law.

    Parameters
    ----------
    checkpoint
        Optional ``.npz`` path. Completed replicates are saved after every
        ``chunk`` of them and an interrupted run resumes from the file. The
        final table is identical to an uninterrupted run.
    """
    if int(lmax) < 1:
        raise ValueError("lmax must be >= 1")
    if int(n_reps) < 1:
        raise ValueError("n_reps must be >= 1")
    if statistic not in _STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}")
    lmax, n_reps = int(lmax), int(n_reps)
    meta = {"lmax": lmax, "seed": int(seed), "statistic": statistic, "version": __version__}
    values = np.empty(0)
    path = Path(checkpoint) if checkpoint is not None else None
    if path is not None and path.exists():
        values = _load_checkpoint(path, meta)[:n_reps]
    while values.size < n_reps:
        todo = min(chunk, n_reps - values.size) if path is not None else n_reps - values.size
        new = null_statistics(lmax, todo, seed, statistic, start=values.size, workers=workers)
        values = np.concatenate([values, new])
        if path is not None:
            _save_checkpoint(path, meta, values)
    return CalibrationTable.from_samples(
        values,
        levels,
        lmax=lmax,
        seed=int(seed),
        grid=EXACT_SUP_GRID if statistic == "ks" else f"{CVM_ALPHA_POINTS} alphas x {lmax} r-steps",
        statistic=statistic,
    )


# -- decision procedure -------------------------------------------------

@dataclass(frozen=True)
class TestReport:
    """Outcome of one Gaussianity test.

    ``reject[level]`` is true exactly when ``value > thresholds[level]``.
    """

    __test__ = False  # not a pytest class

    statistic_name: str
    value: float
    thresholds: Mapping[float, float]
    p_value: float
    reject: Mapping[float, bool]
    lmax: int
    calibration: Mapping[str, object]
    seed: int | None = None
    limit_approximation: bool = False

    def __post_init__(self):
        if not 0.0 < self.p_value <= 1.0:
            raise ValueError("p-value must lie in (0, 1]")
        for a, t in self.thresholds.items():
            if self.reject[a] != (self.value > t):
                raise ValueError("reject flags inconsistent with thresholds")

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic_name,
            "value": self.value,
            "lmax": self.lmax,
            "p_value": self.p_value,
            "levels": [
                {"level": a, "threshold": self.thresholds[a], "reject": self.reject[a]}
                for a in self.thresholds
            ],
            "limit_approximation": self.limit_approximation,
            "seed": self.seed,
            "calibration": dict(self.calibration),
        }

    def to_text(self) -> str:
        lines = [
            f"statistic  {self.statistic_name} = {self.value:.6f}   (L = {self.lmax})",
            f"p-value    {self.p_value:.4f}",
            f"{'level':>8}  {'threshold':>10}  reject",
        ]
        lines += [f"{a:8.3f}  {self.thresholds[a]:10.6f}  {'yes' if self.reject[a] else 'no'}" for a in self.thresholds]
        if self.limit_approximation:
            lines.append("note: thresholds come from the limit law, not a degree-matched calibration")
        return "\n".join(lines)


def gaussianity_test(
    coeffs: HarmonicCoefficients,
    calibration: CalibrationTable,
    *,
    seed: int | None = None,
) -> TestReport:
    """Compare the observed statistic with calibrated critical values.

    A finite-L calibration must match ``coeffs.lmax``. A limit-law
    calibration is accepted for any degree; the report flags that the
    thresholds are then asymptotic.

    Raises
    ------
    CalibrationMismatch
        Finite-L calibration at a different degree.
    """
    if not calibration.is_limit and calibration.lmax != coeffs.lmax:
        raise CalibrationMismatch(
            f"calibration is for L={calibration.lmax} but data have L={coeffs.lmax}; "
            "recalibrate or use a limit-law calibration"
        )
    _, y = spacings_transform(coeffs)
    value = statistic_from_rows(y, calibration.statistic)
    thresholds = dict(zip(calibration.levels, calibration.thresholds))
    return TestReport(
        statistic_name=calibration.statistic,
        value=value,
        thresholds=thresholds,
        p_value=calibration.p_value(value),
        reject={a: value > t for a, t in thresholds.items()},
        lmax=coeffs.lmax,
        calibration=calibration.provenance(),
        seed=seed,
        limit_approximation=calibration.is_limit,
    )


# -- power --------------------------------------------------------------

@dataclass(frozen=True)
class PowerTable:
    """Rejection frequencies per ``(png, level)``."""

    png_values: tuple[float, ...]
    levels: tuple[float, ...]
    rates: np.ndarray  # shape (n_png, n_levels)
    n_reps: int
    lmax: int
    seed: int
    alternative: Mapping[str, object]

    def rate(self, png: float, level: float) -> float:
        i = self.png_values.index(png)
        j = self.levels.index(level)
        return float(self.rates[i, j])

    def records(self) -> list[tuple[float, float, float]]:
        return [
            (p, a, float(self.rates[i, j]))
            for i, p in enumerate(self.png_values)
            for j, a in enumerate(self.levels)
        ]


def _power_replicate(index: int, *, spec, png_values, lmax, seed, statistic, thresholds) -> np.ndarray:
    from .alternatives import png_sweep

    out = np.empty((len(png_values), len(thresholds)), dtype=bool)
    draws = png_sweep(spec, png_values, lmax, seed_sequence(seed, "power", index))
    for i, coeffs in enumerate(draws):
        _, y = spacings_transform(coeffs)
        out[i] = statistic_from_rows(y, statistic) > thresholds
    return out


def power_study(
    alternative: "AlternativeSpec",
    png_values: Sequence[float],
    lmax: int,
    n_reps: int,
    calibration: CalibrationTable,
    seed: int,
    *,
    workers: int | None = None,
) -> PowerTable:
    """Rejection frequency of the calibrated test under an alternative.

    Replication ``i`` uses the same random stream at every ``png`` value
    (common random numbers), so only the mixture weight differs along the
    sweep. At ``png = 0`` the data are exactly the Gaussian component.
    """
    if not calibration.is_limit and calibration.lmax != lmax:
        raise CalibrationMismatch(f"calibration is for L={calibration.lmax}, power study uses L={lmax}")
    png_values = tuple(float(p) for p in png_values)
    thresholds = np.asarray(calibration.thresholds)
    func = partial(
        _power_replicate,
        spec=alternative,
        png_values=png_values,
        lmax=int(lmax),
        seed=int(seed),
        statistic=calibration.statistic,
        thresholds=thresholds,
    )
    hits = np.asarray(run_indexed(func, range(int(n_reps)), workers))
    return PowerTable(
        png_values=png_values,
        levels=calibration.levels,
        rates=hits.mean(axis=0),
        n_reps=int(n_reps),
        lmax=int(lmax),
        seed=int(seed),
        alternative=alternative.to_dict(),
    )
