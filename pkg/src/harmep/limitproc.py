"""Sampling the limiting bias-corrected Gaussian field on a grid.

The limit covariance factorizes as

    Cov(K*(a1, r1), K*(a2, r2)) = min(r1, r2) * c(a1, a2),

so on a product grid the covariance matrix is the Kronecker product
``C_r (x) C_alpha`` and ``L_r (x) L_alpha`` is its Cholesky factor. A draw is
``L_r Z L_alpha^T`` for a standard normal matrix ``Z`` of grid shape; the
full ``n_r n_alpha`` square factor is never formed unless asked for.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .empirical import ProcessField, ProcessGrid, limit_covariance
from .parallel import run_indexed
from .seeding import SeedLike, make_rng, seed_sequence
from .testing import DEFAULT_LEVELS, CalibrationTable

__all__ = [
    "GaussianFieldSampler",
    "build_sampler",
    "sample_field",
    "sup_samples",
    "limit_quantiles",
    "default_limit_grid",
    "JITTER_START",
    "JITTER_MAX",
]

JITTER_START = 1e-12
JITTER_MAX = 1e-6
BASE_ALPHA_POINTS = 128
BASE_R_POINTS = 64


def default_limit_grid(refine: int = 1) -> ProcessGrid:
    """Interior grid ``alpha = i / (129 f)``, ``r = j / (64 f)``.

    ``refine = 1`` gives 128 alphas by 64 r-values. The grid for ``f`` is
    contained in the grid for ``2 f``, at every second index on both axes
    starting from the second, so a sampled refined field restricts exactly
    to the coarser one.
    """
    if refine < 1:
        raise ValueError("refine must be >= 1")
    na = (BASE_ALPHA_POINTS + 1) * refine
    nr = BASE_R_POINTS * refine
    return ProcessGrid(np.arange(1, na) / na, np.arange(1, nr + 1) / nr)


def _cholesky_with_jitter(cov: np.ndarray, start: float, cap: float) -> tuple[np.ndarray, float]:
    n = cov.shape[0]
    jitter = start
    while True:
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            jitter = jitter * 10.0 if jitter > 0 else JITTER_START
            if jitter > cap * (1 + 1e-12):
                raise np.linalg.LinAlgError("covariance not PSD on grid") from None


@dataclass(frozen=True)
class GaussianFieldSampler:
    """Cholesky factors of the limit covariance on a product grid.

    ``alpha_factor @ alpha_factor.T = C_alpha + jitter * I`` and
    ``r_factor @ r_factor.T = C_r``. The implied field covariance is
    ``C_r (x) (C_alpha + jitter I)``, which differs from the target plus
    ``jitter * I`` by at most ``jitter`` per entry.
    """

    grid: ProcessGrid
    alpha_factor: np.ndarray = field(repr=False)
    r_factor: np.ndarray = field(repr=False)
    jitter: float

    def alpha_covariance(self) -> np.ndarray:
        a = self.grid.alphas
        return limit_covariance(a[:, None], 1.0, a[None, :], 1.0)

    def r_covariance(self) -> np.ndarray:
        r = self.grid.rs
        return np.minimum(r[:, None], r[None, :])

    def covariance(self) -> np.ndarray:
        """Target covariance over the flattened grid, ``r`` outer."""
        return np.kron(self.r_covariance(), self.alpha_covariance())

    @property
    def factor(self) -> np.ndarray:
        """Lower-triangular square factor over the flattened grid (materialized)."""
        return np.kron(self.r_factor, self.alpha_factor)

    def reconstruction_residual(self) -> float:
        """``max |factor factor^T - (covariance + jitter I)|`` without forming the full matrices."""
        cr = self.r_covariance()
        dr = self.r_factor @ self.r_factor.T
        da = self.alpha_factor @ self.alpha_factor.T
        ca = self.alpha_covariance()
        # (dr (x) da) - (cr (x) ca) - jitter I, blockwise over the r indices
        worst = 0.0
        n_a = ca.shape[0]
        eye = np.eye(n_a)
        for i in range(cr.shape[0]):
            block = dr[i][:, None, None] * da[None] - cr[i][:, None, None] * ca[None]
            block[i] -= self.jitter * eye
            worst = max(worst, float(np.max(np.abs(block))))
        return worst

    def draw(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Field values of shape ``grid.shape``, or ``(size,) + grid.shape``."""
        shape = self.grid.shape if size is None else (size,) + self.grid.shape
        z = rng.standard_normal(shape)
        return self.r_factor @ z @ self.alpha_factor.T


def build_sampler(grid: ProcessGrid, jitter: float = JITTER_START, max_jitter: float = JITTER_MAX) -> GaussianFieldSampler:
    """Factor the limit covariance on ``grid``.

    Jitter starts at ``jitter`` and grows tenfold until the factorization
    succeeds, up to ``max_jitter``.

    Raises
    ------
    ValueError
        If any grid point lies on ``alpha = 0`` or ``alpha = 1``, where the
        covariance degenerates.
    numpy.linalg.LinAlgError
        "covariance not PSD on grid" if no jitter up to the cap works.
    """
    if grid.alphas[0] <= 0.0 or grid.alphas[-1] >= 1.0:
        raise ValueError("limit sampler needs interior alphas in (0, 1)")
    if jitter < 0 or max_jitter < jitter:
        raise ValueError("need 0 <= jitter <= max_jitter")
    a = grid.alphas
    ca = limit_covariance(a[:, None], 1.0, a[None, :], 1.0)
    la, used = _cholesky_with_jitter(ca, jitter, max_jitter)
    r = grid.rs
    lr = np.linalg.cholesky(np.minimum(r[:, None], r[None, :]))
    for m in (la, lr):
        m.setflags(write=False)
    return GaussianFieldSampler(grid=grid, alpha_factor=la, r_factor=lr, jitter=used)


def sample_field(sampler: GaussianFieldSampler, seed: SeedLike) -> ProcessField:
    """One draw of the limit field on the sampler's grid."""
    return ProcessField(sampler.grid, sampler.draw(make_rng(seed)))


def _sup_replicate(index: int, *, sampler: GaussianFieldSampler, seed: int, subsets: tuple) -> np.ndarray:
    values = np.abs(sampler.draw(make_rng(seed_sequence(seed, "limit", index))))
    return np.array([values[sl].max() for sl in subsets])


def sup_samples(
    sampler: GaussianFieldSampler,
    n_reps: int,
    seed: int,
    *,
    subsets: Sequence[tuple[slice, slice]] = ((slice(None), slice(None)),),
    workers: int | None = None,
) -> np.ndarray:
    """``sup |field|`` per replication, shape ``(n_reps, len(subsets))``.

    Each entry of ``subsets`` selects a sub-grid ``(r slice, alpha slice)``
    of the same draw, which couples sups on nested grids.
    """
    func = partial(_sup_replicate, sampler=sampler, seed=int(seed), subsets=tuple(subsets))
    return np.asarray(run_indexed(func, range(int(n_reps)), workers))


def limit_quantiles(
    grid: ProcessGrid | None = None,
    n_reps: int = 2000,
    levels: Sequence[float] = DEFAULT_LEVELS,
    seed: int = 0,
    *,
    workers: int | None = None,
) -> CalibrationTable:
    """Upper quantiles of ``sup |K*|`` over ``grid`` under the limit law."""
    if int(n_reps) < 1:
        raise ValueError("n_reps must be >= 1")
    grid = default_limit_grid() if grid is None else grid
    sampler = build_sampler(grid)
    sups = sup_samples(sampler, n_reps, seed, workers=workers)[:, 0]
    return CalibrationTable.from_samples(
        sups,
        levels,
        lmax="limit",
        seed=int(seed),
        grid=f"limit law on {grid.describe()} grid",
        statistic="ks",
    )
