"""Closed-form null laws and bounds used as independent checks.

Under the null each row ``(xi_l1, ..., xi_ll)`` is uniform on the simplex
(Dirichlet with unit parameters). Its joint survival function is

    P{xi_1 > x_1, ..., xi_k > x_k} = (1 - x_1 - ... - x_k)_+^(l-1),

from which the marginal and pairwise CDFs and every box probability
follow by inclusion-exclusion. Monte Carlo checks draw spacings directly as
normalized exponentials, independently of the harmonic pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .empirical import bias_b, bias_b_l
from .seeding import SeedLike, make_rng

__all__ = [
    "spacing_marginal_cdf",
    "spacing_joint_cdf",
    "spacing_survival",
    "y_to_xi",
    "y_box_probability",
    "y_central_moment",
    "q_measure",
    "sample_leading_spacings",
    "DensityCheck",
    "y_density_bound_check",
    "DecayCheck",
    "covariance_decay_check",
    "bias_sup_gap",
]


def _check_alpha(*alphas):
    for a in alphas:
        if np.any((np.asarray(a) < 0) | (np.asarray(a) > 1)):
            raise ValueError("alpha must lie in [0, 1]")


def spacing_marginal_cdf(l: int, alpha):
    """``P{xi_l1 <= alpha} = 1 - (1 - alpha)^(l-1)``.

    For ``l = 1`` the spacing is identically 1, so the CDF is 0 below 1 and 1 at 1.
    """
    if l < 1:
        raise ValueError("degree must be >= 1")
    _check_alpha(alpha)
    a = np.asarray(alpha, dtype=float)
    if l == 1:
        out = np.where(a >= 1.0, 1.0, 0.0)
    else:
        out = 1.0 - (1.0 - a) ** (l - 1)
    return float(out) if out.ndim == 0 else out


def spacing_survival(l: int, xs) -> float:
    """``P{xi_i > x_i for all i}`` for the first ``len(xs)`` spacings of row ``l``."""
    xs = np.asarray(xs, dtype=float)
    if xs.size > l:
        raise ValueError("cannot take more spacings than the row has")
    s = 1.0 - float(np.sum(xs))
    if s <= 0.0:
        return 0.0
    return s ** (l - 1)


def spacing_joint_cdf(l: int, alpha1, alpha2) -> float:
    """``P{xi_l1 <= a1, xi_l2 <= a2}``.

    ``1 - (1-a1)^(l-1) - (1-a2)^(l-1) + (1-a1-a2)_+^(l-1)``: the last term is
    dropped when ``a1 + a2 > 1``, outside the simplex support.
    """
    if l < 2:
        raise ValueError("joint law needs l >= 2")
    _check_alpha(alpha1, alpha2)
    # sorted so the result is exactly symmetric in the arguments
    a1, a2 = sorted((float(alpha1), float(alpha2)))
    value = 1.0 - (1.0 - a1) ** (l - 1) - (1.0 - a2) ** (l - 1) + max(1.0 - a1 - a2, 0.0) ** (l - 1)
    return min(max(value, 0.0), 1.0)


def y_to_xi(y, l: int):
    """Invert ``y = 1 - exp(-l xi)``."""
    return -np.log1p(-np.asarray(y, dtype=float)) / l


def y_box_probability(l: int, intervals: Sequence[tuple[float, float]]) -> float:
    """``P{a_i <= y_li <= b_i, i = 1..k}`` for distinct indices, exactly.

    Inclusion-exclusion over the ``2^k`` corners of the box in
    ``xi``-space, using the joint survival function.
    """
    lo = [float(y_to_xi(a, l)) for a, _ in intervals]
    hi = [float(y_to_xi(b, l)) for _, b in intervals]
    total = 0.0
    for corner in product((0, 1), repeat=len(intervals)):
        # P{lo < xi <= hi} = S(lo) - S(hi) per coordinate
        xs = [hi[i] if c else lo[i] for i, c in enumerate(corner)]
        total += (-1) ** sum(corner) * spacing_survival(l, xs)
    return total


def y_central_moment(l: int, intervals: Sequence[tuple[float, float]]) -> float:
    """``E prod_i (1{y_li in I_i} - p_i)`` over distinct indices, exactly."""
    k = len(intervals)
    p = [y_box_probability(l, [iv]) for iv in intervals]
    total = 0.0
    for subset in product((0, 1), repeat=k):
        chosen = [intervals[i] for i in range(k) if subset[i]]
        joint = y_box_probability(l, chosen) if chosen else 1.0
        rest = np.prod([-p[i] for i in range(k) if not subset[i]])
        total += joint * rest
    return float(total)


def q_measure(alpha1, alpha2):
    """``int_{alpha1}^{alpha2} (1 + |log(1 - y)|) dy`` in closed form.

    The antiderivative is ``2 y + (1 - y) log(1 - y)``.
    """
    _check_alpha(alpha1, alpha2)

    def anti(y):
        y = np.asarray(y, dtype=float)
        x = 1.0 - y
        with np.errstate(divide="ignore", invalid="ignore"):
            xlog = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)
        return 2.0 * y + xlog

    out = anti(alpha2) - anti(alpha1)
    return float(out) if np.ndim(out) == 0 else out


def sample_leading_spacings(l: int, k: int, n: int, seed: SeedLike) -> np.ndarray:
    """First ``k`` spacings of ``n`` uniform simplex draws in dimension ``l``.

    Uses ``xi_i = E_i / (E_1 + ... + E_k + G)`` with ``E_i`` standard
    exponential and ``G ~ Gamma(l - k)``, which needs memory ``O(n k)``
    rather than ``O(n l)``.
    """
    if not 1 <= k <= l:
        raise ValueError("need 1 <= k <= l")
    rng = make_rng(seed)
    e = rng.standard_exponential((n, k))
    rest = rng.standard_gamma(l - k, n) if l > k else np.zeros(n)
    return e / (e.sum(axis=1) + rest)[:, None]


@dataclass(frozen=True)
class DensityCheck:
    """Histogram estimate of the marginal density of ``y_l1``."""

    l: int
    max_density: float
    max_se: float
    integral: float
    bound: float = float(np.e**2)

    def passes(self, slack_factor: float = 1.05, n_sigma: float = 3.0) -> bool:
        return self.max_density <= slack_factor * self.bound + n_sigma * self.max_se


def y_density_bound_check(l: int, n_samples: int, seed: SeedLike, n_bins: int = 200) -> DensityCheck:
    """Maximum of a histogram density estimate of ``y_l1`` under the null.

    Bins cover the support ``[0, 1 - e^{-l}]``. ``max_se`` is the binomial
    standard error at the maximizing bin.
    """
    if l < 2:
        raise ValueError("density bound applies for l >= 2")
    xi = sample_leading_spacings(l, 1, n_samples, seed)[:, 0]
    y = -np.expm1(-l * xi)
    edges = np.linspace(0.0, -np.expm1(-l), n_bins + 1)
    counts, _ = np.histogram(y, bins=edges)
    width = np.diff(edges)
    dens = counts / (n_samples * width)
    j = int(np.argmax(dens))
    p = counts[j] / n_samples
    se = np.sqrt(p * (1 - p) / n_samples) / width[j]
    return DensityCheck(l=l, max_density=float(dens[j]), max_se=float(se), integral=float(np.sum(dens * width)))


@dataclass(frozen=True)
class DecayCheck:
    """Scaled mixed central moments of interval indicators on distinct spacings.

    Orders 2, 3 and 4 are scaled by ``l``, ``l`` and ``l^2``. ``mc`` and
    ``se`` are signed Monte Carlo estimates and their standard errors;
    ``exact`` holds the signed closed-form values.
    """

    l: int
    mc: dict
    se: dict
    exact: dict

    def scaled_abs(self) -> dict:
        """Monte Carlo ``l^k |moment|`` per order."""
        return {k: abs(v) for k, v in self.mc.items()}


def covariance_decay_check(
    l: int,
    intervals: Sequence[tuple[float, float]],
    n_samples: int,
    seed: SeedLike,
) -> DecayCheck:
    """Estimate ``l |Cov|``, ``l |3-point moment|`` and ``l^2 |4-point moment|``.

    ``intervals`` gives four ``y``-intervals applied to ``y_l1 .. y_l4``;
    the 2- and 3-point moments use the first two and three of them. Every
    endpoint must be at most ``1 - l^{-3/2}``.
    """
    intervals = [tuple(map(float, iv)) for iv in intervals]
    if len(intervals) != 4:
        raise ValueError("need four intervals")
    if l < 5:
        raise ValueError("need l >= 5")
    cap = 1.0 - l ** -1.5
    for a, b in intervals:
        if not 0.0 <= a < b <= cap:
            raise ValueError(f"interval endpoints must satisfy 0 <= a < b <= 1 - l^(-3/2) = {cap}")
    xi = sample_leading_spacings(l, 4, n_samples, seed)
    y = -np.expm1(-l * xi)
    ind = np.stack([(y[:, i] >= a) & (y[:, i] <= b) for i, (a, b) in enumerate(intervals)], axis=1).astype(float)
    p = np.array([y_box_probability(l, [iv]) for iv in intervals])
    centred = ind - p
    scale = {2: l, 3: l, 4: l * l}
    mc, se, exact = {}, {}, {}
    for order in (2, 3, 4):
        prod_ = np.prod(centred[:, :order], axis=1)
        mc[order] = scale[order] * float(prod_.mean())
        se[order] = scale[order] * float(prod_.std(ddof=1) / np.sqrt(n_samples))
        exact[order] = scale[order] * y_central_moment(l, intervals[:order])
    return DecayCheck(l=l, mc=mc, se=se, exact=exact)


def bias_sup_gap(l: int, n_grid: int = 20001) -> float:
    """``max |b_l(alpha) - b(alpha)|`` over a grid of ``[0, 1 - l^{-3/2}]``."""
    alpha = np.linspace(0.0, 1.0 - l ** -1.5, n_grid)
    return float(np.max(np.abs(bias_b_l(alpha, l) - bias_b(alpha))))
