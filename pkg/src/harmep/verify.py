"""Named self-checks against closed forms and Monte Carlo oracles.

``quick`` mode runs only deterministic closed-form checks. ``full`` mode
adds the Monte Carlo suites (spacings laws, density bound, moment decay,
p-value uniformity).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, stats

from . import oracles
from .empirical import bias_b, bias_b_l, limit_covariance, spacings_transform
from .harmonics import (
    AngularPowerSpectrum,
    HarmonicCoefficients,
    SphereGrid,
    analyze_map,
    eval_spherical_harmonic,
    packed_size,
    row_offset,
    simulate_gaussian_coeffs,
    synthesize_map,
)
from .seeding import make_rng, seed_sequence

__all__ = ["CheckResult", "run_checks", "QUICK_CHECKS", "FULL_CHECKS", "simplex_box_integral", "row_spacings"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def simplex_box_integral(l: int, a1: float, a2: float) -> float:
    """``P{xi_1 <= a1, xi_2 <= a2}`` by numerical integration of the pair density.

    For ``l >= 3`` the pair ``(xi_1, xi_2)`` has density
    ``(l-1)(l-2)(1-x-y)^(l-3)`` on the triangle ``x + y <= 1``; for ``l = 2``
    the second spacing is ``1 - xi_1``.
    """
    if l == 2:
        return float(integrate.quad(lambda x: 1.0 if 1.0 - x <= a2 else 0.0, 0.0, a1, points=[max(1.0 - a2, 0.0)])[0])
    c = (l - 1) * (l - 2)
    val, _ = integrate.dblquad(
        lambda y, x: c * max(1.0 - x - y, 0.0) ** (l - 3),
        0.0,
        a1,
        0.0,
        lambda x: min(a2, 1.0 - x),
        epsabs=1e-12,
        epsrel=1e-12,
    )
    return float(val)


def row_spacings(l: int, n: int, seed, k: int = 1) -> np.ndarray:
    """``xi_{l,1..k}`` from ``n`` simulated coefficient arrays via the spacings transform.

    Rows below ``l`` hold constant filler so only row ``l`` is random.
    """
    out = np.empty((n, k))
    template = np.ones(packed_size(l), dtype=complex)
    start = row_offset(l)
    for i in range(n):
        rng = make_rng(seed_sequence(seed, "row-spacings", l, i))
        data = template.copy()
        data[start] = rng.standard_normal()
        data[start + 1:] = (rng.standard_normal(l) + 1j * rng.standard_normal(l)) / np.sqrt(2.0)
        xi, _ = spacings_transform(HarmonicCoefficients(l, data))
        out[i] = xi.row(l)[:k]
    return out


def dkw_epsilon(n: int, confidence: float = 0.99) -> float:
    return float(np.sqrt(np.log(2.0 / (1.0 - confidence)) / (2.0 * n)))


# -- closed-form checks -------------------------------------------------

def _check_marginal_value():
    v = oracles.spacing_marginal_cdf(3, 0.5)
    return abs(v - 0.75) < 1e-15, f"P(xi_31 <= 0.5) = {v}"


def _check_joint_vs_integration():
    worst = 0.0
    for l in range(2, 7):
        for a1 in (0.1, 0.35, 0.6, 0.9):
            for a2 in (0.2, 0.5, 0.8):
                worst = max(worst, abs(oracles.spacing_joint_cdf(l, a1, a2) - simplex_box_integral(l, a1, a2)))
    return worst <= 1e-6, f"max |joint cdf - simplex integral| = {worst:.2e} (l <= 6)"


def _check_joint_marginal():
    worst = max(
        abs(oracles.spacing_joint_cdf(l, a, 1.0) - oracles.spacing_marginal_cdf(l, a))
        for l in (2, 5, 50)
        for a in np.linspace(0, 1, 11)
    )
    return worst < 1e-14, f"max |F(a, 1) - F(a)| = {worst:.1e}"


def _check_q_measure():
    worst = 0.0
    for a1, a2 in ((0.0, 0.5), (0.1, 0.9), (0.3, 0.99), (0.5, 1.0 - 1e-4)):
        num, _ = integrate.quad(lambda y: 1.0 + abs(np.log1p(-y)), a1, a2, epsabs=1e-13, epsrel=1e-13, limit=200)
        worst = max(worst, abs(num - oracles.q_measure(a1, a2)))
    return worst <= 1e-10, f"max |antiderivative - quadrature| = {worst:.1e}"


def _check_bias_identity():
    worst = 0.0
    alpha = np.linspace(0.0, 0.99, 100)
    for l in (2, 10, 500):
        a_l = np.minimum(-np.log1p(-alpha) / l, 1.0)
        rhs = l * (oracles.spacing_marginal_cdf(l, a_l) - alpha)
        worst = max(worst, float(np.max(np.abs(bias_b_l(alpha, l) - rhs))))
    return worst < 1e-10, f"max |b_l - l(F(a_l) - a)| = {worst:.1e}"


def _check_bias_zero():
    v = bias_b(-np.expm1(-2.0))
    return v == 0.0 or abs(v) < 1e-15, f"b(1 - e^-2) = {v!r}"


def _check_bias_gap():
    g2, g4 = oracles.bias_sup_gap(100), oracles.bias_sup_gap(10_000)
    return g4 < 5e-3 and g4 < g2, f"gap(l=1e2) = {g2:.2e}, gap(l=1e4) = {g4:.2e}"


def _check_limit_psd():
    a = np.linspace(0.02, 0.98, 25)
    r = np.linspace(0.1, 1.0, 8)
    A, R = np.meshgrid(a, r)
    A, R = A.ravel(), R.ravel()
    cov = limit_covariance(A[:, None], R[:, None], A[None, :], R[None, :])
    sym = float(np.max(np.abs(cov - cov.T)))
    low = float(np.linalg.eigvalsh(cov)[0])
    return sym == 0.0 and low >= -1e-10, f"asymmetry {sym:.1e}, min eigenvalue {low:.2e}"


def _check_roundtrip():
    coeffs = simulate_gaussian_coeffs(AngularPowerSpectrum.flat(16), 11)
    back = analyze_map(synthesize_map(coeffs, SphereGrid.for_lmax(16)), 16)
    err = float(np.max(np.abs(back.data - coeffs.data)))
    return err <= 1e-10, f"max roundtrip error at L=16: {err:.1e}"


def _check_orthonormality():
    grid = SphereGrid.for_lmax(8)
    th, ph = np.meshgrid(grid.theta_nodes, grid.phi_nodes, indexing="ij")
    w = grid.cell_weights().ravel()
    basis = np.array([eval_spherical_harmonic(l, m, th, ph).ravel() for l in range(9) for m in range(l + 1)])
    gram = (basis * w) @ basis.conj().T
    err = float(np.max(np.abs(gram - np.eye(len(basis)))))
    return err <= 1e-10, f"max |Gram - I| (l <= 8) = {err:.1e}"


# -- Monte Carlo checks -------------------------------------------------

def _check_marginal_dkw():
    parts, ok = [], True
    for l, n in ((10, 2000), (100, 2000), (2000, 500)):
        xi = np.sort(row_spacings(l, n, 101)[:, 0])
        ecdf_hi = np.arange(1, n + 1) / n
        ecdf_lo = np.arange(0, n) / n
        f = oracles.spacing_marginal_cdf(l, xi)
        d = float(max(np.max(np.abs(ecdf_hi - f)), np.max(np.abs(ecdf_lo - f))))
        eps = dkw_epsilon(n)
        ok &= d <= eps
        parts.append(f"l={l}: D={d:.4f} (band {eps:.4f})")
    return ok, "; ".join(parts)


def _check_joint_mc():
    l, n = 100, 20000
    xi = row_spacings(l, n, 202, k=2)
    worst = 0.0
    for a1 in (0.005, 0.01, 0.03):
        for a2 in (0.005, 0.01, 0.03):
            p = oracles.spacing_joint_cdf(l, a1, a2)
            phat = float(np.mean((xi[:, 0] <= a1) & (xi[:, 1] <= a2)))
            se = np.sqrt(max(p * (1 - p), 1e-12) / n)
            worst = max(worst, abs(phat - p) / se)
    return worst <= 4.0, f"max |z| over 3x3 grid at l=100: {worst:.2f}"


def _check_density_bound():
    parts, ok = [], True
    for l in (2, 1000):
        res = oracles.y_density_bound_check(l, 1_000_000, seed_sequence(303, l))
        ok &= res.passes() and abs(res.integral - 1.0) < 0.01
        parts.append(f"l={l}: max={res.max_density:.3f} (se {res.max_se:.3f})")
    return ok, "; ".join(parts) + f"; bound 1.05 e^2 = {1.05 * np.e**2:.3f}"


DECAY_INTERVALS = ((0.1, 0.3), (0.4, 0.6), (0.2, 0.5), (0.6, 0.9))


def _check_covariance_decay():
    res = {l: oracles.covariance_decay_check(l, DECAY_INTERVALS, 400_000, seed_sequence(404, l)) for l in (50, 200, 1000)}
    ok = True
    parts = []
    for order in (2, 3, 4):
        base = abs(res[50].exact[order])
        for l, r in res.items():
            ok &= abs(r.mc[order] - r.exact[order]) <= 4.0 * r.se[order]
            ok &= abs(r.exact[order]) <= 10.0 * base + 1e-15
        parts.append(f"order {order}: " + ", ".join(f"l={l} {abs(r.exact[order]):.2e}" for l, r in res.items()))
    return ok, "; ".join(parts)


def _check_pvalue_uniformity():
    from .testing import calibrate_null, gaussianity_test

    cal = calibrate_null(50, 400, seed=505)
    ps = [
        gaussianity_test(simulate_gaussian_coeffs(AngularPowerSpectrum.flat(50), seed_sequence(506, i)), cal).p_value
        for i in range(400)
    ]
    res = stats.kstest(ps, "uniform")
    return res.pvalue > 0.001, f"KS vs uniform: D={res.statistic:.3f}, p={res.pvalue:.3f}"


QUICK_CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "spacing-marginal-closed-form": _check_marginal_value,
    "spacing-joint-vs-simplex-integration": _check_joint_vs_integration,
    "spacing-joint-marginal-consistency": _check_joint_marginal,
    "q-measure-antiderivative": _check_q_measure,
    "bias-finite-l-identity": _check_bias_identity,
    "bias-zero-at-1-minus-e-2": _check_bias_zero,
    "bias-finite-l-convergence": _check_bias_gap,
    "limit-covariance-psd": _check_limit_psd,
    "harmonic-roundtrip": _check_roundtrip,
    "harmonic-orthonormality": _check_orthonormality,
}

FULL_CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    **QUICK_CHECKS,
    "spacing-marginal-dkw": _check_marginal_dkw,
    "spacing-joint-monte-carlo": _check_joint_mc,
    "y-density-bound": _check_density_bound,
    "moment-decay": _check_covariance_decay,
    "p-value-uniformity": _check_pvalue_uniformity,
}


def run_checks(quick: bool = False, only: list[str] | None = None) -> list[CheckResult]:
    suite = QUICK_CHECKS if quick else FULL_CHECKS
    names = list(suite) if not only else only
    results = []
    for name in names:
        if name not in FULL_CHECKS:
            raise KeyError(f"unknown check {name!r}")
        try:
            passed, detail = FULL_CHECKS[name]()
        except Exception as exc:  # a crashing check is a failed check
            passed, detail = False, f"error: {type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed), detail))
    return results
