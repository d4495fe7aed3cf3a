"""Exact supremum of ``|K*_L(alpha, r)|`` over the unit square.

For fixed ``k = floor(L r)`` the bias-corrected field is

    K*(alpha, r) = S_k(alpha) - c_k alpha - 2 sqrt(r) b(alpha),

where ``S_k`` is a right-continuous step function with upward jumps at the
``y`` values of rows ``l <= k`` and ``c_k = L^{-1/2} sum_{l<=k} sqrt(l)``.
It is monotone in ``sqrt(r)`` on ``[k/L, (k+1)/L)``, so only the two ends of
each degree step matter. In ``alpha`` the candidates are both one-sided
limits at every jump, plus the stationary points of the smooth part between
jumps. Those solve a quadratic in ``log(1 - alpha)`` and depend only on ``L``.
A fixed auxiliary grid on [0, 1] is swept as well.

The sweep visits events in increasing ``alpha`` and keeps the vector
``S_k`` up to date. A jump of row ``l`` only touches ``k >= l``, so one
replication costs about ``L^3 / 6`` updates.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numba import njit

AUX_POINTS = 1024
AUX_EVENT = -1


@njit(cache=True)
def _bias(a):
    if a <= 0.0 or a >= 1.0:
        return 0.0
    x = 1.0 - a
    t = np.log(x)
    return x * t + 0.5 * x * t * t


@njit(cache=True, fastmath=True)
def _jump_update(S, c, mid, half, a, b, wl, lo, nl):
    """Max over ``k >= lo`` of both one-sided limits at a jump, then apply the jump."""
    hw = 0.5 * wl
    ab = abs(b)
    m = 0.0
    for k in range(lo, nl):
        m = max(m, abs(S[k] - c[k] * a - mid[k] * b + hw) + half[k] * ab)
        S[k] += wl
    return m + hw


@njit(cache=True)
def _sweep(jump_alpha, jump_row, ev_alpha, ev_code, ev_s, lmax):
    nl = lmax + 1
    S = np.zeros(nl)
    c = np.zeros(nl)
    w = np.zeros(nl)
    mid = np.zeros(nl)
    half = np.zeros(nl)
    for l in range(1, nl):
        w[l] = 1.0 / np.sqrt(l * lmax)
        c[l] = c[l - 1] + np.sqrt(l / lmax)
    for k in range(nl):
        lo = 2.0 * np.sqrt(k / lmax)
        hi = 2.0 * np.sqrt(min(k + 1, lmax) / lmax)
        mid[k] = 0.5 * (lo + hi)
        half[k] = 0.5 * (hi - lo)

    best = 0.0
    nj = jump_alpha.shape[0]
    ne = ev_alpha.shape[0]
    i = 0
    j = 0
    while i < nj or j < ne:
        # jumps first on ties so static events see the right-continuous value
        if j >= ne or (i < nj and jump_alpha[i] <= ev_alpha[j]):
            a = jump_alpha[i]
            l = jump_row[i]
            best = max(best, _jump_update(S, c, mid, half, a, _bias(a), w[l], l, nl))
            i += 1
        else:
            a = ev_alpha[j]
            b = _bias(a)
            code = ev_code[j]
            if code == AUX_EVENT:
                ab = abs(b)
                for k in range(nl):
                    z = abs(S[k] - c[k] * a - mid[k] * b) + half[k] * ab
                    if z > best:
                        best = z
            else:
                z = abs(S[code] - c[code] * a - ev_s[j] * b)
                if z > best:
                    best = z
            j += 1
    return best


@lru_cache(maxsize=16)
def static_events(lmax: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Auxiliary grid plus smooth-part stationary points, sorted by alpha.

    Between jumps, ``d/dalpha [-c alpha - s b(alpha)] = 0`` with
    ``t = log(1 - alpha)`` reads ``t^2 + 4 t + 2 - 2 c / s = 0``.
    """
    alphas = [np.linspace(0.0, 1.0, AUX_POINTS)]
    codes = [np.full(AUX_POINTS, AUX_EVENT, dtype=np.int64)]
    svals = [np.zeros(AUX_POINTS)]
    l = np.arange(1, lmax + 1)
    c = np.concatenate(([0.0], np.cumsum(np.sqrt(l / lmax))))
    crit_a, crit_k, crit_s = [], [], []
    for k in range(lmax + 1):
        for step in (k, min(k + 1, lmax)):
            if step == 0:
                continue
            s = 2.0 * np.sqrt(step / lmax)
            disc = np.sqrt(2.0 + 2.0 * c[k] / s)
            for t in (-2.0 - disc, -2.0 + disc):
                if t < 0.0:
                    crit_a.append(-np.expm1(t))
                    crit_k.append(k)
                    crit_s.append(s)
    alphas.append(np.asarray(crit_a))
    codes.append(np.asarray(crit_k, dtype=np.int64))
    svals.append(np.asarray(crit_s))
    a = np.concatenate(alphas)
    order = np.argsort(a, kind="stable")
    out = (a[order], np.concatenate(codes)[order], np.concatenate(svals)[order])
    for arr in out:
        arr.setflags(write=False)
    return out


def exact_sup(y: np.ndarray, degrees: np.ndarray, lmax: int) -> float:
    """``sup |K*_L|`` for flat spacings values ``y`` with row labels ``degrees``."""
    order = np.argsort(y)
    ev_alpha, ev_code, ev_s = static_events(lmax)
    return float(
        _sweep(
            np.ascontiguousarray(y[order], dtype=np.float64),
            np.ascontiguousarray(degrees[order], dtype=np.int64),
            ev_alpha,
            ev_code,
            ev_s,
            lmax,
        )
    )
