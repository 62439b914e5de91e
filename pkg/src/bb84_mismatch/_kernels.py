"""Compiled hot path for the optimizer.

The derivative-free search evaluates the analytic observables tens of
millions of times per sweep, so the inner computation is jitted.  The code
here mirrors the readable implementation in :mod:`bb84_mismatch.attack`
operation for operation (same ``expm1`` forms, same accumulation order); a
unit test keeps the two paths in agreement.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _overlap(rotated_pol: int, det: int, fidelity: float) -> float:
    if rotated_pol >> 1 != det >> 1:
        return 0.25
    if det == rotated_pol:
        return fidelity / 2.0
    return (1.0 - fidelity) / 2.0


@njit(cache=True)
def _click(intensity: float, dark: float, model_id: int) -> float:
    if model_id == 0:  # clamped additive form
        return min(1.0, dark - math.expm1(-intensity))
    return dark + (1.0 - dark) * -math.expm1(-intensity)


@njit(cache=True)
def observables_core(
    mu: np.ndarray,
    f: np.ndarray,
    fidelity: float,
    eta: np.ndarray,
    dark: np.ndarray,
    coef: np.ndarray,
    p_none: float,
    policy: np.ndarray,
    rot: np.ndarray,
    model_id: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-polarization sifted rates and error rates of a generalized strategy."""
    # Angle-mixed sift and outcome probabilities per resent polarization and
    # rotation step: GB[q, t, pair] and GO[q, t, detector].
    GB = np.zeros((4, 4, 2))
    GO = np.zeros((4, 4, 4))
    for q in range(4):
        for k in range(4):
            fqk = f[q, k]
            if fqk == 0.0:
                continue
            m = mu[q, k]
            for t in range(4):
                rq = rot[q, t]
                p0 = _click(m * _overlap(rq, 0, fidelity) * eta[0, k], dark[0], model_id)
                p1 = _click(m * _overlap(rq, 1, fidelity) * eta[1, k], dark[1], model_id)
                p2 = _click(m * _overlap(rq, 2, fidelity) * eta[2, k], dark[2], model_id)
                p3 = _click(m * _overlap(rq, 3, fidelity) * eta[3, k], dark[3], model_id)
                GB[q, t, 0] += fqk * ((1.0 - p2) * (1.0 - p3) * (p0 + p1 - p0 * p1))
                GB[q, t, 1] += fqk * ((1.0 - p0) * (1.0 - p1) * (p2 + p3 - p2 * p3))
                GO[q, t, 0] += fqk * ((p0 - p0 * p1 / 2.0) * (1.0 - p2) * (1.0 - p3))
                GO[q, t, 1] += fqk * ((p1 - p1 * p0 / 2.0) * (1.0 - p2) * (1.0 - p3))
                GO[q, t, 2] += fqk * ((p2 - p2 * p3 / 2.0) * (1.0 - p0) * (1.0 - p1))
                GO[q, t, 3] += fqk * ((p3 - p3 * p2 / 2.0) * (1.0 - p0) * (1.0 - p1))
    rate = np.zeros(4)
    err = np.zeros(4)
    for j in range(4):
        for t in range(4):
            w = policy[t]
            if w == 0.0:
                continue
            b = rot[j, t] >> 1
            e = rot[j ^ 1, t]
            o = e ^ 1
            x = 2 * b
            acc_r = 0.0
            acc_e = 0.0
            for q in range(4):
                acc_r += coef[j, q] * GB[q, t, b]
                acc_e += coef[j, q] * GO[q, t, e]
            acc_r += p_none * (dark[x] + dark[x + 1] - dark[x] * dark[x + 1])
            acc_e += p_none * (dark[e] - dark[e] * dark[o] / 2.0)
            rate[j] += w * acc_r
            err[j] += w * acc_e
    return rate, err


@njit(cache=True)
def strategy_from_params(
    x: np.ndarray, restricted: bool, log_lo: float, log_hi: float
) -> tuple[np.ndarray, np.ndarray]:
    """Map unconstrained search coordinates to (mu, f) tables.

    Restricted: 4 log-intensities on the diagonal, identity angle rows.
    Generalized: 16 log-intensities followed by 12 angle logits (the fourth
    logit of each row is pinned to zero), mapped through exponential
    normalization onto the simplex.  Log-intensities are clipped to bounds.
    """
    mu = np.zeros((4, 4))
    f = np.zeros((4, 4))
    if restricted:
        for q in range(4):
            z = x[q]
            if z < log_lo:
                z = log_lo
            if z > log_hi:
                z = log_hi
            mu[q, q] = math.exp(z)
            f[q, q] = 1.0
        return mu, f
    for q in range(4):
        for k in range(4):
            z = x[4 * q + k]
            if z < log_lo:
                z = log_lo
            if z > log_hi:
                z = log_hi
            mu[q, k] = math.exp(z)
    for q in range(4):
        l0 = x[16 + 3 * q]
        l1 = x[16 + 3 * q + 1]
        l2 = x[16 + 3 * q + 2]
        l3 = 0.0
        m = max(max(l0, l1), max(l2, l3))
        e0 = math.exp(l0 - m)
        e1 = math.exp(l1 - m)
        e2 = math.exp(l2 - m)
        e3 = math.exp(l3 - m)
        s = e0 + e1 + e2 + e3
        f[q, 0] = e0 / s
        f[q, 1] = e1 / s
        f[q, 2] = e2 / s
        f[q, 3] = e3 / s
    return mu, f


@njit(cache=True)
def observables_from_params(
    x: np.ndarray,
    restricted: bool,
    fidelity: float,
    eta: np.ndarray,
    dark: np.ndarray,
    coef: np.ndarray,
    p_none: float,
    policy: np.ndarray,
    rot: np.ndarray,
    model_id: int,
    log_lo: float,
    log_hi: float,
) -> tuple[np.ndarray, np.ndarray]:
    mu, f = strategy_from_params(x, restricted, log_lo, log_hi)
    return observables_core(mu, f, fidelity, eta, dark, coef, p_none, policy, rot, model_id)


@njit(cache=True)
def penalized_objective(
    x: np.ndarray,
    restricted: bool,
    fidelity: float,
    eta: np.ndarray,
    dark: np.ndarray,
    coef: np.ndarray,
    p_none: float,
    policy: np.ndarray,
    rot: np.ndarray,
    model_id: int,
    log_lo: float,
    log_hi: float,
    targets: np.ndarray,
    resid_scale: float,
    per_channel: bool,
    weight: float,
) -> float:
    """QBER plus a quadratic penalty on rate residuals relative to the baseline.

    Residuals are normalized by the honest rate so the penalty schedule keeps
    the same bite at every channel loss.  A zero total rate scores as QBER 1.
    """
    rate, err = observables_from_params(
        x, restricted, fidelity, eta, dark, coef, p_none, policy, rot, model_id, log_lo, log_hi
    )
    rate_total = (rate[0] + rate[1] + rate[2] + rate[3]) / 4.0
    err_total = (err[0] + err[1] + err[2] + err[3]) / 4.0
    if rate_total > 0.0:
        value = err_total / rate_total
    else:
        value = 1.0
    pen = 0.0
    if per_channel:
        for j in range(4):
            rel = (rate[j] - targets[j]) / resid_scale
            pen += rel * rel
    else:
        rel = (rate_total - targets[0]) / resid_scale
        pen = rel * rel
    return value + weight * pen
