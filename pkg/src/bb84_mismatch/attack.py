"""Sifted-key rates and error rates under faked-state attacks.

Eve intercepts each of Alice's pulses, measures it in a random basis, and
resends a bright faked state toward Bob.  Her measurement is abstracted by
three probabilities: ``p_correct`` (her outcome equals Alice's polarization),
``p_wrong`` (the orthogonal outcome), and ``p_noncompat`` (each of the two
conjugate-basis outcomes); with the remaining probability she detects nothing
and sends nothing, leaving only dark counts.

Given her outcome ``q`` she resends ``q``-polarized light.  In the restricted
strategy the pulse always travels at ``q``'s own attack angle with mean photon
number ``mu_q``; in the generalized strategy it travels at angle ``k`` with
probability ``f[q, k]`` and mean photon number ``mu[q, k]``.  Bob's scrambling
rotation ``theta`` (drawn per slot from a policy) then determines which
physical detector pair carries Alice's basis and which detector registers an
error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import squashing
from .receiver import (
    EfficiencyMap,
    POLARIZATIONS,
    ReceiverParams,
    SCRAMBLING_ANGLES,
    basis,
    orthogonal,
    raw_click_vector,
    rotate,
)


@dataclass
class EveMeasurementModel:
    """Outcome distribution of Eve's intercepting measurement."""

    p_correct: float = 0.5
    p_wrong: float = 0.0
    p_noncompat: float = 0.25

    def __post_init__(self) -> None:
        if min(self.p_correct, self.p_wrong, self.p_noncompat) < 0:
            raise ValueError("Eve outcome probabilities must be nonnegative")
        if self.p_correct + self.p_wrong + 2 * self.p_noncompat > 1 + 1e-12:
            raise ValueError(
                "p_correct + p_wrong + 2*p_noncompat must not exceed 1, got "
                f"{self.p_correct + self.p_wrong + 2 * self.p_noncompat}"
            )

    @property
    def p_none(self) -> float:
        """Probability that Eve detects nothing and resends nothing."""
        return 1.0 - self.p_correct - self.p_wrong - 2.0 * self.p_noncompat

    def coefficient_matrix(self) -> np.ndarray:
        """4x4 array ``C[j, q]``: probability Eve's outcome is ``q`` given Alice sent ``j``."""
        coef = np.empty((4, 4))
        for j in POLARIZATIONS:
            for q in POLARIZATIONS:
                if q == j:
                    coef[j, q] = self.p_correct
                elif q == orthogonal(j):
                    coef[j, q] = self.p_wrong
                else:
                    coef[j, q] = self.p_noncompat
        return coef


@dataclass
class RestrictedStrategy:
    """Eve resends each polarization at its own attack angle; 4 intensities."""

    mu: np.ndarray

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (4,):
            raise ValueError(f"restricted strategy needs 4 intensities, got shape {mu.shape}")
        if np.any(mu < 0):
            raise ValueError("mean photon numbers must be nonnegative")
        self.mu = mu


@dataclass
class GeneralizedStrategy:
    """Per-outcome angle distribution ``f[q, k]`` and intensities ``mu[q, k]``."""

    mu: np.ndarray
    f: np.ndarray

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=float)
        f = np.asarray(self.f, dtype=float)
        if mu.shape != (4, 4) or f.shape != (4, 4):
            raise ValueError("generalized strategy needs 4x4 mu and f tables")
        if np.any(mu < 0):
            raise ValueError("mean photon numbers must be nonnegative")
        if np.any(f < 0) or np.any(f > 1):
            raise ValueError("angle probabilities must lie in [0, 1]")
        sums = f.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError(f"each f row must sum to 1, got row sums {sums}")
        self.mu = mu
        self.f = f

    @classmethod
    def from_restricted(cls, strat: RestrictedStrategy) -> "GeneralizedStrategy":
        """Embed a restricted strategy: identity angle rows, diagonal intensities."""
        return cls(np.diag(strat.mu), np.eye(4))


@dataclass
class ScramblingPolicy:
    """Probability weights over the four scrambling rotations 0/45/90/135 degrees."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (4,):
            raise ValueError(f"policy needs 4 weights, got shape {w.shape}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("policy weights must be nonnegative and sum to 1")
        self.weights = w

    @classmethod
    def uniform(cls) -> "ScramblingPolicy":
        return cls(np.full(4, 0.25))

    @classmethod
    def no_scrambling(cls) -> "ScramblingPolicy":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]))


@dataclass
class HonestChannel:
    """Alice's source intensity and the lossy line between Alice and Bob."""

    loss_db: float
    alice_mu: float = 0.5

    def __post_init__(self) -> None:
        if self.loss_db < 0:
            raise ValueError("line loss must be nonnegative")
        if self.alice_mu < 0:
            raise ValueError("source mean photon number must be nonnegative")

    @property
    def transmittance(self) -> float:
        return 10.0 ** (-self.loss_db / 10.0)


@dataclass
class Observables:
    """Sifted rates and errors of one scenario, per polarization and aggregated."""

    rate_per_pol: np.ndarray
    error_per_pol: np.ndarray
    rate_total: float
    error_total: float
    qber: float | None

    def as_dict(self) -> dict:
        return {
            "rate_total": self.rate_total,
            "rate_per_pol": [float(x) for x in self.rate_per_pol],
            "error_per_pol": [float(x) for x in self.error_per_pol],
            "error_total": self.error_total,
            "qber": None if self.qber is None else float(self.qber),
        }


def sift_basis(j: int, theta: int) -> str:
    """Physical detector pair that carries Alice's basis under rotation ``theta``."""
    return "hv" if basis(rotate(j, theta)) == 0 else "da"


def error_detector(j: int, theta: int) -> int:
    """Detector whose outcome Bob logs as the bit orthogonal to Alice's ``j``."""
    return rotate(orthogonal(j), theta)


def _dark_sift_term(pair: str, dark: np.ndarray) -> float:
    """Sift probability from dark counts alone when Eve resends nothing."""
    x, y = (0, 1) if pair == "hv" else (2, 3)
    return float(dark[x] + dark[y] - dark[x] * dark[y])


def _dark_error_term(e: int, dark: np.ndarray) -> float:
    """Error probability from dark counts alone when Eve resends nothing."""
    o = e ^ 1
    return float(dark[e] - dark[e] * dark[o] / 2.0)


def conditional_rate(
    j: int,
    k: int,
    theta: int,
    mu: float,
    eve: EveMeasurementModel,
    params: ReceiverParams,
    emap: EfficiencyMap,
) -> float:
    """Sifted-rate contribution when Eve steers her correct outcome to angle ``k``.

    Her correct-outcome resend (polarization ``j``) travels at angle ``k``;
    wrong and conjugate-basis resends travel at their own aligned angles.  All
    resends share the mean photon number ``mu``.
    """
    pair = sift_basis(j, theta)
    coef = eve.coefficient_matrix()
    total = 0.0
    for q in POLARIZATIONS:
        if coef[j, q] == 0.0:
            continue
        angle = k if q == j else q
        probs = raw_click_vector(q, angle, mu, theta, params, emap)
        total += coef[j, q] * squashing.basis_prob(probs, pair)
    return total + eve.p_none * _dark_sift_term(pair, params.dark_counts)


def conditional_error(
    j: int,
    k: int,
    theta: int,
    mu: float,
    eve: EveMeasurementModel,
    params: ReceiverParams,
    emap: EfficiencyMap,
) -> float:
    """Error-rate contribution matching :func:`conditional_rate`."""
    e = error_detector(j, theta)
    coef = eve.coefficient_matrix()
    total = 0.0
    for q in POLARIZATIONS:
        if coef[j, q] == 0.0:
            continue
        angle = k if q == j else q
        probs = raw_click_vector(q, angle, mu, theta, params, emap)
        total += coef[j, q] * squashing.outcome_prob(probs, e)
    return total + eve.p_none * _dark_error_term(e, params.dark_counts)


def _strategy_tables(
    strat: RestrictedStrategy | GeneralizedStrategy,
) -> tuple[np.ndarray, np.ndarray]:
    """(mu, f) tables of either strategy kind; restricted maps to its embedding."""
    if isinstance(strat, RestrictedStrategy):
        return np.diag(strat.mu), np.eye(4)
    return strat.mu, strat.f


def strategy_rate(
    j: int,
    theta: int,
    strat: RestrictedStrategy | GeneralizedStrategy,
    eve: EveMeasurementModel,
    params: ReceiverParams,
    emap: EfficiencyMap,
) -> float:
    """Sifted rate for Alice's polarization ``j`` under rotation ``theta``.

    Mixes over Eve's measurement outcome ``q`` and, per outcome, over her
    angle distribution ``f[q, :]`` with per-entry intensities ``mu[q, :]``.
    """
    mu, f = _strategy_tables(strat)
    pair = sift_basis(j, theta)
    coef = eve.coefficient_matrix()
    total = 0.0
    for q in POLARIZATIONS:
        mix = 0.0
        for k in range(4):
            if f[q, k] == 0.0:
                continue
            probs = raw_click_vector(q, k, mu[q, k], theta, params, emap)
            mix += f[q, k] * squashing.basis_prob(probs, pair)
        total += coef[j, q] * mix
    return total + eve.p_none * _dark_sift_term(pair, params.dark_counts)


def strategy_error(
    j: int,
    theta: int,
    strat: RestrictedStrategy | GeneralizedStrategy,
    eve: EveMeasurementModel,
    params: ReceiverParams,
    emap: EfficiencyMap,
) -> float:
    """Error rate companion of :func:`strategy_rate`."""
    mu, f = _strategy_tables(strat)
    e = error_detector(j, theta)
    coef = eve.coefficient_matrix()
    total = 0.0
    for q in POLARIZATIONS:
        mix = 0.0
        for k in range(4):
            if f[q, k] == 0.0:
                continue
            probs = raw_click_vector(q, k, mu[q, k], theta, params, emap)
            mix += f[q, k] * squashing.outcome_prob(probs, e)
        total += coef[j, q] * mix
    return total + eve.p_none * _dark_error_term(e, params.dark_counts)


def observables(
    strat: RestrictedStrategy | GeneralizedStrategy,
    policy: ScramblingPolicy,
    eve: EveMeasurementModel,
    params: ReceiverParams,
    emap: EfficiencyMap,
) -> Observables:
    """Policy-averaged rates, errors and QBER over all of Alice's polarizations.

    QBER is the total error divided by the total sifted rate of the same
    (scrambled) experiment; it is ``None`` when the rate vanishes.
    """
    rate = np.zeros(4)
    err = np.zeros(4)
    for j in POLARIZATIONS:
        for t, theta in enumerate(SCRAMBLING_ANGLES):
            w = policy.weights[t]
            if w == 0.0:
                continue
            rate[j] += w * strategy_rate(j, theta, strat, eve, params, emap)
            err[j] += w * strategy_error(j, theta, strat, eve, params, emap)
    rate_total = float(rate.sum() / 4.0)
    error_total = float(err.sum() / 4.0)
    qber = error_total / rate_total if rate_total > 0 else None
    return Observables(rate, err, rate_total, error_total, qber)


def honest_baseline(
    channel: HonestChannel, params: ReceiverParams, nominal_eta: float
) -> float:
    """Expected sifted rate of the honest Alice-Bob link (no eavesdropper).

    Reuses the attack machinery with a transparent channel: every pulse
    arrives intact (outcome model (1, 0, 0)) with intensity ``alice_mu`` times
    the line transmittance, and the receiver shows no angle dependence (every
    efficiency equals ``nominal_eta``), which also makes the result independent
    of scrambling.
    """
    mu = channel.alice_mu * channel.transmittance
    strat = RestrictedStrategy(np.full(4, mu))
    transparent = EveMeasurementModel(1.0, 0.0, 0.0)
    emap = EfficiencyMap.uniform(nominal_eta)
    obs = observables(strat, ScramblingPolicy.no_scrambling(), transparent, params, emap)
    return obs.rate_total


def honest_baseline_per_pol(
    channel: HonestChannel, params: ReceiverParams, nominal_eta: float
) -> np.ndarray:
    """Per-polarization honest sifted rates (they differ only through dark counts)."""
    mu = channel.alice_mu * channel.transmittance
    strat = RestrictedStrategy(np.full(4, mu))
    transparent = EveMeasurementModel(1.0, 0.0, 0.0)
    emap = EfficiencyMap.uniform(nominal_eta)
    obs = observables(strat, ScramblingPolicy.no_scrambling(), transparent, params, emap)
    return obs.rate_per_pol
