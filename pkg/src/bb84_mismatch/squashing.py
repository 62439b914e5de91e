"""Multi-click post-processing of the four raw detector signals.

Each bit slot produces a click pattern over the detectors (h, v, d, a).  Bob
reduces every pattern to one of six decisions:

* exactly one basis fired, single click  -> that detector's outcome;
* exactly one basis fired, both partners -> a fair coin between the two outcomes;
* clicks in both bases                   -> discard;
* no clicks                              -> no_click.

The module provides the exact decision distribution from the 16-pattern
expansion (detectors treated as independent given their click probabilities)
plus the equivalent closed forms used by the analytic rate formulas.
"""

from __future__ import annotations

import numpy as np

DECISIONS = ("outcome_h", "outcome_v", "outcome_d", "outcome_a", "discard", "no_click")
OUTCOME_H, OUTCOME_V, OUTCOME_D, OUTCOME_A, DISCARD, NO_CLICK = range(6)
BASES = ("hv", "da")


def _pattern_decision_matrix() -> np.ndarray:
    """16x6 table: row = click bitmask (bit i = detector i), columns = decision weights.

    Within-basis double clicks put weight 1/2 on each of the two outcomes;
    every other pattern maps to a single decision with weight 1.
    """
    table = np.zeros((16, 6))
    for mask in range(16):
        clicked = [i for i in range(4) if mask >> i & 1]
        bases = {i >> 1 for i in clicked}
        if not clicked:
            table[mask, NO_CLICK] = 1.0
        elif len(bases) == 2:
            table[mask, DISCARD] = 1.0
        elif len(clicked) == 1:
            table[mask, clicked[0]] = 1.0
        else:
            table[mask, clicked[0]] = 0.5
            table[mask, clicked[1]] = 0.5
    return table


PATTERN_DECISIONS = _pattern_decision_matrix()


def pattern_probabilities(probs: np.ndarray) -> np.ndarray:
    """Probability of each of the 16 click patterns, detectors independent."""
    p = np.asarray(probs, dtype=float)
    out = np.empty(16)
    for mask in range(16):
        w = 1.0
        for i in range(4):
            w *= p[i] if mask >> i & 1 else 1.0 - p[i]
        out[mask] = w
    return out


def decision_distribution(probs: np.ndarray) -> dict[str, float]:
    """Exact probability of each post-processing decision for one pulse."""
    weights = pattern_probabilities(probs) @ PATTERN_DECISIONS
    return {name: float(w) for name, w in zip(DECISIONS, weights)}


def basis_prob(probs: np.ndarray, basis: str) -> float:
    """Probability that the pulse sifts into the given physical basis.

    For ``hv`` this is the chance that neither d nor a clicked while at least
    one of h, v did; double clicks within the basis stay in it.
    """
    p = np.asarray(probs, dtype=float)
    if basis == "hv":
        x, y, o1, o2 = 0, 1, 2, 3
    elif basis == "da":
        x, y, o1, o2 = 2, 3, 0, 1
    else:
        raise ValueError(f"basis must be 'hv' or 'da', got {basis!r}")
    return float((1.0 - p[o1]) * (1.0 - p[o2]) * (p[x] + p[y] - p[x] * p[y]))


def outcome_prob(probs: np.ndarray, det: int) -> float:
    """Probability that post-processing assigns the outcome of detector ``det``.

    The ``- p_det * p_partner / 2`` term is the half of the within-basis
    double clicks that the fair coin awards to the partner.
    """
    p = np.asarray(probs, dtype=float)
    partner = det ^ 1
    o1, o2 = (2, 3) if det < 2 else (0, 1)
    return float((p[det] - p[det] * p[partner] / 2.0) * (1.0 - p[o1]) * (1.0 - p[o2]))
