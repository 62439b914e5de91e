"""Four-detector passive-basis polarization receiver.

Detectors ``h``, ``v``, ``d``, ``a`` sit behind a 50/50 beam splitter that
passively selects one of the two conjugate linear-polarization bases (HV or
DA).  A polarization rotator in front of the receiver — the scrambling
countermeasure — shifts which physical detector plays which logical role.
Each detector's efficiency additionally depends on the spatial angle at
which light arrives; that dependence (the efficiency map) is the side
channel the rest of the package studies.

Polarizations and detectors share the index convention

    H = h = 0,  V = v = 1,  D = d = 2,  A = a = 3

so detector ``i`` is the one aligned with polarization ``i``, orthogonal
partners differ in the lowest bit, and the two bases are ``{0, 1}`` and
``{2, 3}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

H, V, D, A = 0, 1, 2, 3
POLARIZATIONS = (H, V, D, A)
POL_NAMES = ("H", "V", "D", "A")
DET_NAMES = ("h", "v", "d", "a")
SCRAMBLING_ANGLES = (0, 45, 90, 135)
CLICK_MODELS = ("paper_approx", "exact_complement")

# A +45 degree rotation advances a polarization one step along this cycle.
_CYCLE = (H, D, V, A)
# Position of each polarization on the cycle (inverse of _CYCLE).
_POS = (0, 2, 1, 3)


def basis(index: int) -> int:
    """Basis of a polarization or detector index: 0 for {H,V}/{h,v}, 1 for {D,A}/{d,a}."""
    return index >> 1


def orthogonal(pol: int) -> int:
    """The orthogonal partner within the same basis (H<->V, D<->A)."""
    return pol ^ 1


def conjugate_pair(pol: int) -> tuple[int, int]:
    """The two polarizations of the conjugate basis, in index order."""
    base = (1 - basis(pol)) * 2
    return (base, base + 1)


def angle_steps(theta: int) -> int:
    """Number of 45-degree steps in a scrambling angle; rejects other angles."""
    if theta not in SCRAMBLING_ANGLES:
        raise ValueError(f"scrambling angle must be one of {SCRAMBLING_ANGLES}, got {theta!r}")
    return theta // 45


def rotate(pol: int, theta: int) -> int:
    """Polarization after the scrambling rotator advances it by ``theta`` degrees."""
    return _CYCLE[(_POS[pol] + angle_steps(theta)) % 4]


def unrotate(pol: int, theta: int) -> int:
    """Inverse rotation: the incoming polarization that ``theta`` maps onto ``pol``."""
    return _CYCLE[(_POS[pol] - angle_steps(theta)) % 4]


def logical_outcome(det: int, theta: int) -> int:
    """Polarization Bob records when detector ``det`` fires under rotation ``theta``.

    Detector labels are fixed; the rotator changes their meaning.  A click on
    ``det`` means the rotated light was aligned with ``det``, so Bob logs the
    polarization that the rotation maps onto it.
    """
    return unrotate(det, theta)


def rotation_table() -> np.ndarray:
    """4x4 int array ``R[pol, steps]`` giving rotate(pol, 45*steps)."""
    return np.array(
        [[rotate(p, 45 * t) for t in range(4)] for p in POLARIZATIONS], dtype=np.int64
    )


@dataclass
class ReceiverParams:
    """Detector dark counts, interference fidelity, and the click-probability model.

    ``dark_counts`` is one probability per bit slot per detector (h, v, d, a);
    a scalar is broadcast to all four.  ``fidelity`` is the probability that
    light reaches the aligned detector rather than its orthogonal partner
    within the correct basis.  ``click_model`` selects between the clamped
    additive dark-count form (``paper_approx``) and the normalized complement
    form (``exact_complement``).
    """

    dark_counts: np.ndarray = field(default_factory=lambda: np.full(4, 1e-6))
    fidelity: float = 0.98
    click_model: str = "paper_approx"

    def __post_init__(self) -> None:
        dc = np.asarray(self.dark_counts, dtype=float)
        if dc.ndim == 0:
            dc = np.full(4, float(dc))
        if dc.shape != (4,):
            raise ValueError(f"dark_counts must be a scalar or 4 values, got shape {dc.shape}")
        if np.any(dc < 0) or np.any(dc >= 1):
            raise ValueError("dark_counts must lie in [0, 1)")
        self.dark_counts = dc
        if not 0.5 <= self.fidelity <= 1.0:
            raise ValueError(f"fidelity must lie in [0.5, 1], got {self.fidelity}")
        if self.click_model not in CLICK_MODELS:
            raise ValueError(f"click_model must be one of {CLICK_MODELS}, got {self.click_model!r}")


@dataclass
class EfficiencyMap:
    """4x4 detection-efficiency table ``eta[detector, attack_angle]``.

    Rows are detectors h, v, d, a; columns are the four spatial attack angles
    (the direction at which the corresponding detector is most sensitive).
    """

    eta: np.ndarray

    def __post_init__(self) -> None:
        eta = np.asarray(self.eta, dtype=float)
        if eta.shape != (4, 4):
            raise ValueError(f"efficiency map must be 4x4, got shape {eta.shape}")
        if np.any(eta < 0) or np.any(eta > 1):
            raise ValueError("efficiencies must lie in [0, 1]")
        self.eta = eta

    @classmethod
    def from_diag(cls, diag: float, off: float) -> "EfficiencyMap":
        """Map with ``diag`` on the matched detector/angle pairs, ``off`` elsewhere."""
        eta = np.full((4, 4), float(off))
        np.fill_diagonal(eta, float(diag))
        return cls(eta)

    @classmethod
    def uniform(cls, value: float) -> "EfficiencyMap":
        """Angle-independent map: every detector has efficiency ``value`` everywhere."""
        return cls(np.full((4, 4), float(value)))

    @classmethod
    def default(cls) -> "EfficiencyMap":
        """The shipped stand-in map: strong but not total mismatch (0.1 vs 0.001)."""
        return cls.from_diag(0.1, 0.001)


def overlap_factor(pol: int, theta: int, det: int, fidelity: float) -> float:
    """Fraction of a pulse's mean photon number that reaches one detector.

    The incoming polarization is first rotated by ``theta``.  The factor is
    ``F/2`` at the aligned detector, ``(1-F)/2`` at its orthogonal partner and
    ``1/4`` at each conjugate-basis detector; the 1/2 and 1/4 embody the fixed
    50/50 beam splitter.
    """
    q = rotate(pol, theta)
    if basis(q) != basis(det):
        return 0.25
    if det == q:
        return fidelity / 2.0
    return (1.0 - fidelity) / 2.0


def overlap_matrix(fidelity: float) -> np.ndarray:
    """4x4 array ``W[pol, det]`` of overlap factors at ``theta = 0``."""
    return np.array(
        [[overlap_factor(p, 0, i, fidelity) for i in range(4)] for p in POLARIZATIONS]
    )


def click_probability(intensity: float, dark: float, model: str) -> float:
    """Click probability for Poisson light of mean ``intensity`` on one detector."""
    if model == "paper_approx":
        return min(1.0, dark - math.expm1(-intensity))
    if model == "exact_complement":
        return dark + (1.0 - dark) * -math.expm1(-intensity)
    raise ValueError(f"unknown click model {model!r}")


def raw_click_prob(
    det: int,
    pol: int,
    angle: int,
    mu: float,
    theta: int,
    params: ReceiverParams,
    emap: EfficiencyMap,
) -> float:
    """Probability that detector ``det`` clicks for one incoming pulse.

    ``pol`` is the pulse polarization (before Bob's rotator), ``angle`` the
    spatial attack angle it travels at, ``mu`` its mean photon number and
    ``theta`` Bob's scrambling rotation for this slot.
    """
    if mu < 0:
        raise ValueError(f"mean photon number must be nonnegative, got {mu}")
    w = overlap_factor(pol, theta, det, params.fidelity)
    x = mu * w * emap.eta[det, angle]
    return click_probability(x, params.dark_counts[det], params.click_model)


def raw_click_vector(
    pol: int,
    angle: int,
    mu: float,
    theta: int,
    params: ReceiverParams,
    emap: EfficiencyMap,
) -> np.ndarray:
    """Click probabilities of all four detectors for one pulse, in detector order."""
    return np.array(
        [raw_click_prob(i, pol, angle, mu, theta, params, emap) for i in range(4)]
    )
