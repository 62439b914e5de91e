import numpy as np
import pytest

from bb84_mismatch.attack import EveMeasurementModel
from bb84_mismatch.receiver import EfficiencyMap, ReceiverParams


@pytest.fixture
def beamsplit_eve() -> EveMeasurementModel:
    """Intercept-resend through a 50/50 splitter: half conclusive in Eve's
    basis, a quarter conclusive per conjugate outcome, never wrong."""
    return EveMeasurementModel(0.5, 0.0, 0.25)


@pytest.fixture
def ideal_params() -> ReceiverParams:
    return ReceiverParams(np.zeros(4), 1.0, "paper_approx")


@pytest.fixture
def default_params() -> ReceiverParams:
    return ReceiverParams(np.full(4, 1e-6), 0.98, "paper_approx")


@pytest.fixture
def default_map() -> EfficiencyMap:
    return EfficiencyMap.default()


def single_detector_map(det: int, angle_idx: int, eta: float = 1.0) -> EfficiencyMap:
    table = np.zeros((4, 4))
    table[det, angle_idx] = eta
    return EfficiencyMap(table)
