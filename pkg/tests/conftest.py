import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from toaloc import (
    AdmmConfig,
    Measurements,
    StableParams,
    fixed_perimeter_scenario,
    gamma_for_gsnr,
    true_ranges,
)
from toaloc.model import rng_from_seed, stable_draws


@pytest.fixture(scope="session")
def fixed_scenario():
    return fixed_perimeter_scenario()


@pytest.fixture(scope="session")
def noisy_measurements(fixed_scenario):
    """Factory for the reproducibility scenario's noisy ranges (alpha=1.5, GSNR 20 dB)."""
    gamma = gamma_for_gsnr(fixed_scenario, 1.5, 20.0)
    params = StableParams(alpha=1.5, gamma=gamma)
    ranges = true_ranges(fixed_scenario)

    def make(seed: int) -> Measurements:
        noise = stable_draws(rng_from_seed(seed), params, fixed_scenario.n_sensors)
        return Measurements(ranges=ranges + noise, noise=noise)

    return make
