import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wdci.data import (
    DegradationParams,
    degrade,
    make_sample,
    synthesize_stereo_pair,
)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def small_sample(seed=0, size=64, gamma=2.5, gain=0.2, noise=True):
    gt_l, gt_r = synthesize_stereo_pair(seed, size=size)
    params = DegradationParams(
        gamma=gamma,
        gain=gain,
        read_noise_sigma=0.004 if noise else 0.0,
        shot_noise_scale=0.002 if noise else 0.0,
        seed=seed + 991,
    )
    low_l, low_r = degrade((gt_l, gt_r), params)
    return make_sample((low_l, low_r), (gt_l, gt_r), f"s{seed:04d}")


@pytest.fixture
def sample64():
    return small_sample(0, 64)
