import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from acevc import dsp


def make_sine(freq_hz: float, seconds: float = 1.0, amplitude: float = 0.5,
              sr: int = dsp.SAMPLE_RATE) -> dsp.Waveform:
    t = np.arange(int(seconds * sr)) / sr
    return dsp.Waveform(amplitude * np.sin(2.0 * np.pi * freq_hz * t), sr)


@pytest.fixture
def rng():
    return np.random.default_rng(31337)


@pytest.fixture(scope="session")
def sine220():
    return make_sine(220.0)
