import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from speckleauth import DeskScale, simulate_speckle

settings.register_profile(
    "ci", deadline=None, max_examples=30, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

# Small profile for unit tests: 256x256 surface (0.512 mm at 2 um pitch),
# 128x128 sensor crop (0.285 mm window), same optics as the desk scale.
TINY = DeskScale(surface_nx=256, surface_ny=256, sensor_n=128)


@pytest.fixture(scope="session")
def tiny_scale():
    return TINY


@pytest.fixture(scope="session")
def tiny_config():
    return TINY.config()


@pytest.fixture(scope="session")
def tiny_master():
    return TINY.make_master(seed=42)


@pytest.fixture(scope="session")
def tiny_master_b():
    return TINY.make_master(seed=1042)


@pytest.fixture(scope="session")
def tiny_pattern(tiny_master, tiny_config):
    return simulate_speckle(tiny_master, tiny_config, noise_seed=0)


@pytest.fixture(scope="session")
def tiny_pattern_b(tiny_master_b, tiny_config):
    return simulate_speckle(tiny_master_b, tiny_config, noise_seed=1)


@pytest.fixture()
def rng():
    return np.random.default_rng(123)


def smooth_field(shape, seed, grain=3.0):
    """Cheap smooth test image: low-passed white noise."""
    r = np.random.default_rng(seed)
    noise = r.standard_normal(shape)
    f = np.fft.fft2(noise)
    fy = np.fft.fftfreq(shape[0])[:, None]
    fx = np.fft.fftfreq(shape[1])[None, :]
    f *= np.exp(-(fx**2 + fy**2) * (np.pi * grain) ** 2)
    out = np.fft.ifft2(f).real
    return out - out.min()


def synthetic_speckle(shape, seed, grain=4.0):
    """Speckle-statistics test image: random-phase field through a pupil."""
    r = np.random.default_rng(seed)
    u = np.exp(2j * np.pi * r.random(shape))
    fy = np.fft.fftfreq(shape[0])[:, None]
    fx = np.fft.fftfreq(shape[1])[None, :]
    mask = fx**2 + fy**2 <= (0.5 / grain) ** 2
    field = np.fft.ifft2(np.fft.fft2(u) * mask)
    return np.abs(field) ** 2
