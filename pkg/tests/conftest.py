# tests/conftest.py
import numpy as np
import pytest

from nctorus.algebra import TorusElement
from nctorus.gauge import GaugeConfig
from nctorus.runner import ComputationRunner
from nctorus.settings import LabSettings

# Deformation angles shared across test files
THETA_RATIONAL = 0.3
THETA_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
THETAS = [0.0, THETA_RATIONAL, THETA_GOLDEN]


def gauge_perturbation(theta, strength=0.3):
    """``r1 = strength (X + X*) = u* d1(u)`` with ``u = exp(strength (X - X*))``; a pure gauge."""
    x = TorusElement.x(theta)
    return strength * (x + x.star), TorusElement.zero(theta)


@pytest.fixture
def rng():
    """Fresh generator per test so results do not depend on test order."""
    return np.random.default_rng(20240607)


@pytest.fixture
def gauge_free():
    return GaugeConfig(theta=THETA_RATIONAL)


@pytest.fixture
def gauge_magnetic():
    """Hermitian mode, default metric, nonzero gauge offsets."""
    return GaugeConfig(theta=THETA_RATIONAL, beta=(0.1, 0.2))


@pytest.fixture
def settings(tmp_path, monkeypatch):
    monkeypatch.delenv("NCTORUS_OUTPUT_DIR", raising=False)
    monkeypatch.delenv("NCTORUS_RECORD_WALL_TIME", raising=False)
    return LabSettings(NCTORUS_OUTPUT_DIR=str(tmp_path / "results"))


@pytest.fixture
async def runner(settings):
    """
    Provides a ComputationRunner per test function, created inside the running
    event loop so its semaphore binds to that loop.
    """
    lab_runner = ComputationRunner(settings)
    yield lab_runner
    lab_runner.clear_cache()
