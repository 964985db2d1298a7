"""
Pytest configuration and fixtures
"""

import os
import shutil
import sys
import tempfile

import numpy as np
import pytest

# Add the project root to the Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from models.lrd_process import LrdExponentFamily, SpharmaSpec, simulate  # noqa: E402
from models.regression import anova_design, synthesize_response, true_beta  # noqa: E402


@pytest.fixture
def temp_directory():
    """Create a temporary directory for testing"""
    temp_dir = tempfile.mkdtemp()
    yield temp_dir

    if os.path.exists(temp_dir):
        shutil.rmtree(temp_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_spec():
    """DPBS simulation-study model truncated at M = 4"""
    return SpharmaSpec.sim_study("dpbs", M=4)


@pytest.fixture
def ipbs_spec():
    return SpharmaSpec.sim_study("ipbs", M=30)


@pytest.fixture
def arma_spec():
    """Short-memory model: ARMA(1,1) per degree, no fractional integration"""

    def _create(phi=0.5, psi=0.4, sigma2=1.0, degrees=(1, 2, 3)):
        k = len(degrees)
        return SpharmaSpec(
            degrees=degrees,
            sigma2=np.full(k, sigma2),
            phi=np.full(k, phi),
            psi=np.full(k, psi),
            exponents=LrdExponentFamily("constant", (0.0,)),
        )

    return _create


@pytest.fixture
def farima_spec():
    """Pure fractional noise with memory parameter d on every degree"""

    def _create(d=0.3, degrees=(1, 2, 3, 4, 5)):
        k = len(degrees)
        return SpharmaSpec(
            degrees=degrees,
            sigma2=np.ones(k),
            phi=np.zeros(k),
            psi=np.zeros(k),
            exponents=LrdExponentFamily("constant", (2.0 * d,)),
        )

    return _create


@pytest.fixture
def small_sample(small_spec):
    """Error coefficients of the M = 4 model, N = 60"""
    return simulate(small_spec, 60, seed=2024)


@pytest.fixture
def small_response(small_spec, small_sample):
    """(design, true beta, response) for the M = 4 model with p = 3"""
    design = anova_design(small_sample.N, 3)
    beta = true_beta(small_spec.M, 3)
    return design, beta, synthesize_response(design, beta, small_sample)


def pytest_configure(config):
    """Pytest configuration hook"""
    config.addinivalue_line("markers", "integration: mark test as integration test")
    config.addinivalue_line("markers", "functional: mark test as functional test")
    config.addinivalue_line("markers", "slow: mark test as slow running (Monte Carlo acceptance)")


def pytest_collection_modifyitems(config, items):
    """Skip slow tests by default unless --run-slow is specified"""
    if config.getoption("--run-slow") or os.environ.get("RUN_SLOW_TESTS") == "1":
        return
    skip_slow = pytest.mark.skip(reason="need --run-slow option to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def pytest_addoption(parser):
    """Add custom command line options"""
    parser.addoption("--run-slow", action="store_true", default=False, help="run slow tests")
