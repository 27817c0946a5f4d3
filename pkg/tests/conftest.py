import json
from pathlib import Path

import numpy as np
import pytest

from app.schemas import FracParams, Grid1D, LinearAuxConfig, PhysParams, QuadAuxConfig, SelfSimConfig

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def figure_constants():
    with open(DATA_DIR / "figure_constants.json", encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture
def fig1_phys():
    """eta=1.7, B=5, m=2.5 (fig1ii)."""
    return PhysParams(eta=1.7, big_b=5.0, mass=2.5)


@pytest.fixture
def fig3_phys():
    return PhysParams(eta=0.5, big_b=5.0, mass=2.5)


@pytest.fixture
def linear_config():
    return LinearAuxConfig(n=10, mu=-0.5, c0=2.0, amp_b0=1.5, a0_const=1.3, amp_a1=2.3,
                           amp_a2=3.0, amp_b1=1.9, amp_b2=0.7)


@pytest.fixture
def quad_config():
    return QuadAuxConfig(n=10, mu=-0.5, b0_hermite=1.5, b1_const=1.9)


@pytest.fixture
def selfsim_config():
    return SelfSimConfig(a0_const=1.3, a1_const=2.3, b0_const=1.5, b1=1.9, b2=0.7)


@pytest.fixture
def caputo_fig3():
    return FracParams.caputo(alpha=0.39, t_horizon=20.0)


@pytest.fixture
def wide_grid(fig3_phys):
    """401 nodes on +-8 stationary standard deviations."""
    return Grid1D.symmetric(8.0 * fig3_phys.sigma, 401)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
