"""Shared pytest fixtures."""

import os

import numpy as np
import pytest

from autoencoder import build_model
from detector import build_detector
from features import FEATURE_COUNT, FeatureScaler
from scenario import ConditionSpec, ScenarioConfig
from signal_model import Condition, PathSpec


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size campaign runs (set GWSHM_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("GWSHM_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set GWSHM_SLOW=1 to run full-size campaigns")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_scenario(tmp_path):
    """Three temperatures, two paths, one size per damage kind."""
    return ScenarioConfig(
        name="small",
        temperatures=(20.0, 30.0, 40.0),
        paths=(PathSpec("H1", 180.0, "horizontal"), PathSpec("V1", 160.0, "vertical")),
        conditions=(ConditionSpec(Condition.BASELINE), ConditionSpec(Condition.TRF, (20.0,)),
                    ConditionSpec(Condition.LFA, (20.0,))),
        output_dir=str(tmp_path / "out"),
    )


@pytest.fixture
def random_scaler(rng):
    minimum = rng.uniform(-1.0, 0.0, FEATURE_COUNT)
    maximum = rng.uniform(1.0, 2.0, FEATURE_COUNT)
    return FeatureScaler(minimum, maximum)


@pytest.fixture
def default_detector(rng, random_scaler):
    """Untrained default network with a scaler and a threshold from random healthy vectors."""
    model = build_model(seed=7)
    healthy = rng.uniform(-1.0, 1.0, size=(64, FEATURE_COUNT))
    return build_detector(model, random_scaler, healthy)
