import json
import math
from dataclasses import replace
from pathlib import Path

import pytest

from autoencoder import TrainConfig
from errors import ConfigError
from scenario import ConditionSpec, default_scenario, dumps, load_scenario, scenario_from_dict
from signal_model import Condition

CONFIGS = Path(__file__).parent / "configs"


def _minimal(**changes):
    data = {
        "name": "unit",
        "temperatures": [20, 30],
        "paths": [{"path_id": "H1"}],
        "conditions": [{"kind": "Baseline"}, {"kind": "LFA", "sizes": [10]}],
    }
    data.update(changes)
    return data


def test_experimental_config_counts():
    scenario = load_scenario(str(CONFIGS / "experimental.json"))
    assert len(scenario.temperatures) == 19
    assert len(scenario.paths) == 6
    assert scenario.clean_record_count() == 342
    baselines = len(scenario.temperatures) * len(scenario.paths)
    assert baselines == 114
    assert baselines * scenario.noise.copies == 5700
    assert scenario.train_config().batch_size == 32
    assert scenario.train_config() == replace(TrainConfig.experimental(), seed=scenario.seed)
    assert scenario.search.iterations == 10


def test_simulation_config_counts():
    scenario = load_scenario(str(CONFIGS / "simulation.json"))
    per_case = len(scenario.temperatures) * len(scenario.paths)
    assert per_case == 21
    assert per_case * scenario.noise.copies == 1050
    assert scenario.clean_record_count() == 21 * 9
    assert scenario.train.batch_size == 28


def test_scenario_dict_round_trip():
    scenario = load_scenario(str(CONFIGS / "experimental.json"))
    again = scenario_from_dict(json.loads(dumps(scenario)))
    assert again == scenario


def test_disabled_noise_serializes_as_null():
    scenario = scenario_from_dict(_minimal(noise={"snr_db": None}))
    assert math.isinf(scenario.noise.snr_db)
    data = json.loads(dumps(scenario))
    assert data["noise"]["snr_db"] is None
    assert scenario_from_dict(data) == scenario


def test_training_seed_comes_from_scenario():
    scenario = scenario_from_dict(_minimal(seed=77))
    assert scenario.train_config().seed == 77
    assert scenario.with_overrides(seed=5).train_config().seed == 5
    with pytest.raises(ConfigError):
        scenario_from_dict(_minimal(train={"seed": 3}))


@pytest.mark.parametrize("changes", [
    {"colour": "blue"},
    {"noise": {"snr": 20}},
    {"conditions": [{"kind": "Baseline", "sizes": [5]}]},
    {"conditions": [{"kind": "TRF", "sizes": [60]}]},
    {"conditions": [{"kind": "Crack"}]},
    {"paths": [{"path_id": "H1", "orientation": "diagonal"}]},
    {"paths": [{"path_id": "H1"}, {"path_id": "H1"}]},
    {"temperatures": []},
    {"train": {"batch_size": 0}},
])
def test_invalid_scenarios(changes):
    with pytest.raises(ConfigError):
        scenario_from_dict(_minimal(**changes))


def test_missing_required_key():
    data = _minimal()
    del data["paths"]
    with pytest.raises(ConfigError):
        scenario_from_dict(data)


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_scenario(str(bad))
    with pytest.raises(ConfigError):
        load_scenario(str(tmp_path / "absent.json"))


def test_default_scenario_shape():
    scenario = default_scenario()
    assert scenario.reference_temperature == 30.0
    assert scenario.clean_record_count() == 19 * 6 * 3
    assert ConditionSpec(Condition.BASELINE) in scenario.conditions
    assert scenario.with_overrides(output_dir="elsewhere").output_dir == "elsewhere"
