from pathlib import Path

import pytest
from pydantic import ValidationError

from src.backend.classes import IntentKind
from src.config import CostConfig, EnvConfig, default_out_dir, dump_config, load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_defaults():
    cfg = load_config()
    assert cfg.preset == "desk"
    assert cfg.env.costs.gamma[IntentKind.SUB] == 0.01
    assert cfg.env.costs.H == 30
    assert cfg.env.stack_size == 2
    assert cfg.eval.seeds == [0, 1, 2]


@pytest.mark.parametrize("name", ["desk.yaml", "smoke.yaml"])
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.env.top_k == cfg.splits.top_k


def test_overrides_and_paper_preset():
    cfg = load_config(overrides={"seed": 9, "preset": "paper", "model": {"exec_hidden": 64}})
    assert cfg.seed == 9
    assert cfg.model.exec_hidden == 64
    assert cfg.model.intent_hidden == 512
    assert cfg.a2c.iterations == 50000


def test_dumped_config_reloads(tmp_path):
    cfg = load_config(CONFIGS / "smoke.yaml")
    path = tmp_path / "config.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(path).model_dump() == cfg.model_dump()


def test_invalid_configs():
    with pytest.raises(ValidationError):
        load_config(overrides={"env": {"top_k": 10}})
    with pytest.raises(ValidationError):
        load_config(overrides={"env": {"stack_size": 4}})
    with pytest.raises(ValidationError):
        load_config(overrides={"world": {"colour": "blue"}})


def test_cost_config():
    assert CostConfig.uniform(0.5).gamma[IntentKind.CUR] == 0.5
    with pytest.raises(ValidationError):
        CostConfig(gamma={IntentKind.CUR: 0.1})
    with pytest.raises(ValidationError):
        CostConfig.uniform(-1.0)
    with pytest.raises(ValidationError):
        CostConfig(gamma={**CostConfig().gamma, IntentKind.DONE: 1.0})
    assert EnvConfig(costs=CostConfig.uniform(0.1, H=5)).costs.H == 5


def test_default_out_dir(monkeypatch):
    monkeypatch.delenv("INTENTION_NAV_OUT", raising=False)
    assert default_out_dir() == Path("runs")
    monkeypatch.setenv("INTENTION_NAV_OUT", "/tmp/elsewhere")
    assert default_out_dir() == Path("/tmp/elsewhere")
