from pathlib import Path

import pytest
import yaml

from hlseg import config
from hlseg.core import hlnet

EXPECTED = yaml.safe_load((Path(__file__).parent / "default_constants.yaml").read_text())


def _plain(value):
    return list(value) if isinstance(value, tuple) else value


@pytest.mark.parametrize("entry", EXPECTED["constants"], ids=lambda e: e["name"])
def test_default_constant(entry):
    actual = _plain(getattr(config, entry["name"]))
    if isinstance(entry["value"], float):
        assert actual == pytest.approx(entry["value"])
    else:
        assert actual == entry["value"]


@pytest.mark.parametrize("name,rgb", EXPECTED["palette"].items())
def test_palette_colour(name, rgb):
    assert list(config.LABEL_PALETTE[config.CLASS_NAMES.index(name)]) == rgb


@pytest.mark.parametrize("key", EXPECTED["run_config"])
def test_default_run_config(key):
    assert config.load_run_config()[key] == EXPECTED["run_config"][key]


def test_default_network_config_uses_constants():
    cfg = hlnet.HLNetConfig()
    assert cfg.input_size == config.INPUT_SIZE
    assert cfg.expansion == config.EXPANSION_FACTOR
    assert tuple(cfg.dilation_rates) == config.DILATION_RATES
