from pathlib import Path

import pytest

from rhfl.config import (
    ABLATION_PRESETS, ExperimentSpec, FederationConfig, apply_overrides, dumps, load_config, loads,
)
from rhfl.errors import ConfigError

from _configs import TINY_TOML


def test_empty_config_gives_defaults():
    spec = loads("")
    fed = spec.federation
    assert fed == FederationConfig()
    assert fed.dlr.schedule_scale == 10.0
    assert (fed.loss.ce_weight, fed.loss.rce_weight, fed.loss.temperature) == (0.4, 0.9, 4.0)
    assert fed.eccr.confidence_gain == 1.4
    assert fed.loss.rce_log_floor == -4.0
    assert fed.train.learning_rate == 0.001
    assert fed.local_epochs == 2 and fed.public_classes == 20
    assert fed.noisy_clients == (0, 1, 2, 3)
    assert spec.seeds == (0,)


def test_reference_desk_config():
    t, d = FederationConfig().train, FederationConfig().data
    assert (t.clients, t.rounds, t.pretrain_epochs, t.batch_size) == (4, 20, 30, 32)
    assert (d.classes, d.dim, d.samples_per_client, d.public_size, d.spread) == (10, 20, 2000, 1000, 0.35)


def test_dump_echoes_defaults():
    text = dumps(loads(""))
    for needle in ("schedule_scale = 10.0", "ce_weight = 0.4", "rce_weight = 0.9",
                   "confidence_gain = 1.4", "temperature = 4.0"):
        assert needle in text


def test_pairflip_above_half_rejected():
    with pytest.raises(ConfigError, match="pairflip"):
        loads('[noise]\nkind = "pairflip"\nrate = 0.7\n')


@pytest.mark.parametrize("text,name", [
    ("[train]\nroundz = 3\n", "train.roundz"),
    ("[bogus]\nx = 1\n", "bogus"),
    ("[experiment]\nseedz = [1]\n", "experiment.seedz"),
    ('[sweep]\n"noise.colour" = [1]\n', "noise.colour"),
])
def test_unknown_keys_are_named(text, name):
    with pytest.raises(ConfigError, match=name.replace(".", r"\.")):
        loads(text)


@pytest.mark.parametrize("text", [
    "[train]\nclients = 1\n",
    "[train]\nlocal_epochs = 0\n",
    "[train]\npretrain_epochs = 1\n",
    "[loss]\nrce_log_floor = 1.0\n",
    "[noise]\nrate = 1.0\n",
    "[train]\nrounds = \"many\"\n",
    "[experiment]\nseeds = []\n",
    "[data]\npublic_size = 0\n",
    "[noise]\nnoisy_clients = [7]\n",
    "not toml at all [",
])
def test_invariant_violations_rejected(text):
    with pytest.raises(ConfigError):
        loads(text)


def test_roundtrip_is_fixed_point():
    text = TINY_TOML + '\n[sweep]\n"noise.rate" = [0.1, 0.2]\n"noise.kind" = ["symflip", "pairflip"]\n'
    spec = loads(text)
    again = loads(dumps(spec))
    assert again == spec
    assert dumps(again) == dumps(spec)


def test_grid_is_axis_major():
    spec = loads('[sweep]\n"noise.rate" = [0.1, 0.2]\n"noise.kind" = ["symflip", "pairflip"]\n')
    points = [p for p, _ in spec.grid()]
    assert points == [
        {"noise.rate": 0.1, "noise.kind": "symflip"}, {"noise.rate": 0.1, "noise.kind": "pairflip"},
        {"noise.rate": 0.2, "noise.kind": "symflip"}, {"noise.rate": 0.2, "noise.kind": "pairflip"},
    ]
    assert spec.grid()[3][1].noise.kind == "pairflip"


def test_sweep_point_violations_rejected_at_load():
    with pytest.raises(ConfigError):
        loads('[noise]\nkind = "pairflip"\n[sweep]\n"noise.rate" = [0.2, 0.6]\n')


def test_ablation_presets_in_table_order():
    assert list(ABLATION_PRESETS) == ["none", "hfl", "sl", "hfl+sl", "hfl+sl+dlr", "hfl+sl+dlr+eccr"]
    assert [f.label for f in ABLATION_PRESETS.values()] == list(ABLATION_PRESETS)
    with pytest.raises(ConfigError):
        apply_overrides(FederationConfig(), {"ablation": "dlr"})


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")


def test_load_from_file(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text(TINY_TOML)
    spec = load_config(path)
    assert isinstance(spec, ExperimentSpec)
    assert spec.federation.train.rounds == 2


def test_shipped_reference_config_loads():
    path = Path(__file__).resolve().parent.parent / "configs" / "reference.toml"
    spec = load_config(path)
    assert spec.federation == FederationConfig()
    assert spec.seeds == (0, 1, 2, 3, 4)
