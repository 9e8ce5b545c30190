from __future__ import annotations

import pytest

from harmofl.config import ConfigError, parse, serialize
from harmofl.federation import Algorithm

MINIMAL = """\
[federation]
rounds = 3
num_clients = 2
local_steps = 4
algorithm = fedavg
"""

FULL = """\
[experiment]
output_dir = out/x
seeds = 4, 5
drift_verification = true

[federation]
rounds = 3
num_clients = 2
local_steps = 4
algorithm = harmofl
alpha = 0.1
hidden_dims =
client_weights = 0.25, 0.75
feature_scale = auto

[data]
samples_per_client = 30
height = 16
width = 16

[client.0]
contrast_gain = 1.0

[client.1]
contrast_gain = 2.0
brightness_offset = 0.1
band_gains = 0.1:0.3:0.5, 0.3:0.6:2.0
"""


def test_minimal_config_fills_defaults():
    cfg = parse(MINIMAL)
    assert cfg.fed.rounds == 3 and cfg.fed.algorithm is Algorithm.FEDAVG
    assert cfg.seeds == (0, 1, 2)
    assert cfg.alpha == 0.05 and cfg.fed.decay_v == 0.1
    assert cfg.data.num_clients == 2 and len(cfg.data.shift_profiles) == 2


def test_full_config_values():
    cfg = parse(FULL)
    assert cfg.output_dir == "out/x" and cfg.seeds == (4, 5) and cfg.drift_verification
    assert cfg.fed.hidden_dims == () and cfg.fed.client_weights == (0.25, 0.75)
    assert cfg.fed.feature_scale is None
    p = cfg.data.shift_profiles[1]
    assert p.contrast_gain == 2.0 and p.band_gains == ((0.1, 0.3, 0.5), (0.3, 0.6, 2.0))


def test_alpha_survives_for_other_variants():
    cfg = parse(MINIMAL.replace("algorithm = fedavg", "algorithm = fedavg\nalpha = 0.2"))
    assert cfg.fed.alpha == 0.0
    assert cfg.fed_config(0, "harmofl").alpha == 0.2
    assert cfg.fed_config(7).seed == 7


@pytest.mark.parametrize("text", [MINIMAL, FULL])
def test_round_trip(text):
    cfg = parse(text)
    again = parse(serialize(cfg))
    assert again == cfg
    assert serialize(again) == serialize(cfg)


def test_missing_required_field_is_named():
    with pytest.raises(ConfigError) as err:
        parse(MINIMAL.replace("rounds = 3\n", ""))
    assert "rounds" in str(err.value)
    assert err.value.field == "federation"


def test_unknown_key_reports_line():
    text = MINIMAL + "etal = 0.1\n"
    with pytest.raises(ConfigError) as err:
        parse(text, source="cfg.ini")
    assert err.value.line == 6 and err.value.field == "etal"
    assert str(err.value).startswith("cfg.ini:6:")


def test_unknown_section_and_bad_values():
    with pytest.raises(ConfigError):
        parse(MINIMAL + "[extra]\nx = 1\n")
    with pytest.raises(ConfigError) as err:
        parse(MINIMAL.replace("rounds = 3", "rounds = three"))
    assert err.value.field == "rounds" and err.value.line == 2
    with pytest.raises(ConfigError):
        parse(MINIMAL.replace("fedavg", "fedsgd"))
    with pytest.raises(ConfigError):
        parse(MINIMAL + "[client.0]\ncontrast_gain = 1.0\n")
    with pytest.raises(ConfigError):
        parse("[experiment]\nseeds = 0\n")
    with pytest.raises(ConfigError):
        parse(MINIMAL + "[experiment]\nseeds =\n")


def test_syntax_error_is_config_error():
    with pytest.raises(ConfigError):
        parse("rounds = 3\n")


def test_digest_tracks_content():
    a, b = parse(MINIMAL), parse(MINIMAL.replace("rounds = 3", "rounds = 4"))
    assert a.digest() == parse(serialize(a)).digest()
    assert a.digest() != b.digest()
    assert a.digest() == a.with_output_dir("elsewhere").digest()
