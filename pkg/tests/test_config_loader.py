"""
Tests for RunConfig loading from YAML and key = value files
"""
import pytest
import yaml

from cayley.config_loader import RESOLVED_NAME, load_config, parse_key_value, write_resolved_config
from cayley.errors import ConfigInvalid


def test_defaults_resolve_exponents():
    config = load_config()
    assert config.scenario == "quadric"
    assert config.nu == pytest.approx(0.8)
    assert config.nu_p == pytest.approx(0.68)
    assert config.nu_pp == pytest.approx(0.56)


def test_small_key_value_file(small_config):
    config = load_config(small_config)
    assert config.link == [4, 4, 4]
    assert config.radial_density == 6
    assert config.t_list == [0.08, 0.04, 0.02, 0.01]


def test_overrides_win(small_config):
    config = load_config(small_config, {"t": 0.01, "seed": None})
    assert config.t == 0.01
    assert config.seed == 0


@pytest.mark.parametrize(
    "override, key",
    [
        ({"nu_pp": 0.7}, "nu_pp"),
        ({"t": 0.6}, "t"),
        ({"foo": 1}, "foo"),
        ({"delta": 1.5}, "delta"),
        ({"scenario": "torus"}, "scenario"),
        ({"link": [4, 4]}, "link"),
    ],
)
def test_invalid_values_name_the_key(override, key):
    with pytest.raises(ConfigInvalid) as info:
        load_config(overrides=override)
    assert info.value.key == key
    assert info.value.exit_code == 2


def test_missing_file(tmp_path):
    with pytest.raises(ConfigInvalid) as info:
        load_config(tmp_path / "absent.yaml")
    assert info.value.key == "config"


def test_scalar_list_in_yaml(tmp_path):
    path = tmp_path / "one.yaml"
    path.write_text("link: [4, 4, 4]\nt_list: 0.02\n", encoding="utf-8")
    assert load_config(path).t_list == [0.02]


def test_key_value_parsing():
    values = parse_key_value("# comentario\nt = 0.02  # escala\nlink = 4\nscenario = cone\n")
    assert values == {"t": 0.02, "link": [4], "scenario": "cone"}
    with pytest.raises(ConfigInvalid):
        parse_key_value("sin signo igual\n")


def test_resolved_config_is_sorted(tmp_path, small_config):
    path = write_resolved_config(load_config(small_config), tmp_path / "out")
    assert path.name == RESOLVED_NAME
    data = yaml.safe_load(path.read_text(encoding="utf-8"))
    assert data["nu"] == pytest.approx(0.8)
    assert list(data) == sorted(data)
