"""Flat dotted-key config parsing, typed resolution, and round-trips."""

import pytest

from parq.config import (
    REQUIRED,
    Option,
    format_config,
    load_config_file,
    parse_config_text,
    resolve_options,
    write_resolved,
)
from parq.errors import ConfigError


def test_parse_values_json_and_bare_strings():
    text = """
# a comment
seed = 7
train.learning_rate = 3e-4
gen.save_depths = true
out = runs/exp one
name = "quoted # hash"
model.encoder_channels = [32, 64]
resume = null
"""
    values = parse_config_text(text)
    assert values == {
        "seed": 7,
        "train.learning_rate": 3e-4,
        "gen.save_depths": True,
        "out": "runs/exp one",
        "name": "quoted # hash",
        "model.encoder_channels": [32, 64],
        "resume": None,
    }


def test_parse_rejects_malformed_lines():
    with pytest.raises(ConfigError, match="cfg:2: expected 'key = value'"):
        parse_config_text("a = 1\nnonsense line", source="cfg")
    with pytest.raises(ConfigError, match="bad key"):
        parse_config_text("Bad-Key = 1")
    with pytest.raises(ConfigError, match="duplicate key 'a'"):
        parse_config_text("a = 1\na = 2")


def test_load_config_file_missing(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config file"):
        load_config_file(tmp_path / "absent.cfg")


OPTIONS = (
    Option("seed", "int", 0),
    Option("out", "str", REQUIRED),
    Option("train.steps", "int", 600),
    Option("train.taus", "floats", (0.25, 0.5)),
    Option("eval.queries", "int", None),
    Option("gen.save_depths", "bool", False),
)


def test_resolve_precedence_defaults_file_flags():
    resolved = resolve_options(
        OPTIONS,
        file_values={"out": "a", "train.steps": 100},
        overrides={"train.steps": 25, "seed": None},
    )
    assert resolved["train.steps"] == 25
    assert resolved["seed"] == 0
    assert resolved["out"] == "a"
    assert resolved["eval.queries"] is None
    assert resolved["train.taus"] == (0.25, 0.5)


def test_resolve_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config keys: bogus.key"):
        resolve_options(OPTIONS, file_values={"out": "a", "bogus.key": 1})


def test_resolve_requires_required_keys():
    with pytest.raises(ConfigError, match="out is required"):
        resolve_options(OPTIONS, file_values={})


@pytest.mark.parametrize(
    "key,value,message",
    [
        ("seed", "abc", "expected an integer"),
        ("seed", True, "expected an integer"),
        ("seed", 1.5, "expected an integer"),
        ("out", 3, "expected a string"),
        ("gen.save_depths", "true-ish", "expected true or false"),
        ("train.taus", [], "non-empty list"),
        ("train.taus", ["x"], "expected numbers"),
        ("train.taus", 0.5, "non-empty list"),
    ],
)
def test_coercion_errors_name_the_key(key, value, message):
    with pytest.raises(ConfigError, match=f"{key}.*{message}"):
        resolve_options(OPTIONS, file_values={"out": "a", key: value})


def test_float_options_accept_integers():
    options = (Option("lr", "float", 0.1),)
    assert resolve_options(options, file_values={"lr": 3}) == {"lr": 3.0}


def test_format_config_round_trip(tmp_path):
    values = {
        "seed": 7,
        "out": "runs/a b",
        "train.taus": (0.25, 0.5),
        "eval.queries": None,
        "gen.save_depths": True,
    }
    text = format_config(values)
    parsed = parse_config_text(text)
    assert parsed["train.taus"] == [0.25, 0.5]
    assert parsed["eval.queries"] is None
    assert parsed["out"] == "runs/a b"

    write_resolved(tmp_path / "r.cfg", values, header="resolved")
    again = load_config_file(tmp_path / "r.cfg")
    assert again == parsed
