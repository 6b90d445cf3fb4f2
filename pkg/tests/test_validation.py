import pytest

from backend.validation import (
    EXPERIMENT_KEYS,
    ExperimentKeyValidator,
    load_experiment_config,
    parse_key_values,
)
from engine import ParameterError


@pytest.fixture
def validator():
    return ExperimentKeyValidator()


@pytest.mark.parametrize("key,value,expected", [
    ("lambda", "0.075", 0.075),
    ("runs", "3", 3),
    ("runs", "4.0", 4),
    ("squared", "yes", True),
    ("squared", "OFF", False),
    ("sweep", " radius ", "radius"),
    ("values", "0, 0.05; 0.1", (0.0, 0.05, 0.1)),
    ("size", "48x64", (48, 64)),
    ("EPOCHS", "2", 2),
])
def test_conversions(validator, key, value, expected):
    result = validator.validate_key(key, value)
    assert result.valid, result.message
    assert result.converted_value == expected


@pytest.mark.parametrize("key,value,fragment", [
    ("runs", "2.5", "Expected INT"),
    ("lambda", "nan", "Expected FLOAT"),
    ("squared", "maybe", "Expected BOOL"),
    ("runs", "0", "below minimum"),
    ("classes", "300", "above maximum"),
    ("lr", "0", "below minimum"),
    ("sweep", "temperature", "not in allowed values"),
    ("values", " , ", "Expected FLOAT_LIST"),
])
def test_rejections(validator, key, value, fragment):
    result = validator.validate_key(key, value)
    assert not result.valid
    assert fragment in result.message


def test_unknown_key_suggestions(validator):
    result = validator.validate_key("epoch", "3")
    assert not result.valid
    assert "Did you mean: epochs" in result.message
    assert not validator.validate_key("", "1").valid
    assert validator.get_similar_keys("zzz") == []


def test_defaults_cover_every_key(validator):
    assert set(validator.defaults()) == set(EXPERIMENT_KEYS)
    assert validator.key_count == len(EXPERIMENT_KEYS)


def test_parse_key_values():
    text = "# sweep setup\nsweep = m\n\nValues = 0, 1  # two cells\n"
    assert parse_key_values(text) == {"sweep": "m", "values": "0, 1"}
    with pytest.raises(ParameterError, match="duplicate"):
        parse_key_values("runs = 1\nRUNS = 2\n")
    with pytest.raises(ParameterError, match="Line 2"):
        parse_key_values("runs = 1\nbroken line\n")


def test_load_experiment_config(tmp_path):
    path = tmp_path / "sweep.cfg"
    path.write_text("sweep = radius\nvalues = 2, 4\nsize = 24\n", encoding='utf-8')
    config = load_experiment_config(path, defaults={"epochs": 3, "unrelated": 1})
    assert config['sweep'] == "radius"
    assert config['values'] == (2.0, 4.0)
    assert config['size'] == (24, 24)
    assert config['epochs'] == 3
    assert "unrelated" not in config
    assert config['runs'] == EXPERIMENT_KEYS['runs'].default


def test_load_experiment_config_errors(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("runs = 0\nlamda = 1\n", encoding='utf-8')
    with pytest.raises(ParameterError) as info:
        load_experiment_config(path)
    assert "runs" in str(info.value) and "lamda" in str(info.value)

    path.write_text("size = 8, 8, 8\n", encoding='utf-8')
    with pytest.raises(ParameterError, match="size"):
        load_experiment_config(path)
