import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Optional, Tuple, Union

from engine.errors import ParameterError

logger = logging.getLogger(__name__)

SWEEPS = ("lambda", "m", "radius")


class KeyType(Enum):
    """Value types accepted in experiment configs"""
    FLOAT = "FLOAT"
    INT = "INT"
    BOOL = "BOOL"
    STRING = "STRING"
    FLOAT_LIST = "FLOAT_LIST"
    INT_LIST = "INT_LIST"


@dataclass(frozen=True)
class KeySpec:
    type: KeyType
    default: Any
    description: str
    min: Optional[float] = None
    max: Optional[float] = None
    choices: Tuple[str, ...] = ()


Value = Union[int, float, bool, str, Tuple[int, ...], Tuple[float, ...]]


@dataclass(frozen=True)
class ValidationResult:
    """Immutable validation result"""
    valid: bool
    message: str
    converted_value: Optional[Value] = None


# Every key an experiment config may set
EXPERIMENT_KEYS: Dict[str, KeySpec] = {
    'sweep': KeySpec(KeyType.STRING, 'lambda', "swept quantity", choices=SWEEPS),
    'values': KeySpec(KeyType.FLOAT_LIST, (0.0, 0.075), "sweep values, one CSV row each"),
    'runs': KeySpec(KeyType.INT, 5, "seeds per sweep value", min=1),
    'seed': KeySpec(KeyType.INT, 0, "base seed; run k uses seed + k", min=0),
    'lambda': KeySpec(KeyType.FLOAT, 0.075, "regularization strength when not swept", min=0.0),
    'm': KeySpec(KeyType.FLOAT, 0.0, "compactness weight when not swept", min=0.0),
    'radius': KeySpec(KeyType.FLOAT, 4.0, "coarsening erosion radius when not swept", min=0.0),
    'epsilon': KeySpec(KeyType.FLOAT, 2.0, "Douglas-Peucker tolerance", min=0.0),
    'epochs': KeySpec(KeyType.INT, 8, "training epochs per run", min=1),
    'lr': KeySpec(KeyType.FLOAT, 0.01, "Adam learning rate", min=1e-9),
    'classes': KeySpec(KeyType.INT, 3, "classes in the synthetic corpus", min=2, max=255),
    'size': KeySpec(KeyType.INT_LIST, (64, 64), "image height, width"),
    'train_images': KeySpec(KeyType.INT, 200, "training images per run", min=1),
    'val_images': KeySpec(KeyType.INT, 50, "validation images per run", min=1),
    'test_images': KeySpec(KeyType.INT, 50, "test images per run", min=1),
    'workers': KeySpec(KeyType.INT, 2, "parallel sweep cells", min=1),
    'squared': KeySpec(KeyType.BOOL, False, "squared norm in the SLIC loss"),
    'eval_radius': KeySpec(KeyType.STRING, 'auto', "boundary recall radius ('auto' or an integer)"),
    'out': KeySpec(KeyType.STRING, 'experiment.csv', "CSV report path"),
}


class ExperimentKeyValidator:
    __slots__ = ['_keys', '_key_names', '_type_converters', '_bool_values']

    def __init__(self, keys: Optional[Dict[str, KeySpec]] = None):
        self._keys = dict(EXPERIMENT_KEYS if keys is None else keys)
        self._key_names: FrozenSet[str] = frozenset(self._keys)
        self._type_converters = {
            KeyType.FLOAT: self._convert_to_float,
            KeyType.INT: self._convert_to_int,
            KeyType.BOOL: self._convert_to_bool,
            KeyType.STRING: self._convert_to_string,
            KeyType.FLOAT_LIST: self._convert_to_float_list,
            KeyType.INT_LIST: self._convert_to_int_list,
        }
        self._bool_values = {
            frozenset({'true', '1', 'yes', 'on'}): True,
            frozenset({'false', '0', 'no', 'off'}): False,
        }

    @lru_cache(maxsize=256)
    def validate_key(self, key: str, value: str) -> ValidationResult:
        if not key:
            return ValidationResult(False, "Key name cannot be empty")
        name = key.strip().lower()
        if name not in self._keys:
            suggestions = self.get_similar_keys(name)
            suggestion_msg = f" Did you mean: {', '.join(suggestions[:3])}?" if suggestions else ""
            return ValidationResult(False, f"Unknown experiment key '{key}'.{suggestion_msg}")

        spec = self._keys[name]
        try:
            converted = self._type_converters[spec.type](value)
        except (ValueError, TypeError) as e:
            return ValidationResult(False, f"Invalid value for {name}. Expected {spec.type.value}: {e}")

        numbers = converted if isinstance(converted, tuple) else (converted,)
        if spec.type in (KeyType.FLOAT, KeyType.INT, KeyType.FLOAT_LIST, KeyType.INT_LIST):
            for number in numbers:
                if spec.min is not None and number < spec.min:
                    return ValidationResult(False, f"Value {number} below minimum {spec.min} for {name}")
                if spec.max is not None and number > spec.max:
                    return ValidationResult(False, f"Value {number} above maximum {spec.max} for {name}")
        if spec.choices and converted not in spec.choices:
            return ValidationResult(False, f"Value '{converted}' not in allowed values {list(spec.choices)} for {name}")
        return ValidationResult(True, f"Valid value for {name}", converted)

    @staticmethod
    def _convert_to_float(value: str) -> float:
        number = float(value.strip())
        if number != number or number in (float('inf'), float('-inf')):
            raise ValueError("value must be finite")
        return number

    @staticmethod
    def _convert_to_int(value: str) -> int:
        text = value.strip()
        number = float(text)
        if not number.is_integer():
            raise ValueError(f"'{text}' is not an integer")
        return int(number)

    def _convert_to_bool(self, value: str) -> bool:
        lowered = value.strip().lower()
        for accepted, result in self._bool_values.items():
            if lowered in accepted:
                return result
        raise ValueError(f"Cannot parse '{value}' as boolean")

    @staticmethod
    def _convert_to_string(value: str) -> str:
        return value.strip()

    def _convert_to_float_list(self, value: str) -> Tuple[float, ...]:
        items = [item for item in value.replace(';', ',').split(',') if item.strip()]
        if not items:
            raise ValueError("list is empty")
        return tuple(self._convert_to_float(item) for item in items)

    def _convert_to_int_list(self, value: str) -> Tuple[int, ...]:
        items = [item for item in value.replace(';', ',').replace('x', ',').split(',') if item.strip()]
        if not items:
            raise ValueError("list is empty")
        return tuple(self._convert_to_int(item) for item in items)

    def get_similar_keys(self, key: str, max_suggestions: int = 5) -> List[str]:
        """Substring matches first, then shared prefixes"""
        suggestions = [name for name in sorted(self._key_names) if key in name or name in key]
        if len(suggestions) < max_suggestions:
            prefix = key[:2]
            suggestions += [name for name in sorted(self._key_names)
                            if prefix and name.startswith(prefix) and name not in suggestions]
        return suggestions[:max_suggestions]

    def validate_config(self, entries: Dict[str, str]) -> Dict[str, ValidationResult]:
        return {key: self.validate_key(key, value) for key, value in entries.items()}

    def defaults(self) -> Dict[str, Any]:
        return {name: spec.default for name, spec in self._keys.items()}

    @property
    def key_count(self) -> int:
        return len(self._key_names)


def parse_key_values(text: str) -> Dict[str, str]:
    """`key = value` lines; blank lines and # comments are skipped"""
    entries: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ParameterError(f"Line {number}: expected 'key = value', got '{raw.strip()}'")
        key, value = line.split('=', 1)
        key = key.strip().lower()
        if key in entries:
            raise ParameterError(f"Line {number}: duplicate key '{key}'")
        entries[key] = value.strip()
    return entries


def load_experiment_config(path: Union[str, Path], defaults: Optional[Dict[str, Any]] = None,
                           validator: Optional[ExperimentKeyValidator] = None) -> Dict[str, Any]:
    """Validated experiment config merged over `defaults`, then the key defaults"""
    validator = validator or ExperimentKeyValidator()
    entries = parse_key_values(Path(path).read_text(encoding='utf-8'))
    results = validator.validate_config(entries)
    errors = [result.message for result in results.values() if not result.valid]
    if errors:
        raise ParameterError("Invalid experiment config: " + "; ".join(errors))

    config = validator.defaults()
    config.update({key: value for key, value in (defaults or {}).items() if key in config})
    config.update({key: result.converted_value for key, result in results.items()})
    size = config['size']
    if len(size) == 1:
        config['size'] = (size[0], size[0])
    elif len(size) != 2:
        raise ParameterError(f"size needs one or two integers, got {list(size)}")
    logger.info(f"Experiment config {path}: sweep {config['sweep']} over {list(config['values'])}")
    return config
