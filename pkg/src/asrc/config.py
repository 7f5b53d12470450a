import logging
import os
import re
from dataclasses import fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

from asrc.domain.model import ConfigError, PipelineConfig

logger = logging.getLogger(__name__)


class UnknownKey(ConfigError):
    pass


class ConfigTypeError(ConfigError):
    def __init__(self, key: str, value: str, expected: str):
        super().__init__(f"{key}: cannot read {value!r} as {expected}")
        self.key = key


def get_database_uri() -> str:
    return os.environ.get("ASRC_DB_URI", "sqlite://")


def get_threads() -> Optional[int]:
    raw = os.environ.get("ASRC_THREADS")
    if raw is None or not raw.strip():
        return None
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigTypeError("ASRC_THREADS", raw, "a positive integer")
    if threads < 1:
        raise ConfigTypeError("ASRC_THREADS", raw, "a positive integer")
    return threads


PRESETS: Dict[str, Dict[str, Union[int, float, str]]] = {
    "20news": dict(
        k0=50,
        s=150,
        lambda2=2**-3,
        t1=7,
        beta=1e-3,
        struct="d-256-64",
        t2=2,
        pca_components=500,
    ),
    "umist": dict(
        k0=5, s=8, lambda2=4.0, t1=7, beta=10.0, struct="d-256-64", t2=2
    ),
    "coil20": dict(
        k0=5, s=8, lambda2=8.0, t1=10, beta=1.0, struct="d-256-64", t2=1
    ),
    "mnist": dict(
        k0=10, s=64, lambda2=2**-6, t1=15, beta=1e-3, struct="d-256-64", t2=2
    ),
    "jaffe": dict(
        k0=15, s=2, lambda2=2**-6, t1=10, beta=1.0, struct="d-256-64", t2=4
    ),
    "mice_protein": dict(
        k0=10, s=2, lambda2=2**-6, t1=20, beta=1.0, struct="d-256-64", t2=2
    ),
    "usps": dict(
        k0=10, s=50, lambda2=4.0, t1=7, beta=10.0, struct="d-128-64", t2=2
    ),
}

# file keys that differ from the field names
ALIASES = {"t": "interval", "r": "rounds"}

POWER = re.compile(r"^\s*([-+]?\d+(?:\.\d*)?)\s*\^\s*([-+]?\d+)\s*$")


def _number(key: str, value: str) -> float:
    match = POWER.match(value)
    if match:
        return float(match.group(1)) ** int(match.group(2))
    try:
        return float(value)
    except ValueError:
        raise ConfigTypeError(key, value, "a number")


def _integer(key: str, value: str) -> int:
    number = _number(key, value)
    if number != int(number):
        raise ConfigTypeError(key, value, "an integer")
    return int(number)


def _convert(key: str, value: str, kind: str) -> Union[int, float, str, None]:
    if key == "delta" and value.lower() == "auto":
        return 0.0
    if key == "n_clusters" and value.lower() in ("", "none"):
        return None
    if kind == "int":
        return _integer(key, value)
    if kind == "float":
        return _number(key, value)
    return value


def _kind(field_type) -> str:
    if field_type in (int, Optional[int]):
        return "int"
    return "float" if field_type is float else "str"


KINDS = {f.name: _kind(f.type) for f in fields(PipelineConfig)}


def parse_config_text(text: str) -> PipelineConfig:
    values: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected key=value, got {line!r}")
        raw_key, value = (part.strip() for part in line.split("=", 1))
        key = raw_key.lower()
        key = ALIASES.get(key, key)
        if key != "preset" and key not in KINDS:
            raise UnknownKey(f"line {number}: unknown key {raw_key!r}")
        values[key] = value

    settings: Dict = {}
    preset = values.pop("preset", None)
    if preset is not None:
        if preset.lower() not in PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}; choose from {sorted(PRESETS)}"
            )
        settings.update(PRESETS[preset.lower()])
        logger.debug(f"applied preset {preset}")
    for key, value in values.items():
        settings[key] = _convert(key, value, KINDS[key])
    return PipelineConfig(**settings).validate()


def parse_config(path: Union[str, Path, None]) -> PipelineConfig:
    if path is None:
        return PipelineConfig().validate()
    return parse_config_text(Path(path).read_text())


def parse_grid(entries: Iterable[str]) -> Dict[str, List]:
    """Read sweep entries such as ``lambda2=2^-6,1,4`` into value lists."""
    grid: Dict[str, List] = {}
    for entry in entries:
        if "=" not in entry:
            raise ConfigError(f"expected key=v1,v2,..., got {entry!r}")
        raw_key, raw_values = (part.strip() for part in entry.split("=", 1))
        key = ALIASES.get(raw_key.lower(), raw_key.lower())
        if key not in KINDS:
            raise UnknownKey(f"unknown key {raw_key!r}")
        values = [v.strip() for v in raw_values.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"{raw_key}: no values to sweep")
        grid[key] = [_convert(key, v, KINDS[key]) for v in values]
    return grid
