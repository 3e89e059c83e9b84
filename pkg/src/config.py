"""Loading and validation of run configuration files."""

import json
import logging
import math
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Dict, Optional, Union, get_args, get_origin, get_type_hints

import yaml

from src.errors import ConfigurationError
from src.models import (
    LTAEConfig, OptimizerKind, PayloadKind, PipelineConfig, QueryMode, RunConfig, SynthSpec,
    TAEConfig, TemporalKind, TrainSettings,
)

logger = logging.getLogger(__name__)


class ConfigError(ConfigurationError):
    """Raised when a configuration file cannot be read or parsed."""
    pass


def read_document(path: Path) -> Dict[str, Any]:
    """
    Read a YAML or JSON document, chosen by file suffix.

    Args:
        path: Path to the configuration file

    Returns:
        The parsed mapping (empty for an empty file)

    Raises:
        ConfigError: If the file is missing, unreadable or not a mapping
    """
    if not path.exists():
        raise ConfigError(f"Configuration file not found: {path}", reason="config_not_found")
    try:
        content = path.read_text()
        if path.suffix in ['.yaml', '.yml']:
            data = yaml.safe_load(content)
        elif path.suffix == '.json':
            data = json.loads(content) if content.strip() else None
        else:
            raise ConfigError(
                f"Unsupported configuration format: {path.suffix}. Use .yaml, .yml, or .json",
                reason="config_format",
            )
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigError(f"Failed to parse configuration file: {e}", reason="config_parse")
    except IOError as e:
        raise ConfigError(f"Failed to read configuration file: {e}", reason="config_io")

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("Configuration must be a mapping of sections", reason="config_shape")
    return data


def _section(data: Dict[str, Any], name: str) -> Dict[str, Any]:
    section = data.get(name) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"'{name}' must be a mapping", reason="config_shape")
    return dict(section)


def _coerce(value: Any, hint: Any, where: str) -> Any:
    """Check a value against a field annotation; numeric strings such as '1e-3' become floats."""
    origin = get_origin(hint)
    if origin is Union:
        options = [arg for arg in get_args(hint) if arg is not type(None)]
        if value is None and len(options) < len(get_args(hint)):
            return None
        return _coerce(value, options[0], where) if len(options) == 1 else value
    if origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"'{where}' must be a list, got {value!r}", reason="config_type")
        args = get_args(hint)
        if origin is tuple:
            if len(value) != len(args):
                raise ConfigError(f"'{where}' must have {len(args)} entries, got {value!r}",
                                  reason="config_type")
            return tuple(_coerce(v, a, f"{where}[{i}]")
                         for i, (v, a) in enumerate(zip(value, args)))
        return [_coerce(v, args[0], f"{where}[{i}]") for i, v in enumerate(value)]
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"'{where}' must be an integer, got {value!r}", reason="config_type")
        return value
    if hint is float:
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                pass
        if (isinstance(value, bool) or not isinstance(value, (int, float))
                or not math.isfinite(value)):
            raise ConfigError(f"'{where}' must be a number, got {value!r}", reason="config_type")
        return float(value)
    return value


def _build(cls, data: Dict[str, Any], section: str):
    """Instantiate a config dataclass, rejecting undeclared keys and mistyped values."""
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown keys in '{section}': {', '.join(unknown)}",
                          reason="config_unknown_key")
    hints = get_type_hints(cls)
    values = {key: _coerce(value, hints[key], f"{section}.{key}") for key, value in data.items()}
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"Invalid '{section}' section: {e}", reason="config_shape")


def _enum(enum_cls, value, section: str, key: str):
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(str(value).lower())
    except ValueError:
        choices = ", ".join(member.value for member in enum_cls)
        raise ConfigError(f"'{section}.{key}' must be one of: {choices}; got {value!r}",
                          reason="config_choice")


def temporal_from_dict(data: Dict[str, Any]):
    data = dict(data)
    kind = _enum(TemporalKind, data.pop("kind", TemporalKind.LTAE.value), "model.temporal", "kind")
    if kind == TemporalKind.TAE:
        return _build(TAEConfig, data, "model.temporal")
    if "query" in data:
        data["query"] = _enum(QueryMode, data["query"], "model.temporal", "query")
    return _build(LTAEConfig, data, "model.temporal")


def pipeline_from_dict(data: Dict[str, Any]) -> PipelineConfig:
    """Build a PipelineConfig from its nested mapping form."""
    data = dict(data)
    if "temporal" in data:
        data["temporal"] = temporal_from_dict(_section(data, "temporal"))
    if "payload_kind" in data:
        data["payload_kind"] = _enum(PayloadKind, data["payload_kind"], "model", "payload_kind")
    spatial = _section(data, "spatial")
    data.pop("spatial", None)
    for key in ("pixel_widths", "pooled_widths"):
        if key in spatial:
            data[key] = spatial[key]
    return _build(PipelineConfig, data, "model")


def pipeline_to_dict(config: PipelineConfig) -> Dict[str, Any]:
    """Nested mapping form of a PipelineConfig, inverse of ``pipeline_from_dict``."""
    temporal = asdict(config.temporal)
    temporal["kind"] = config.temporal_kind.value
    if "query" in temporal:
        temporal["query"] = temporal["query"].value
    return {
        "temporal": temporal,
        "num_classes": config.num_classes,
        "payload_kind": config.payload_kind.value,
        "spatial": {
            "pixel_widths": list(config.pixel_widths),
            "pooled_widths": list(config.pooled_widths),
        },
        "decoder_widths": list(config.decoder_widths),
        "seed": config.seed,
    }


def training_from_dict(data: Dict[str, Any]) -> TrainSettings:
    data = dict(data)
    if "optimizer" in data:
        data["optimizer"] = _enum(OptimizerKind, data["optimizer"], "training", "optimizer")
    return _build(TrainSettings, data, "training")


def synth_from_dict(data: Dict[str, Any]) -> SynthSpec:
    data = dict(data)
    if "payload_kind" in data:
        data["payload_kind"] = _enum(PayloadKind, data["payload_kind"], "synth", "payload_kind")
    return _build(SynthSpec, data, "synth")


def load_run_config(path: Optional[Path] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Load a run configuration and apply command-line overrides.

    Overrides are ``training`` keys (``seed``, ``epochs``, ``batch_size``,
    ``learning_rate``, ``folds``); ``seed`` also reseeds the model and the
    synthetic generator so all randomness flows from one value. The temporal
    encoder's seed is kept equal to the model seed, which is the one a
    pipeline initializes from. The result is fully validated before it is
    returned.

    Args:
        path: YAML/JSON file, or None for the built-in defaults
        overrides: Values that replace the file's, None entries ignored

    Returns:
        A validated RunConfig

    Raises:
        ConfigError: If the file cannot be read or has unknown keys
        InvalidConfigError: If a value violates a configuration invariant
    """
    data = read_document(path) if path is not None else {}
    unknown = sorted(set(data) - {"synth", "model", "training"})
    if unknown:
        raise ConfigError(f"Unknown sections: {', '.join(unknown)}", reason="config_unknown_key")

    config = RunConfig(
        model=pipeline_from_dict(_section(data, "model")),
        training=training_from_dict(_section(data, "training")),
        synth=synth_from_dict(_section(data, "synth")),
    )

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in {f.name for f in fields(TrainSettings)}:
            raise ConfigError(f"Unknown override: {key}", reason="config_unknown_key")
        if key == "seed":
            config.model.seed = value
            config.model.temporal.seed = value
            config.synth.seed = value
        setattr(config.training, key, value)
        logger.info("override training.%s = %r", key, value)

    return config.validate()
