"""Saving and restoring trained classifiers as structured text."""

import json
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from src.config import pipeline_from_dict, pipeline_to_dict
from src.errors import DataError
from src.models import PipelineConfig

FORMAT = "ltae-checkpoint/1"


class CheckpointError(DataError):
    """Raised when a checkpoint cannot be read or is malformed."""
    pass


def save_checkpoint(path: Path, config: PipelineConfig, state: Dict[str, np.ndarray]) -> Path:
    """
    Write a pipeline configuration and its parameters to a JSON document.

    Each parameter is stored with its shape and its row-major values; floats
    are written in shortest round-trip form, so a reload is bit-exact.

    Args:
        path: Destination file
        config: Configuration the parameters belong to
        state: Parameter values keyed by dotted name

    Returns:
        Path to the saved checkpoint
    """
    parameters = [
        {
            "name": name,
            "shape": list(values.shape),
            "values": [float(v) for v in np.asarray(values, dtype=np.float64).reshape(-1)],
        }
        for name, values in state.items()
    ]
    document = {"format": FORMAT, "config": pipeline_to_dict(config), "parameters": parameters}

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(document, f, indent=1)
    return path


def load_checkpoint(path: Path) -> Tuple[PipelineConfig, Dict[str, np.ndarray]]:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Args:
        path: Checkpoint file

    Returns:
        The validated pipeline configuration and the parameter values

    Raises:
        CheckpointError: If the file is missing, unparsable or inconsistent
    """
    try:
        with open(path, 'r') as f:
            document = json.load(f)
    except FileNotFoundError:
        raise CheckpointError(f"Checkpoint not found: {path}", reason="checkpoint_not_found")
    except json.JSONDecodeError as e:
        raise CheckpointError(f"Invalid checkpoint format: {e}", reason="checkpoint_parse")

    try:
        if document["format"] != FORMAT:
            raise CheckpointError(f"Unsupported checkpoint format: {document['format']}",
                                  reason="checkpoint_format")
        config = pipeline_from_dict(document["config"]).validate()
        state = {}
        for entry in document["parameters"]:
            shape = tuple(int(n) for n in entry["shape"])
            values = np.array(entry["values"], dtype=np.float64)
            if values.size != int(np.prod(shape)):
                raise CheckpointError(
                    f"Parameter {entry['name']}: {values.size} values for shape {shape}",
                    reason="checkpoint_shape")
            state[entry["name"]] = values.reshape(shape)
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"Corrupted checkpoint data: {e}", reason="checkpoint_parse")
    return config, state
