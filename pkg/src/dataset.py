"""Dataset files and the synthetic temporal-signature generator.

A dataset file holds one JSON record per line::

    {"id": "...", "label": 0, "days": [...], "payload_kind": "embeddings",
     "payload": [[...E rows of T values...]]}

For ``pixel_sets`` the payload is a list of T pixel matrices, each N x C.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np

from src.errors import DataError
from src.models import PayloadKind, PixelSetObservation, SequenceSample, SynthSpec

logger = logging.getLogger(__name__)


class DatasetError(DataError):
    """Base exception for dataset operations."""
    pass


class DatasetParseError(DatasetError):
    """Raised when dataset records are malformed."""
    pass


class InconsistentDatasetError(DatasetError):
    """Raised when samples disagree on E, T or C."""
    pass


class EmptyDatasetError(DatasetError):
    """Raised when an operation needs at least one sample."""
    default_reason = "empty_dataset"


def _parse_record(record: Dict[str, Any]) -> SequenceSample:
    if not isinstance(record, dict):
        raise ValueError("record must be a JSON object")
    for key in ("id", "label", "days", "payload_kind", "payload"):
        if key not in record:
            raise ValueError(f"missing field '{key}'")
    sample_id = str(record["id"])
    label = record["label"]
    if not isinstance(label, int) or isinstance(label, bool) or label < 0:
        raise ValueError(f"sample '{sample_id}': label must be a non-negative integer")
    days = np.asarray(record["days"], dtype=np.float64)
    if days.ndim != 1 or days.size == 0 or not np.all(np.isfinite(days)):
        raise ValueError(f"sample '{sample_id}': days must be a non-empty list of numbers")
    if np.any(np.diff(days) < 0):
        raise ValueError(f"sample '{sample_id}': days must be non-decreasing")
    days = days - days[0]
    kind = PayloadKind(record["payload_kind"])
    T = days.size

    if kind == PayloadKind.EMBEDDINGS:
        embeddings = np.asarray(record["payload"], dtype=np.float64)
        if embeddings.ndim != 2 or embeddings.shape[1] != T:
            raise ValueError(f"sample '{sample_id}': embeddings must be E x {T}")
        return SequenceSample(id=sample_id, label=label, days=days, payload_kind=kind,
                              embeddings=embeddings)

    sets = record["payload"]
    if not isinstance(sets, list) or len(sets) != T:
        raise ValueError(f"sample '{sample_id}': expected {T} pixel sets")
    observations = []
    for t, pixels in enumerate(sets):
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.ndim != 2 or pixels.shape[0] < 1:
            raise ValueError(f"sample '{sample_id}': pixel set {t} must be a non-empty N x C matrix")
        observations.append(PixelSetObservation(pixels=pixels, day=float(days[t])))
    channels = {obs.pixels.shape[1] for obs in observations}
    if len(channels) != 1:
        raise ValueError(f"sample '{sample_id}': channel count varies across acquisitions")
    return SequenceSample(id=sample_id, label=label, days=days, payload_kind=kind,
                          observations=observations)


def check_consistency(samples: Sequence[SequenceSample]) -> None:
    """
    Require one payload kind, one length T and one channel count across samples.

    Raises:
        InconsistentDatasetError: Naming the first sample that disagrees
    """
    if not samples:
        return
    first = samples[0]
    reference = (first.payload_kind, first.T, first.channels)
    for sample in samples[1:]:
        found = (sample.payload_kind, sample.T, sample.channels)
        if found != reference:
            raise InconsistentDatasetError(
                f"sample '{sample.id}' has (kind, T, channels) = "
                f"({found[0].value}, {found[1]}, {found[2]}), expected "
                f"({reference[0].value}, {reference[1]}, {reference[2]})")


def load_dataset(path: Path) -> List[SequenceSample]:
    """
    Load and validate a dataset file.

    Day stamps are shifted so every sequence starts at day 0.

    Args:
        path: JSON-lines dataset file

    Returns:
        List of validated samples (empty for an empty file)

    Raises:
        DatasetError: If the file is missing
        DatasetParseError: Listing every malformed line with its number
        InconsistentDatasetError: If samples disagree on kind, T or C
    """
    if not path.exists():
        raise DatasetError(f"Dataset file not found: {path}", reason="dataset_not_found")
    samples = []
    errors = []
    with open(path, 'r') as f:
        for number, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                samples.append(_parse_record(json.loads(line)))
            except json.JSONDecodeError as e:
                errors.append(f"line {number}: invalid JSON ({e.msg})")
            except (ValueError, TypeError) as e:
                errors.append(f"line {number}: {e}")

    if errors:
        raise DatasetParseError("; ".join(errors), reason="dataset_parse")
    if not samples:
        logger.warning("dataset %s is empty", path)
    check_consistency(samples)
    logger.info("loaded %d samples from %s", len(samples), path)
    return samples


def _to_record(sample: SequenceSample) -> Dict[str, Any]:
    if sample.payload_kind == PayloadKind.EMBEDDINGS:
        payload = sample.embeddings.tolist()
    else:
        payload = [obs.pixels.tolist() for obs in sample.observations]
    return {
        "id": sample.id,
        "label": int(sample.label),
        "days": [float(d) for d in sample.days],
        "payload_kind": sample.payload_kind.value,
        "payload": payload,
    }


def save_dataset(path: Path, samples: Sequence[SequenceSample]) -> Path:
    """Write samples as JSON lines; floats keep their exact fp64 value."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        for sample in samples:
            f.write(json.dumps(_to_record(sample)) + "\n")
    return path


def default_event_centers(spec: SynthSpec, days: np.ndarray) -> List[float]:
    """Centers on evenly spaced acquisitions, one per class."""
    n = spec.num_classes
    return [float(days[(2 * c + 1) * spec.T // (2 * n)]) for c in range(n)]


def class_curves(spec: SynthSpec) -> np.ndarray:
    """
    Noise-free temporal signature of every class.

    Returns:
        Array of shape (num_classes, T): a unit Gaussian bump per class
    """
    days = acquisition_days(spec)
    centers = spec.event_centers or default_event_centers(spec, days)
    step = spec.day_span / (spec.T - 1)
    widths = spec.event_widths or [1.5 * step] * spec.num_classes
    centers = np.asarray(centers, dtype=np.float64)[:, None]
    widths = np.asarray(widths, dtype=np.float64)[:, None]
    return np.exp(-0.5 * ((days[None, :] - centers) / widths) ** 2)


def acquisition_days(spec: SynthSpec) -> np.ndarray:
    return np.linspace(0.0, spec.day_span, spec.T)


def signal_mask(spec: SynthSpec) -> np.ndarray:
    """1 on the channels that carry the class signature, 0 elsewhere."""
    channels = spec.signal_channels
    if channels is None:
        channels = range(max(1, spec.channels // 2))
    mask = np.zeros(spec.channels)
    mask[list(channels)] = 1.0
    return mask


def generate_synthetic(spec: SynthSpec) -> List[SequenceSample]:
    """
    Generate class-separable sequences.

    Class c carries a unit-amplitude Gaussian bump centered on its event day
    in the signal channels, plus i.i.d. Gaussian noise of amplitude
    ``spec.noise`` on every value. Samples are interleaved by class, so any
    prefix of the list is close to balanced.

    Args:
        spec: Generator parameters

    Returns:
        List of samples, deterministic for a given spec
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    days = acquisition_days(spec)
    curves = class_curves(spec)
    mask = signal_mask(spec)

    samples = []
    for i in range(spec.samples_per_class):
        for label in range(spec.num_classes):
            signal = curves[label]
            sample_id = f"synth-{len(samples):06d}"
            if spec.payload_kind == PayloadKind.EMBEDDINGS:
                values = mask[:, None] * signal[None, :]
                values = values + spec.noise * rng.standard_normal(values.shape)
                samples.append(SequenceSample(id=sample_id, label=label, days=days.copy(),
                                              payload_kind=PayloadKind.EMBEDDINGS,
                                              embeddings=values))
                continue
            observations = []
            for t in range(spec.T):
                pixels = np.tile(mask * signal[t], (spec.pixels_per_observation, 1))
                pixels = pixels + spec.noise * rng.standard_normal(pixels.shape)
                observations.append(PixelSetObservation(pixels=pixels, day=float(days[t])))
            samples.append(SequenceSample(id=sample_id, label=label, days=days.copy(),
                                          payload_kind=PayloadKind.PIXEL_SETS,
                                          observations=observations))
    logger.info("generated %d synthetic samples", len(samples))
    return samples
