"""End-to-end classifier: spatial set encoder, temporal encoder and decoder."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.errors import DataError
from src.layers import MLP, Module
from src.models import (
    AttentionRecord, PayloadKind, PipelineConfig, PixelSetObservation, SequenceSample,
)
from src.tensor import DimensionError, Tensor, concat, mul, reshape, sqrt, sum, transpose
from src.temporal import build_temporal_encoder

logger = logging.getLogger(__name__)


class EmptySetError(DataError):
    """Raised when a pixel set has no pixels."""
    pass


class InconsistentBatchError(DataError):
    """Raised when samples cannot be stacked into one batch."""
    pass


@dataclass
class Batch:
    """Stacked model inputs for B sequences of equal length T."""
    days: np.ndarray  # (B, T)
    labels: np.ndarray  # (B,)
    embeddings: Optional[np.ndarray] = None  # (B, E, T)
    pixels: Optional[np.ndarray] = None  # (B, T, N, C), zero-padded
    pixel_mask: Optional[np.ndarray] = None  # (B, T, N), 1 for real pixels

    @property
    def size(self) -> int:
        return len(self.labels)


def collate(samples: Sequence[SequenceSample]) -> Batch:
    """
    Stack samples into one batch, padding pixel sets to the largest set.

    Raises:
        InconsistentBatchError: If samples differ in payload kind, T or channels
        EmptySetError: If an observation has no pixels
    """
    if not samples:
        raise InconsistentBatchError("cannot collate an empty list of samples")
    kinds = {s.payload_kind for s in samples}
    lengths = {s.T for s in samples}
    if len(kinds) != 1 or len(lengths) != 1:
        raise InconsistentBatchError(f"mixed payload kinds {kinds} or lengths {lengths} in one batch")
    days = np.stack([np.asarray(s.days, dtype=np.float64) for s in samples])
    labels = np.array([s.label for s in samples], dtype=int)
    kind = kinds.pop()

    if kind == PayloadKind.EMBEDDINGS:
        shapes = {s.embeddings.shape for s in samples}
        if len(shapes) != 1:
            raise InconsistentBatchError(f"embedding shapes differ within a batch: {shapes}")
        return Batch(days=days, labels=labels,
                     embeddings=np.stack([s.embeddings for s in samples]).astype(np.float64))

    observations = [obs for s in samples for obs in s.observations]
    for obs in observations:
        if obs.pixels.shape[0] == 0:
            raise EmptySetError(f"empty pixel set at day {obs.day}")
    channels = {obs.pixels.shape[1] for obs in observations}
    if len(channels) != 1:
        raise InconsistentBatchError(f"spectral channel counts differ: {sorted(channels)}")
    T = lengths.pop()
    N = max(obs.pixels.shape[0] for obs in observations)
    pixels = np.zeros((len(samples), T, N, channels.pop()))
    mask = np.zeros((len(samples), T, N))
    for b, sample in enumerate(samples):
        for t, obs in enumerate(sample.observations):
            n = obs.pixels.shape[0]
            pixels[b, t, :n] = obs.pixels
            mask[b, t, :n] = 1.0
    return Batch(days=days, labels=labels, pixels=pixels, pixel_mask=mask)


class SetEncoder(Module):
    """
    Permutation-invariant encoder of a pixel set.

    A shared MLP embeds every pixel, the embeddings are pooled by their mean
    and (population) standard deviation over the set, and a second MLP maps
    the pooled vector to the temporal encoder's width E.
    """

    def __init__(self, pixel_widths: List[int], pooled_widths: List[int],
                 rng: np.random.Generator):
        super().__init__()
        self.pixel_mlp = self.add_module("pixel_mlp", MLP(pixel_widths, rng, activate_last=True))
        self.pooled_mlp = self.add_module("pooled_mlp", MLP(pooled_widths, rng))

    def pool(self, pixels: Tensor, mask: np.ndarray) -> Tensor:
        """
        Masked mean/std pooling over the pixel axis.

        Args:
            pixels: Raw pixels of shape (..., N, C)
            mask: Shape (..., N), 1 for real pixels and 0 for padding

        Returns:
            Pooled features of shape (..., 2F)
        """
        counts = mask.sum(axis=-1, keepdims=True)
        if np.any(counts == 0):
            raise EmptySetError("cannot pool an empty pixel set")
        weights = Tensor((mask / counts)[..., None])
        features = self.pixel_mlp(pixels)
        average = sum(mul(features, weights), axis=-2)
        deviation = features - reshape(average, average.shape[:-1] + (1, average.shape[-1]))
        spread = sqrt(sum(mul(mul(deviation, deviation), weights), axis=-2))
        return concat([average, spread], axis=-1)

    def forward(self, pixels: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        if mask is None:
            mask = np.ones(pixels.shape[:-1])
        return self.pooled_mlp(self.pool(pixels, mask))

    __call__ = forward


def spatial_encode(obs: PixelSetObservation, encoder: SetEncoder) -> Tensor:
    """
    Embed one acquisition.

    Raises:
        EmptySetError: If the observation has no pixels
    """
    pixels = np.asarray(obs.pixels, dtype=np.float64)
    if pixels.ndim != 2 or pixels.shape[0] == 0:
        raise EmptySetError(f"pixel set at day {obs.day} is empty or not N x C: {pixels.shape}")
    return encoder(Tensor(pixels))


class Classifier(Module):
    """
    Spatial encoder S, temporal encoder and decoder D composed end to end.

    All stages draw their initial weights from one generator seeded with
    ``PipelineConfig.seed``; the temporal configuration's own ``seed`` only
    applies when that encoder is built on its own.
    """

    def __init__(self, config: PipelineConfig):
        super().__init__()
        self.config = config.validate()
        rng = np.random.default_rng(config.seed)
        self.spatial: Optional[SetEncoder] = None
        if config.payload_kind == PayloadKind.PIXEL_SETS:
            self.spatial = self.add_module(
                "spatial", SetEncoder(config.pixel_widths, config.pooled_widths, rng))
        self.temporal = self.add_module("temporal", build_temporal_encoder(config.temporal, rng))
        self.decoder = self.add_module("decoder", MLP(config.decoder_widths, rng))
        logger.debug("built classifier with %d parameters", self.parameter_count())

    def embed(self, batch: Batch) -> Tensor:
        """Per-step embeddings of shape (B, E, T)."""
        if self.config.payload_kind == PayloadKind.EMBEDDINGS:
            if batch.embeddings is None:
                raise InconsistentBatchError("model expects embeddings, batch holds pixel sets")
            return Tensor(batch.embeddings)
        if batch.pixels is None:
            raise InconsistentBatchError("model expects pixel sets, batch holds embeddings")
        if batch.pixels.shape[-1] != self.config.input_channels:
            raise DimensionError(f"pixels have {batch.pixels.shape[-1]} channels, model expects "
                                 f"{self.config.input_channels}")
        return transpose(self.spatial(Tensor(batch.pixels), batch.pixel_mask))

    def forward(self, batch: Batch) -> Tuple[Tensor, AttentionRecord]:
        """
        Class logits for a batch.

        Returns:
            Logits of shape (B, num_classes) and the temporal attention record
        """
        record = self.temporal(self.embed(batch), batch.days)
        return self.decoder(record.output), record

    __call__ = forward

    def classify(self, sample: SequenceSample) -> Tensor:
        """Logits of shape (num_classes,) for one sample."""
        logits, _ = self.forward(collate([sample]))
        return reshape(logits, (self.config.num_classes,))

    def predict(self, samples: Sequence[SequenceSample]) -> np.ndarray:
        logits, _ = self.forward(collate(samples))
        return logits.values.argmax(axis=-1)
