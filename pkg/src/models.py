"""Core data models for the L-TAE toolkit."""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from src.errors import ConfigurationError


class InvalidConfigError(ConfigurationError):
    """Raised when a configuration violates one of its invariants."""
    pass


class TemporalKind(Enum):
    """Temporal encoders available to the pipeline."""
    LTAE = "ltae"
    TAE = "tae"


class QueryMode(Enum):
    """How an L-TAE head obtains its master query."""
    PARAMETER = "parameter"
    AVERAGED = "averaged"


class PayloadKind(Enum):
    """Per-step data carried by a sequence sample."""
    EMBEDDINGS = "embeddings"
    PIXEL_SETS = "pixel_sets"


class OptimizerKind(Enum):
    """Optimizers supported by the training loop."""
    ADAM = "adam"
    SGD = "sgd"


def _require(condition: bool, message: str, reason: str) -> None:
    if not condition:
        raise InvalidConfigError(message, reason=reason)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_widths(name: str, widths: List[int]) -> None:
    _require(len(widths) >= 1, f"{name} must list at least one width", "empty_widths")
    _require(all(_is_int(w) and w >= 1 for w in widths),
             f"{name} must be positive integers, got {widths}", "invalid_widths")


def _check_temporal_common(cfg) -> None:
    for name in ("E", "T", "H", "K"):
        value = getattr(cfg, name)
        _require(_is_int(value) and value >= 1,
                 f"{name} must be a positive integer, got {value!r}", "invalid_dimension")
    _require(cfg.E % cfg.H == 0,
             f"H={cfg.H} does not divide E={cfg.E}", "heads_do_not_divide_channels")
    _require(_is_number(cfg.tau) and cfg.tau > 0, f"tau must be positive, got {cfg.tau!r}",
             "invalid_tau")
    _check_widths("mlp_widths", cfg.mlp_widths)


@dataclass
class LTAEConfig:
    """Hyper-parameters of a Lightweight Temporal Attention Encoder."""
    E: int = 256
    T: int = 24
    H: int = 16
    K: int = 8
    tau: float = 1000.0
    mlp_widths: List[int] = field(default_factory=lambda: [256, 128])
    seed: int = 0
    query: QueryMode = QueryMode.PARAMETER

    @property
    def E_prime(self) -> int:
        return self.E // self.H

    @property
    def output_size(self) -> int:
        return self.mlp_widths[-1]

    def validate(self) -> "LTAEConfig":
        _check_temporal_common(self)
        _require(self.mlp_widths[0] == self.E,
                 f"mlp_widths[0]={self.mlp_widths[0]} must equal E={self.E}",
                 "mlp_input_mismatch")
        return self


@dataclass
class TAEConfig:
    """
    Hyper-parameters of the baseline Temporal Attention Encoder.

    Each head projects all E channels to keys and queries through a shared
    projection of width H*K; head outputs are E-wide, so the MLP input is H*E.
    """
    E: int = 256
    T: int = 24
    H: int = 16
    K: int = 8
    tau: float = 1000.0
    mlp_widths: List[int] = field(default_factory=lambda: [4096, 128])
    seed: int = 0

    @property
    def qk_width(self) -> int:
        return self.H * self.K

    @property
    def output_size(self) -> int:
        return self.mlp_widths[-1]

    @classmethod
    def from_ltae(cls, config: LTAEConfig) -> "TAEConfig":
        """Build the TAE with the same (E, T, H, K, tau, MLP tail) as an L-TAE."""
        return cls(
            E=config.E,
            T=config.T,
            H=config.H,
            K=config.K,
            tau=config.tau,
            mlp_widths=[config.H * config.E] + list(config.mlp_widths[1:]),
            seed=config.seed,
        )

    def validate(self) -> "TAEConfig":
        _check_temporal_common(self)
        _require(self.mlp_widths[0] == self.H * self.E,
                 f"mlp_widths[0]={self.mlp_widths[0]} must equal H*E={self.H * self.E}",
                 "mlp_input_mismatch")
        return self


TemporalConfig = Union[LTAEConfig, TAEConfig]


@dataclass
class PipelineConfig:
    """Spatial encoder, temporal encoder and decoder of the end-to-end classifier."""
    temporal: TemporalConfig = field(default_factory=LTAEConfig)
    num_classes: int = 20
    payload_kind: PayloadKind = PayloadKind.PIXEL_SETS
    # Per-pixel MLP (first width = spectral channels C) and pooled MLP
    # (first width = 2 * last per-pixel width, last width = temporal E).
    pixel_widths: List[int] = field(default_factory=lambda: [10, 32, 64])
    pooled_widths: List[int] = field(default_factory=lambda: [128, 256])
    decoder_widths: List[int] = field(default_factory=lambda: [128, 64, 20])
    seed: int = 0

    @property
    def temporal_kind(self) -> TemporalKind:
        return TemporalKind.TAE if isinstance(self.temporal, TAEConfig) else TemporalKind.LTAE

    @property
    def input_channels(self) -> int:
        if self.payload_kind == PayloadKind.PIXEL_SETS:
            return self.pixel_widths[0]
        return self.temporal.E

    def validate(self) -> "PipelineConfig":
        self.temporal.validate()
        _require(_is_int(self.num_classes) and self.num_classes >= 1,
                 f"num_classes must be a positive integer, got {self.num_classes!r}",
                 "invalid_class_count")
        if self.payload_kind == PayloadKind.PIXEL_SETS:
            _check_widths("pixel_widths", self.pixel_widths)
            _check_widths("pooled_widths", self.pooled_widths)
            _require(self.pooled_widths[0] == 2 * self.pixel_widths[-1],
                     f"pooled_widths[0]={self.pooled_widths[0]} must equal twice the "
                     f"per-pixel output width {self.pixel_widths[-1]}", "pooled_input_mismatch")
            _require(self.pooled_widths[-1] == self.temporal.E,
                     f"spatial output width {self.pooled_widths[-1]} must equal "
                     f"temporal E={self.temporal.E}", "spatial_output_mismatch")
        _check_widths("decoder_widths", self.decoder_widths)
        _require(len(self.decoder_widths) == 3,
                 "decoder_widths must describe a 2-layer MLP (three widths)", "decoder_depth")
        _require(self.decoder_widths[0] == self.temporal.output_size,
                 f"decoder_widths[0]={self.decoder_widths[0]} must equal the temporal "
                 f"output size {self.temporal.output_size}", "decoder_input_mismatch")
        _require(self.decoder_widths[-1] == self.num_classes,
                 f"decoder output width {self.decoder_widths[-1]} must equal "
                 f"num_classes={self.num_classes}", "decoder_output_mismatch")
        return self


@dataclass
class TrainSettings:
    """Optimization settings for the training loop."""
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: OptimizerKind = OptimizerKind.ADAM
    seed: int = 0
    folds: int = 1
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def validate(self) -> "TrainSettings":
        for name in ("epochs", "batch_size", "folds"):
            value = getattr(self, name)
            _require(_is_int(value) and value >= 1,
                     f"{name} must be a positive integer, got {value!r}", "invalid_training_setting")
        _require(_is_number(self.learning_rate) and self.learning_rate > 0,
                 f"learning_rate must be positive, got {self.learning_rate!r}",
                 "invalid_training_setting")
        _require(_is_number(self.eps) and self.eps > 0 and len(self.betas) == 2
                 and all(_is_number(b) and 0 <= b < 1 for b in self.betas),
                 f"invalid optimizer constants betas={self.betas} eps={self.eps}",
                 "invalid_training_setting")
        return self


@dataclass
class SynthSpec:
    """Parameters of the synthetic temporal-signature generator."""
    num_classes: int = 4
    T: int = 24
    channels: int = 10
    samples_per_class: int = 100
    # Event centers and widths in days; defaults spread the centers over the season.
    event_centers: Optional[List[float]] = None
    event_widths: Optional[List[float]] = None
    noise: float = 0.3
    seed: int = 0
    payload_kind: PayloadKind = PayloadKind.PIXEL_SETS
    pixels_per_observation: int = 8
    signal_channels: Optional[List[int]] = None
    day_span: float = 300.0

    def validate(self) -> "SynthSpec":
        for name in ("num_classes", "channels", "samples_per_class", "pixels_per_observation"):
            value = getattr(self, name)
            _require(_is_int(value) and value >= 1,
                     f"{name} must be a positive integer, got {value!r}", "invalid_synth_spec")
        _require(_is_int(self.T) and self.T >= 2, f"T must be at least 2, got {self.T!r}",
                 "invalid_synth_spec")
        _require(_is_number(self.noise) and self.noise >= 0
                 and _is_number(self.day_span) and self.day_span > 0,
                 "noise must be non-negative and day_span positive", "invalid_synth_spec")
        for name in ("event_centers", "event_widths"):
            values = getattr(self, name)
            if values is not None:
                _require(len(values) == self.num_classes,
                         f"{name} needs one entry per class", "invalid_synth_spec")
        if self.event_centers is not None:
            _require(len(set(self.event_centers)) == len(self.event_centers),
                     "event centers must be distinct across classes", "duplicate_event_centers")
        else:
            # Default centers sit on distinct acquisitions only while classes fit in T.
            _require(self.num_classes <= self.T,
                     f"{self.num_classes} classes need explicit event_centers with T={self.T}",
                     "duplicate_event_centers")
        if self.event_widths is not None:
            _require(all(_is_number(w) and w > 0 for w in self.event_widths),
                     "event widths must be positive", "invalid_synth_spec")
        if self.signal_channels is not None:
            _require(len(self.signal_channels) >= 1
                     and all(_is_int(c) and 0 <= c < self.channels
                             for c in self.signal_channels),
                     f"signal_channels must index the {self.channels} channels",
                     "invalid_synth_spec")
        return self


@dataclass
class RunConfig:
    """Everything a command needs: model, training settings and generator spec."""
    model: PipelineConfig = field(default_factory=PipelineConfig)
    training: TrainSettings = field(default_factory=TrainSettings)
    synth: SynthSpec = field(default_factory=SynthSpec)

    def validate(self) -> "RunConfig":
        self.model.validate()
        self.training.validate()
        self.synth.validate()
        return self


@dataclass
class PixelSetObservation:
    """One acquisition: N sampled pixels with C spectral channels."""
    pixels: np.ndarray
    day: float


@dataclass
class SequenceSample:
    """A labelled time series of embeddings or pixel sets."""
    id: str
    label: int
    days: np.ndarray
    payload_kind: PayloadKind
    embeddings: Optional[np.ndarray] = None  # E x T
    observations: Optional[List[PixelSetObservation]] = None

    @property
    def T(self) -> int:
        return len(self.days)

    @property
    def channels(self) -> int:
        if self.payload_kind == PayloadKind.EMBEDDINGS:
            return self.embeddings.shape[0]
        return self.observations[0].pixels.shape[1]


@dataclass
class AttentionRecord:
    """Attention masks, per-head outputs and final output of a temporal encoder."""
    masks: np.ndarray  # (..., H, T)
    head_outputs: List  # H tensors of shape (..., E') or (..., E) for the TAE
    output: object  # Tensor of shape (..., mlp_widths[-1])


@dataclass
class ConfusionMatrix:
    """Counts indexed by [true class, predicted class]."""
    counts: np.ndarray

    @classmethod
    def empty(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def update(self, true_labels, predicted_labels) -> None:
        np.add.at(self.counts, (np.asarray(true_labels, dtype=int),
                                np.asarray(predicted_labels, dtype=int)), 1)


@dataclass
class Term:
    """An asymptotic cost: its printed form and its monomials over cost symbols."""
    display: str
    monomials: List[Tuple[str, ...]]


@dataclass
class AsymptoticCost:
    """Asymptotic cost of a temporal module, column by column."""
    method: str
    keys: Optional[Term] = None
    mask: Optional[Term] = None
    output: Optional[Term] = None
    # Keys and mask share one term when they cannot be separated (GRU memory update).
    combined: Optional[Term] = None


@dataclass
class CostReport:
    """Exact parameter and FLOP counts of one temporal module for one sequence."""
    method: str
    T: int
    param_count: int
    flops_keys: int
    flops_queries: int
    flops_mask: int
    flops_output: int
    flops_mlp: int
    asymptotic: AsymptoticCost

    @property
    def flops_total(self) -> int:
        return (self.flops_keys + self.flops_queries + self.flops_mask
                + self.flops_output + self.flops_mlp)


@dataclass
class MetricRow:
    """One line of the metric log."""
    epoch: int
    split: str
    loss: float
    oa: float
    miou: float


@dataclass
class TrainResult:
    """Best-epoch parameters and the full per-epoch metric log."""
    state: Dict[str, np.ndarray]
    log: List[MetricRow]
    best_epoch: int
    best_oa: float
    best_miou: float


@dataclass
class Evaluation:
    """Mean loss and confusion matrix of a model over a set of samples."""
    loss: float
    confusion: ConfusionMatrix


@dataclass
class EvaluationReport:
    """Metrics of a checkpoint on a dataset."""
    loss: float
    oa: float
    miou: float
    per_class_iou: List[Optional[float]]  # None for classes absent from truth and prediction
    confusion: ConfusionMatrix

    @property
    def num_samples(self) -> int:
        return self.confusion.total


@dataclass
class FoldOutcome:
    """Best-epoch metrics and emitted files of one training run."""
    fold: int
    best_epoch: int
    best_oa: float
    best_miou: float
    checkpoint: Path
    metric_log: Path


@dataclass
class TrainingOutcome:
    """All folds of a training command; ``summary`` is set for cross-validation."""
    folds: List[FoldOutcome]
    summary: Optional[Path] = None
