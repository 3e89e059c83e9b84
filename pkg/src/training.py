"""Loss, metrics, optimizers, cross-validation splits and the training loop."""

import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.errors import ConfigurationError, NumericError
from src.layers import Module
from src.models import (
    ConfusionMatrix, Evaluation, MetricRow, OptimizerKind, SequenceSample, TrainResult,
    TrainSettings,
)
from src.spatial import Batch, Classifier, collate
from src.dataset import EmptyDatasetError
from src.tensor import ContractError, Tensor, backward, log_softmax, mean, mul, no_grad, pick

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["epoch", "split", "loss", "OA", "mIoU"]


class TrainingError(NumericError):
    """Raised when training diverges."""
    default_reason = "divergence"


class UndefinedMetricError(NumericError):
    """Raised when a metric has no defined value for a confusion matrix."""
    default_reason = "undefined_metric"


class FoldError(ConfigurationError):
    """Raised when a dataset cannot be split into the requested folds."""
    default_reason = "invalid_folds"


def cross_entropy(logits: Tensor, labels: Union[int, Sequence[int], np.ndarray]) -> Tensor:
    """
    Negative log-likelihood of the true class under softmax(logits).

    Args:
        logits: Shape (C,) with an integer label, or (B, C) with B labels
        labels: True class indices

    Returns:
        Scalar loss; the batch mean for 2-D logits

    Raises:
        ContractError: If a label is outside [0, C)
    """
    C = logits.shape[-1]
    label_array = np.asarray(labels)
    if label_array.size == 0 or np.any(label_array < 0) or np.any(label_array >= C):
        raise ContractError(f"labels {label_array.tolist()} outside [0, {C})")
    picked = pick(log_softmax(logits), labels)
    return mul(mean(picked) if logits.ndim == 2 else picked, -1.0)


def overall_accuracy(cm: ConfusionMatrix) -> float:
    """Fraction of samples on the diagonal."""
    if cm.total == 0:
        raise UndefinedMetricError("overall accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts)) / cm.total


def per_class_iou(cm: ConfusionMatrix) -> np.ndarray:
    """IoU of every class; NaN where the class is absent from truth and prediction."""
    counts = cm.counts.astype(np.float64)
    hits = np.diag(counts)
    unions = counts.sum(axis=1) + counts.sum(axis=0) - hits
    iou = np.full(cm.num_classes, np.nan)
    present = unions > 0
    iou[present] = hits[present] / unions[present]
    return iou


def mean_iou(cm: ConfusionMatrix) -> float:
    """
    Mean IoU over the classes with a non-empty union.

    Raises:
        UndefinedMetricError: If every union is empty
    """
    iou = per_class_iou(cm)
    present = ~np.isnan(iou)
    if not present.any():
        raise UndefinedMetricError("mean IoU is undefined: no class occurs in truth or prediction")
    return float(iou[present].mean())


class Adam:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, parameters: List[Tensor], learning_rate: float = 1e-3,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.parameters = parameters
        self.learning_rate = learning_rate
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.steps = 0
        self.first = [np.zeros_like(p.values) for p in parameters]
        self.second = [np.zeros_like(p.values) for p in parameters]

    def step(self) -> None:
        self.steps += 1
        correction1 = 1.0 - self.beta1 ** self.steps
        correction2 = 1.0 - self.beta2 ** self.steps
        for p, m, v in zip(self.parameters, self.first, self.second):
            if p.grad is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad ** 2
            p.values -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


class SGD:
    """Plain gradient descent."""

    def __init__(self, parameters: List[Tensor], learning_rate: float = 1e-2):
        self.parameters = parameters
        self.learning_rate = learning_rate

    def step(self) -> None:
        for p in self.parameters:
            if p.grad is not None:
                p.values -= self.learning_rate * p.grad


def build_optimizer(model: Module, settings: TrainSettings):
    if settings.optimizer == OptimizerKind.SGD:
        return SGD(model.parameters(), settings.learning_rate)
    return Adam(model.parameters(), settings.learning_rate, settings.betas, settings.eps)


def kfold_split(dataset: Sequence[SequenceSample], k: int,
                seed: int = 0) -> List[Tuple[List[SequenceSample], List[SequenceSample]]]:
    """
    Partition a dataset into k disjoint validation folds.

    Fold sizes differ by at most one, the larger folds first.

    Args:
        dataset: Samples to split
        k: Number of folds (at least 2, at most the dataset size)
        seed: Seed of the shuffling permutation

    Returns:
        k (train, validation) pairs; the validation parts cover the dataset

    Raises:
        EmptyDatasetError: If the dataset is empty
        FoldError: If k is out of range
    """
    if not dataset:
        raise EmptyDatasetError("cannot split an empty dataset")
    if k < 2 or k > len(dataset):
        raise FoldError(f"cannot split {len(dataset)} samples into {k} folds")
    order = np.random.default_rng(seed).permutation(len(dataset))
    folds = np.array_split(order, k)
    splits = []
    for i, held_out in enumerate(folds):
        train_idx = np.concatenate([fold for j, fold in enumerate(folds) if j != i])
        splits.append(([dataset[j] for j in train_idx], [dataset[j] for j in held_out]))
    return splits


def take(batch: Batch, indices: np.ndarray) -> Batch:
    """Rows of a collated batch."""
    return Batch(
        days=batch.days[indices],
        labels=batch.labels[indices],
        embeddings=None if batch.embeddings is None else batch.embeddings[indices],
        pixels=None if batch.pixels is None else batch.pixels[indices],
        pixel_mask=None if batch.pixel_mask is None else batch.pixel_mask[indices],
    )


def evaluate(model: Classifier, samples: Sequence[SequenceSample],
             batch_size: int = 256) -> Evaluation:
    """
    Mean cross-entropy and confusion matrix of a model on samples.

    Raises:
        EmptyDatasetError: If there are no samples
    """
    if not samples:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    data = collate(samples)
    confusion = ConfusionMatrix.empty(model.config.num_classes)
    total = 0.0
    with no_grad():
        for start in range(0, data.size, batch_size):
            batch = take(data, np.arange(start, min(start + batch_size, data.size)))
            logits, _ = model(batch)
            total += cross_entropy(logits, batch.labels).item() * batch.size
            confusion.update(batch.labels, logits.values.argmax(axis=-1))
    return Evaluation(loss=total / data.size, confusion=confusion)


def train(model: Classifier, train_set: Sequence[SequenceSample], settings: TrainSettings,
          validation: Optional[Sequence[SequenceSample]] = None) -> TrainResult:
    """
    Train a classifier end to end with mini-batch cross-entropy.

    After every epoch the model is evaluated on the validation samples (the
    training samples when none are given); the parameters of the epoch with
    the best validation OA are restored on the model and returned.

    Args:
        model: Classifier to train in place
        train_set: Training samples
        settings: Optimization settings
        validation: Optional held-out samples

    Returns:
        TrainResult with the best-epoch state and the per-epoch metric log

    Raises:
        EmptyDatasetError: If the training set is empty
        TrainingError: If a batch loss is not finite
    """
    if not train_set:
        raise EmptyDatasetError("cannot train on an empty dataset")
    settings.validate()
    validation = validation if validation else train_set
    rng = np.random.default_rng(settings.seed)
    optimizer = build_optimizer(model, settings)
    data = collate(train_set)
    log: List[MetricRow] = []
    best = (-1.0, 0.0, 0, model.state())

    for epoch in range(1, settings.epochs + 1):
        order = rng.permutation(data.size)
        confusion = ConfusionMatrix.empty(model.config.num_classes)
        total = 0.0
        for number, start in enumerate(range(0, data.size, settings.batch_size)):
            batch = take(data, order[start:start + settings.batch_size])
            model.zero_grad()
            logits, _ = model(batch)
            loss = cross_entropy(logits, batch.labels)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {number}")
            backward(loss)
            optimizer.step()
            total += value * batch.size
            confusion.update(batch.labels, logits.values.argmax(axis=-1))

        log.append(MetricRow(epoch, "train", total / data.size,
                             overall_accuracy(confusion), mean_iou(confusion)))
        result = evaluate(model, validation, max(settings.batch_size, 256))
        oa, miou = overall_accuracy(result.confusion), mean_iou(result.confusion)
        log.append(MetricRow(epoch, "val", result.loss, oa, miou))
        logger.info("epoch %d: train loss %.4f, val loss %.4f, val OA %.4f, val mIoU %.4f",
                    epoch, total / data.size, result.loss, oa, miou)
        if oa > best[0]:
            best = (oa, miou, epoch, model.state())

    best_oa, best_miou, best_epoch, state = best
    model.load_state(state)
    return TrainResult(state=state, log=log, best_epoch=best_epoch,
                       best_oa=best_oa, best_miou=best_miou)


def metric_frame(log: Sequence[MetricRow]) -> pd.DataFrame:
    return pd.DataFrame(
        [(row.epoch, row.split, row.loss, row.oa, row.miou) for row in log],
        columns=METRIC_COLUMNS,
    )


def write_metric_log(path: Path, log: Sequence[MetricRow]) -> Path:
    """Write the metric log as CSV rows: epoch, split, loss, OA, mIoU."""
    path.parent.mkdir(parents=True, exist_ok=True)
    metric_frame(log).to_csv(path, index=False, float_format="%.10g")
    return path
