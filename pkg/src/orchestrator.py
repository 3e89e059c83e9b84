"""Orchestrator component coordinating the batch commands."""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.checkpoint import load_checkpoint, save_checkpoint
from src.complexity import count_flops
from src.config import ConfigError
from src.dataset import EmptyDatasetError, generate_synthetic, load_dataset, save_dataset
from src.errors import DataError
from src.models import (
    CostReport, EvaluationReport, FoldOutcome, PipelineConfig, RunConfig, SequenceSample,
    SynthSpec, TemporalConfig, TrainingOutcome,
)
from src.spatial import Classifier, collate
from src.tensor import no_grad
from src.training import (
    evaluate, kfold_split, mean_iou, overall_accuracy, per_class_iou, take, train,
    write_metric_log,
)

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["fold", "best_epoch", "OA", "mIoU"]


class DatasetMismatchError(DataError):
    """Raised when a dataset does not fit the model it is used with."""
    default_reason = "dataset_model_mismatch"


def check_compatible(samples: Sequence[SequenceSample], config: PipelineConfig) -> None:
    """
    Require samples that the configured model can consume.

    Raises:
        EmptyDatasetError: If there are no samples
        DatasetMismatchError: On a payload kind, length, channel or label mismatch
    """
    if not samples:
        raise EmptyDatasetError("dataset holds no samples")
    first = samples[0]
    if first.payload_kind != config.payload_kind:
        raise DatasetMismatchError(
            f"dataset holds {first.payload_kind.value}, model expects {config.payload_kind.value}")
    if first.T != config.temporal.T:
        raise DatasetMismatchError(f"dataset sequences have T={first.T}, model expects "
                                   f"T={config.temporal.T}")
    if first.channels != config.input_channels:
        raise DatasetMismatchError(f"dataset has {first.channels} channels, model expects "
                                   f"{config.input_channels}")
    labels = [s.label for s in samples if s.label >= config.num_classes]
    if labels:
        raise DatasetMismatchError(f"label {labels[0]} outside the model's "
                                   f"{config.num_classes} classes")


class Orchestrator:
    """Runs each command end to end: load, compute, write outputs."""

    def synth(self, spec: SynthSpec, out_path: Path) -> List[SequenceSample]:
        """
        Generate a synthetic dataset and write it to a dataset file.

        Args:
            spec: Generator parameters
            out_path: Destination dataset file

        Returns:
            The generated samples
        """
        samples = generate_synthetic(spec)
        save_dataset(out_path, samples)
        logger.info("wrote %d samples to %s", len(samples), out_path)
        return samples

    def train(self, config: RunConfig, dataset_path: Path, out_dir: Path,
              validation_path: Optional[Path] = None) -> TrainingOutcome:
        """
        Train a classifier and write its checkpoint and metric log.

        With ``training.folds`` = k > 1 the dataset is split into k folds; one
        model per fold is trained on the other folds and validated on it, and
        its files go to ``out_dir/fold_<i>``. ``summary.csv`` then lists the
        best validation OA/mIoU per fold plus their mean and standard deviation.

        Args:
            config: Validated run configuration
            dataset_path: Training dataset file
            out_dir: Output directory
            validation_path: Optional held-out dataset (single-run only)

        Returns:
            TrainingOutcome describing every fold

        Raises:
            ConfigError: If a validation set is combined with folds
            EmptyDatasetError: If the dataset is empty
            DatasetMismatchError: If the dataset does not fit the model
        """
        config.validate()
        samples = load_dataset(dataset_path)
        check_compatible(samples, config.model)
        settings = config.training

        if settings.folds == 1:
            validation = None
            if validation_path is not None:
                validation = load_dataset(validation_path)
                check_compatible(validation, config.model)
            return TrainingOutcome(folds=[self._fit(config, samples, validation, out_dir, 1)])

        if validation_path is not None:
            raise ConfigError("a validation dataset cannot be combined with cross-validation folds",
                              reason="validation_with_folds")
        outcomes = []
        for fold, (train_set, validation) in enumerate(
                kfold_split(samples, settings.folds, settings.seed), 1):
            logger.info("fold %d/%d: %d train, %d validation samples",
                        fold, settings.folds, len(train_set), len(validation))
            outcomes.append(self._fit(config, train_set, validation, out_dir / f"fold_{fold}", fold))
        summary = self._write_summary(out_dir / "summary.csv", outcomes)
        return TrainingOutcome(folds=outcomes, summary=summary)

    def _fit(self, config: RunConfig, train_set: List[SequenceSample],
             validation: Optional[List[SequenceSample]], out_dir: Path, fold: int) -> FoldOutcome:
        model = Classifier(config.model)
        result = train(model, train_set, config.training, validation)
        checkpoint = save_checkpoint(out_dir / "checkpoint.json", config.model, result.state)
        metric_log = write_metric_log(out_dir / "metrics.csv", result.log)
        logger.info("best epoch %d: OA %.4f, mIoU %.4f", result.best_epoch,
                    result.best_oa, result.best_miou)
        return FoldOutcome(fold=fold, best_epoch=result.best_epoch, best_oa=result.best_oa,
                           best_miou=result.best_miou, checkpoint=checkpoint,
                           metric_log=metric_log)

    def _write_summary(self, path: Path, outcomes: List[FoldOutcome]) -> Path:
        frame = pd.DataFrame(
            [(str(o.fold), o.best_epoch, o.best_oa, o.best_miou) for o in outcomes],
            columns=SUMMARY_COLUMNS,
        )
        scores = frame[["OA", "mIoU"]]
        stats = pd.DataFrame(
            [("mean", None, *scores.mean()), ("std", None, *scores.std(ddof=0))],
            columns=SUMMARY_COLUMNS,
        )
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.concat([frame, stats], ignore_index=True).to_csv(path, index=False, float_format="%.10g")
        return path

    def _load_for_inference(self, checkpoint_path: Path,
                            dataset_path: Path) -> Tuple[Classifier, List[SequenceSample]]:
        config, state = load_checkpoint(checkpoint_path)
        model = Classifier(config)
        model.load_state(state)
        samples = load_dataset(dataset_path)
        check_compatible(samples, config)
        return model, samples

    def evaluate(self, checkpoint_path: Path, dataset_path: Path,
                 out_dir: Path) -> EvaluationReport:
        """
        Evaluate a checkpoint and write ``metrics.json`` and ``confusion.csv``.

        Returns:
            EvaluationReport with OA, mIoU, per-class IoU and confusion matrix
        """
        model, samples = self._load_for_inference(checkpoint_path, dataset_path)
        result = evaluate(model, samples)
        cm = result.confusion
        iou = per_class_iou(cm)
        report = EvaluationReport(
            loss=result.loss,
            oa=overall_accuracy(cm),
            miou=mean_iou(cm),
            per_class_iou=[None if math.isnan(v) else float(v) for v in iou],
            confusion=cm,
        )

        out_dir.mkdir(parents=True, exist_ok=True)
        labels = range(cm.num_classes)
        pd.DataFrame(cm.counts, index=pd.Index([f"true_{c}" for c in labels], name="class"),
                     columns=[f"pred_{c}" for c in labels]).to_csv(out_dir / "confusion.csv")
        document = {
            "samples": report.num_samples,
            "loss": report.loss,
            "OA": report.oa,
            "mIoU": report.miou,
            "per_class_IoU": report.per_class_iou,
            "confusion": cm.counts.tolist(),
        }
        with open(out_dir / "metrics.json", 'w') as f:
            json.dump(document, f, indent=2)
        return report

    def count(self, config: TemporalConfig, T: Optional[int] = None) -> CostReport:
        """Exact cost report of a temporal encoder configuration."""
        return count_flops(config, T)

    def inspect_attention(self, checkpoint_path: Path, dataset_path: Path, out_csv: Path,
                          batch_size: int = 256) -> pd.DataFrame:
        """
        Average the temporal attention masks per class and head.

        Writes one CSV row per (class, head) present in the dataset with
        columns ``class, head, step_1 .. step_T``.

        Returns:
            The written table
        """
        model, samples = self._load_for_inference(checkpoint_path, dataset_path)
        H, T = model.config.temporal.H, model.config.temporal.T
        totals: Dict[int, np.ndarray] = {}
        counts: Dict[int, int] = {}
        data = collate(samples)
        with no_grad():
            for start in range(0, data.size, batch_size):
                batch = take(data, np.arange(start, min(start + batch_size, data.size)))
                _, record = model(batch)
                for label, masks in zip(batch.labels, record.masks):
                    label = int(label)
                    totals[label] = totals.get(label, np.zeros((H, T))) + masks
                    counts[label] = counts.get(label, 0) + 1

        rows = []
        for label in sorted(totals):
            average = totals[label] / counts[label]
            for h in range(H):
                rows.append([label, h, *average[h]])
        frame = pd.DataFrame(rows, columns=["class", "head"] + [f"step_{t}" for t in range(1, T + 1)])
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out_csv, index=False)
        logger.info("wrote %d attention rows to %s", len(frame), out_csv)
        return frame
