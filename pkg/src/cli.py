"""Command-line interface for the L-TAE toolkit."""

import logging
import sys
from pathlib import Path
from typing import Callable, Optional

import click
import yaml

from src import __version__
from src.complexity import ASYMPTOTIC, PRESETS, preset, report_to_dict
from src.config import ConfigError, load_run_config
from src.errors import LTAEError
from src.models import EvaluationReport, TrainingOutcome
from src.orchestrator import Orchestrator

logger = logging.getLogger(__name__)


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def format_error(error: LTAEError) -> str:
    """Single machine-parsable line describing a failure."""
    message = " ".join(str(error).split()).replace('"', '\\"')
    return (f'error code={error.exit_code} kind={type(error).__name__} '
            f'reason={error.reason} message="{message}"')


def run_command(action: Callable[[], None]) -> None:
    """Run a command body, turning toolkit errors into an error line and exit code."""
    try:
        action()
    except LTAEError as e:
        click.echo(format_error(e), err=True)
        sys.exit(e.exit_code)


def add_global_options(func):
    """Decorator to add the options shared by every command."""
    func = click.option(
        '--verbose', '-v',
        is_flag=True,
        help='Log progress at INFO level to stderr'
    )(func)
    func = click.option(
        '--config', '-c',
        'config_file',
        type=click.Path(dir_okay=False, path_type=Path),
        default=None,
        help='Run configuration file (YAML or JSON); built-in defaults when omitted'
    )(func)
    return func


def add_override_options(func):
    """Decorator to add the training overrides applied on top of the config file."""
    func = click.option('--seed', type=int, default=None,
                        help='Seed for every source of randomness')(func)
    func = click.option('--epochs', type=int, default=None, help='Number of epochs')(func)
    func = click.option('--batch-size', type=int, default=None, help='Mini-batch size')(func)
    func = click.option('--lr', 'learning_rate', type=float, default=None,
                        help='Learning rate')(func)
    func = click.option('--folds', type=int, default=None,
                        help='Number of cross-validation folds (1 = single run)')(func)
    return func


@click.group()
@click.version_option(version=__version__)
def cli():
    """
    L-TAE toolkit - temporal attention encoders for time-series classification.

    Generate synthetic datasets, train and evaluate spatio-temporal classifiers,
    inspect their attention masks and count encoder parameters and FLOPs.
    """
    pass


@cli.command('synth')
@add_global_options
@click.option('--out', '-o', 'out_path', type=click.Path(dir_okay=False, path_type=Path),
              required=True, help='Destination dataset file (JSON lines)')
@click.option('--seed', type=int, default=None, help='Generator seed')
def synth(verbose: bool, config_file: Optional[Path], out_path: Path, seed: Optional[int]):
    """
    Generate a synthetic dataset from the config's ``synth`` section.

    Example:
        ltae synth --config example_config.yaml --out data/train.jsonl
    """
    configure_logging(verbose)

    def action():
        config = load_run_config(config_file, {"seed": seed})
        samples = Orchestrator().synth(config.synth, out_path)
        click.echo(f"Wrote {len(samples)} samples to {out_path}")

    run_command(action)


@cli.command('train')
@add_global_options
@add_override_options
@click.option('--dataset', '-d', 'dataset_path', type=click.Path(dir_okay=False, path_type=Path),
              required=True, help='Training dataset file')
@click.option('--validation', 'validation_path', type=click.Path(dir_okay=False, path_type=Path),
              default=None, help='Held-out dataset used to pick the best epoch')
@click.option('--out-dir', '-o', type=click.Path(file_okay=False, path_type=Path),
              default=Path('run'), help='Output directory (default: ./run)')
def train(verbose: bool, config_file: Optional[Path], seed, epochs, batch_size, learning_rate,
          folds, dataset_path: Path, validation_path: Optional[Path], out_dir: Path):
    """
    Train a classifier, writing checkpoint.json and metrics.csv.

    With --folds k > 1 one model is trained per fold under fold_<i>/ and
    summary.csv reports the per-fold best OA/mIoU with mean and std.

    Examples:
        ltae train --config example_config.yaml --dataset data/train.jsonl
        ltae train --dataset data/train.jsonl --folds 5 --out-dir cv
    """
    configure_logging(verbose)

    def action():
        overrides = {"seed": seed, "epochs": epochs, "batch_size": batch_size,
                     "learning_rate": learning_rate, "folds": folds}
        config = load_run_config(config_file, overrides)
        outcome = Orchestrator().train(config, dataset_path, out_dir, validation_path)
        display_training(outcome)

    run_command(action)


@cli.command('evaluate')
@click.option('--verbose', '-v', is_flag=True, help='Log progress at INFO level to stderr')
@click.option('--checkpoint', '-k', 'checkpoint_path',
              type=click.Path(dir_okay=False, path_type=Path), required=True,
              help='Checkpoint written by train')
@click.option('--dataset', '-d', 'dataset_path', type=click.Path(dir_okay=False, path_type=Path),
              required=True, help='Dataset to evaluate on')
@click.option('--out-dir', '-o', type=click.Path(file_okay=False, path_type=Path),
              default=Path('evaluation'), help='Directory for metrics.json and confusion.csv')
def evaluate(verbose: bool, checkpoint_path: Path, dataset_path: Path, out_dir: Path):
    """
    Report OA, mIoU, per-class IoU and the confusion matrix of a checkpoint.

    Example:
        ltae evaluate --checkpoint run/checkpoint.json --dataset data/test.jsonl
    """
    configure_logging(verbose)

    def action():
        report = Orchestrator().evaluate(checkpoint_path, dataset_path, out_dir)
        display_evaluation(report)
        click.echo(f"\nWrote {out_dir / 'metrics.json'} and {out_dir / 'confusion.csv'}")

    run_command(action)


@cli.command('count')
@add_global_options
@click.option('--preset', '-p', 'preset_name', type=click.Choice(sorted(PRESETS)), default=None,
              help='Named temporal encoder configuration (default: ltae-default)')
@click.option('--flops', 'show_flops', is_flag=True, help='Report FLOPs')
@click.option('--params', 'show_params', is_flag=True, help='Report the parameter count')
@click.option('--T', 'T', type=int, default=None, help='Sequence length to count for')
@click.option('--table', is_flag=True, help='Print the asymptotic cost table of all methods')
def count(verbose: bool, config_file: Optional[Path], preset_name: Optional[str],
          show_flops: bool, show_params: bool, T: Optional[int], table: bool):
    """
    Count parameters and FLOPs of a temporal encoder.

    The encoder comes from --preset or from the model.temporal section of
    --config. Without --flops or --params both are reported.

    Examples:
        ltae count --preset ltae-default
        ltae count --preset tae-default --flops --T 48
    """
    configure_logging(verbose)

    def action():
        if table:
            display_asymptotic_table()
            return
        if preset_name is not None and config_file is not None:
            raise ConfigError("use either --preset or --config, not both",
                              reason="preset_and_config")
        if config_file is not None:
            temporal = load_run_config(config_file).model.temporal
        else:
            temporal = preset(preset_name or "ltae-default")
        report = Orchestrator().count(temporal, T)
        both = not (show_flops or show_params)
        document = report_to_dict(report, params=show_params or both, flops=show_flops or both)
        click.echo(yaml.safe_dump(document, sort_keys=False, allow_unicode=True), nl=False)

    run_command(action)


@cli.command('inspect-attention')
@click.option('--verbose', '-v', is_flag=True, help='Log progress at INFO level to stderr')
@click.option('--checkpoint', '-k', 'checkpoint_path',
              type=click.Path(dir_okay=False, path_type=Path), required=True,
              help='Checkpoint written by train')
@click.option('--dataset', '-d', 'dataset_path', type=click.Path(dir_okay=False, path_type=Path),
              required=True, help='Dataset whose masks are averaged')
@click.option('--out', '-o', 'out_csv', type=click.Path(dir_okay=False, path_type=Path),
              default=Path('attention.csv'), help='Destination CSV (default: attention.csv)')
def inspect_attention(verbose: bool, checkpoint_path: Path, dataset_path: Path, out_csv: Path):
    """
    Write per-class, per-head average attention masks as CSV.

    Each row holds class, head and the T mask values step_1 .. step_T.

    Example:
        ltae inspect-attention --checkpoint run/checkpoint.json --dataset data/test.jsonl
    """
    configure_logging(verbose)

    def action():
        frame = Orchestrator().inspect_attention(checkpoint_path, dataset_path, out_csv)
        click.echo(f"Wrote {len(frame)} rows ({frame['class'].nunique()} classes) to {out_csv}")

    run_command(action)


def display_training(outcome: TrainingOutcome):
    """Summarize a training command on stdout."""
    click.echo("=" * 60)
    click.echo("TRAINING SUMMARY")
    click.echo("=" * 60)
    for fold in outcome.folds:
        prefix = f"Fold {fold.fold}: " if len(outcome.folds) > 1 else ""
        click.echo(f"{prefix}best epoch {fold.best_epoch}  OA {fold.best_oa:.4f}  "
                   f"mIoU {fold.best_miou:.4f}")
        click.echo(f"  checkpoint: {fold.checkpoint}")
        click.echo(f"  metrics:    {fold.metric_log}")
    if outcome.summary is not None:
        click.echo(f"Summary: {outcome.summary}")
    click.echo("=" * 60)


def display_evaluation(report: EvaluationReport):
    """Print metrics and the confusion matrix."""
    click.echo(f"Samples: {report.num_samples}")
    click.echo(f"Loss:    {report.loss:.6f}")
    click.echo(f"OA:      {report.oa:.6f}")
    click.echo(f"mIoU:    {report.miou:.6f}")
    click.echo("Per-class IoU:")
    for c, iou in enumerate(report.per_class_iou):
        click.echo(f"  class {c}: {'n/a' if iou is None else f'{iou:.6f}'}")
    click.echo("Confusion matrix (rows: true, columns: predicted):")
    for row in report.confusion.counts:
        click.echo("  " + " ".join(f"{int(n):6d}" for n in row))


def display_asymptotic_table():
    click.echo(f"{'Method':<12} {'Keys':<12} {'Mask':<12} {'Output':<10}")
    for cost in ASYMPTOTIC.values():
        if cost.combined is not None:
            keys, mask = cost.combined.display, "(combined)"
        else:
            keys, mask = cost.keys.display, cost.mask.display
        click.echo(f"{cost.method:<12} {keys:<12} {mask:<12} {cost.output.display:<10}")


def main():
    """Main entry point for the CLI."""
    cli()


if __name__ == '__main__':
    main()
