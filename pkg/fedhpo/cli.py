"""CLI interface for fed-hpo."""

import json
from contextlib import contextmanager
from pathlib import Path
from typing import NoReturn, Optional

import typer
from rich.console import Console
from rich.table import Table

from . import __version__
from .artifacts import ArtifactStore
from .config import configure_logging, get_output_dir, list_presets, load_experiment_config, preset_path
from .errors import ConfigError, FedHpoError
from .models import Approach
from .runner import ExperimentRunner, load_results, run_analysis

app = typer.Typer(
    name="fedhpo",
    help="Simulate federated learning and compare local vs. global hyperparameter optimization",
    add_completion=False,
)
console = Console()

CONFIG_HELP = "Experiment config file or preset name"
SET_HELP = "Override a config value, e.g. --set federation.rounds=5"


def version_callback(value: bool):
    """Print version and exit."""
    if value:
        console.print(f"fedhpo version {__version__}")
        raise typer.Exit()


@app.callback()
def main(
    version: Optional[bool] = typer.Option(
        None,
        "--version",
        "-v",
        help="Show version and exit",
        callback=version_callback,
        is_eager=True,
    ),
):
    """fed-hpo - federated hyperparameter optimization simulator."""
    pass


def _fail(error: Exception) -> NoReturn:
    """Print a single `error[<code>]: <text>` line and exit with the error's code."""
    if isinstance(error, FedHpoError):
        code, exit_code = error.code, error.exit_code
    else:
        code, exit_code = "runtime_error", 3
    message = " ".join(str(error).split()) or type(error).__name__
    typer.echo(f"error[{code}]: {message}", err=True)
    raise typer.Exit(exit_code)


@contextmanager
def _handle_errors():
    try:
        yield
    except typer.Exit:
        raise
    except Exception as e:
        _fail(e)


def _runner(config: str, overrides: Optional[list[str]], out: Optional[Path], seed: Optional[int]) -> ExperimentRunner:
    configure_logging()
    experiment, text = load_experiment_config(config, overrides, seed)
    output_dir = get_output_dir(out if out is not None else experiment.output_dir)
    return ExperimentRunner(experiment, text, output_dir, overrides)


def parse_pair(item: str) -> tuple[Approach, Approach]:
    """Parse `approachA:approachB`."""
    first, sep, second = item.partition(":")
    try:
        if not sep:
            raise ValueError(item)
        return Approach(first.strip()), Approach(second.strip())
    except ValueError:
        choices = ", ".join(a.value for a in Approach)
        raise ConfigError(f"pair '{item}' must look like A:B with A, B in {{{choices}}}") from None


@app.command()
def partition(
    config: str = typer.Option(..., "--config", "-c", help=CONFIG_HELP),
    overrides: Optional[list[str]] = typer.Option(None, "--set", help=SET_HELP),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
):
    """Split the dataset over the clients and write per-client CSVs plus a manifest.

    Examples:
        fedhpo partition --config mnist-iid --out runs/mnist
    """
    with _handle_errors():
        _runner(config, overrides, out, seed).run_partition()


@app.command()
def hpo(
    config: str = typer.Option(..., "--config", "-c", help=CONFIG_HELP),
    overrides: Optional[list[str]] = typer.Option(None, "--set", help=SET_HELP),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
):
    """Run the configured local/global optimization regimes and the posterior federated training.

    Examples:
        fedhpo hpo --config industrial-synthetic --set hpo.strategies='["grid","bayesian"]'
    """
    with _handle_errors():
        artifact = _runner(config, overrides, out, seed).run_hpo()
        console.print(f"✅ Results written ({len(artifact.results.rows)} rows)", style="bold green")


@app.command()
def baselines(
    config: str = typer.Option(..., "--config", "-c", help=CONFIG_HELP),
    overrides: Optional[list[str]] = typer.Option(None, "--set", help=SET_HELP),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
):
    """Compare individual, central and federated training per cohort."""
    with _handle_errors():
        artifact = _runner(config, overrides, out, seed).run_baselines()
        console.print(f"✅ Results written ({len(artifact.results.rows)} rows)", style="bold green")


@app.command()
def analyze(
    results: Optional[list[Path]] = typer.Argument(None, help="Run directories, artifact.json files or results CSVs"),
    config: Optional[str] = typer.Option(None, "--config", "-c", help=CONFIG_HELP),
    pairs: Optional[list[str]] = typer.Option(None, "--pair", "-p", help="Comparison A:B, repeatable"),
    exclude: Optional[list[int]] = typer.Option(None, "--exclude", "-x", help="Client id to leave out, repeatable"),
    overrides: Optional[list[str]] = typer.Option(None, "--set", help=SET_HELP),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
):
    """Paired t-tests between approaches.

    Examples:
        fedhpo analyze --config table2-fixture

        fedhpo analyze runs/industrial --pair globalGrid:localGrid --exclude 8
    """
    with _handle_errors():
        configure_logging()
        paths = list(results or [])
        comparisons = [parse_pair(item) for item in pairs or []]
        excluded = list(exclude or [])
        output_dir = out
        if config is not None:
            experiment, _ = load_experiment_config(config, overrides, seed)
            paths = paths or list(experiment.analysis.results)
            comparisons = comparisons or list(experiment.analysis.pairs)
            excluded = excluded if exclude else list(experiment.analysis.exclude)
            output_dir = out if out is not None else experiment.output_dir
        if not paths:
            raise ConfigError("no result tables given (pass paths or a config with analysis.results)")
        run_analysis(load_results(paths), comparisons, excluded, get_output_dir(output_dir))


@app.command()
def report(
    run_dir: Path = typer.Argument(..., help="Directory holding artifact.json"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory (defaults to the run directory)"),
):
    """Write plot-ready CSVs (`clientId,cohortId,approach,accuracy,learningRate`)."""
    with _handle_errors():
        configure_logging()
        artifact = ArtifactStore(run_dir).load()
        if artifact is None:
            raise ConfigError(f"no artifact.json in {run_dir}")
        path = ArtifactStore(get_output_dir(out if out is not None else run_dir)).save_report(artifact)
        console.print(f"📁 Report: {path}")


@app.command()
def presets():
    """List shipped experiment presets."""
    table = Table(title="Available Presets", show_header=True)
    table.add_column("Preset", style="cyan")
    table.add_column("Experiment", style="white")

    for name in list_presets():
        with open(preset_path(name), encoding="utf-8") as f:
            table.add_row(name, json.load(f).get("name", ""))

    console.print(table)


if __name__ == "__main__":
    app()
