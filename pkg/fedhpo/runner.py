"""Experiment orchestration."""

import logging
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn
from rich.table import Table

from .analysis import cohort_summary, compare_approaches
from .artifacts import ArtifactStore, read_results_csv, render_comparisons
from .datasets import load_source
from .errors import ConfigError
from .federation import federated_averaging, pooled_test_data, run_baselines
from .hpo import global_hpo, local_hpo
from .models import (
    Approach,
    ArtifactKind,
    ClientDataset,
    Cohort,
    ExperimentConfig,
    GlobalEta,
    HpoOutcome,
    ModelSpec,
    Regime,
    ResultRow,
    ResultTable,
    RoundRecord,
    RunArtifact,
    Strategy,
    SyntheticSource,
    Timing,
    TrainConfig,
    TTestResult,
)
from .network import ParamVector, accuracy, build_model_spec, init_params
from .partition import partition, skew_diagnostics
from .seeding import derive_seed

console = Console()
logger = logging.getLogger(__name__)


class ExperimentRunner:
    """Runs the partition, HPO and baseline stages of one experiment config."""

    def __init__(
        self,
        config: ExperimentConfig,
        config_text: str,
        output_dir: Path,
        overrides: Optional[list[str]] = None,
    ):
        """Initialize experiment runner.

        Args:
            config: Validated experiment config
            config_text: Config document exactly as read from disk
            output_dir: Output directory for all run files
            overrides: `--set` items already applied to config
        """
        self.config = config
        self.config_text = config_text
        self.overrides = list(overrides or [])
        self.output_dir = Path(output_dir)
        self.store = ArtifactStore(self.output_dir)

    # -- shared setup -----------------------------------------------------

    def load_clients(self) -> list[ClientDataset]:
        """Materialize the dataset and split it over the clients."""
        config = self.config
        source = config.dataset or SyntheticSource()
        data = load_source(source, config.partition.client_count, derive_seed(config.seed, "dataset"))
        spec = config.partition.model_copy(update={"seed": derive_seed(config.seed, "partition")})
        return partition(data, spec)

    def model_spec(self, clients: list[ClientDataset]) -> ModelSpec:
        sample = clients[0].train
        try:
            return build_model_spec(self.config.model, sample.num_features, sample.num_classes)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def cohort_start(self, spec: ModelSpec, cohort: Cohort) -> tuple[ParamVector, int]:
        """Shared w0 and federation seed of a cohort."""
        seed = self.config.seed
        return init_params(spec, derive_seed(seed, "w0", cohort.cohort_id)), derive_seed(seed, "federation", cohort.cohort_id)

    def _progress(self) -> Progress:
        return Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            TextColumn("[progress.percentage]{task.percentage:>3.0f}%"),
            TimeElapsedColumn(),
            console=console,
        )

    def _artifact(self, kind: ArtifactKind, started: datetime, clock: float, **fields) -> RunArtifact:
        return RunArtifact(
            kind=kind,
            config_text=self.config_text,
            overrides=self.overrides,
            config=self.config,
            timing=Timing(started_at=started.isoformat(), duration_seconds=time.perf_counter() - clock),
            **fields,
        )

    # -- stages -----------------------------------------------------------

    def run_partition(self) -> Path:
        """Export the client splits and a manifest with skew diagnostics.

        Returns:
            Path to manifest.json
        """
        console.print(f"🧩 Partitioning data for '{self.config.name}'", style="bold blue")
        clients = self.load_clients()
        report = skew_diagnostics(clients)
        manifest = self.store.save_partition(clients, self.config.cohorts, report, self.config.seed)

        console.print(f"✓ {len(clients)} clients, sizes {[c.n_k for c in clients]}", style="green")
        flags = [name for name, flag in (("label", report.label_skew), ("feature", report.feature_skew), ("quantity", report.quantity_skew)) if flag]
        console.print(f"📊 Skew: {', '.join(flags) or 'none detected'}")
        console.print(f"📁 Manifest: {manifest}")
        return manifest

    def run_hpo(self) -> RunArtifact:
        """Run every configured regime/strategy per cohort, then the posterior federated training.

        Returns:
            Saved RunArtifact
        """
        config = self.config
        started, clock = datetime.now(timezone.utc), time.perf_counter()
        clients = self.load_clients()
        spec = self.model_spec(clients)
        by_id = {client.client_id: client for client in clients}
        cohorts = config.cohort_list()
        combos = [(strategy, regime) for strategy in config.hpo.strategies for regime in config.hpo.regimes]

        console.print(f"🔍 Hyperparameter optimization for '{config.name}'", style="bold blue")
        outcomes: list[HpoOutcome] = []
        rows: list[ResultRow] = []
        rounds: list[RoundRecord] = []
        with self._progress() as progress:
            task = progress.add_task("Optimizing...", total=len(cohorts) * len(combos))
            for cohort in cohorts:
                members = {member: by_id[member] for member in cohort.members}
                w0, fed_seed = self.cohort_start(spec, cohort)
                test_pool = pooled_test_data(cohort, members)
                for strategy, regime in combos:
                    approach = Approach.for_hpo(regime, strategy)
                    progress.update(task, description=f"Cohort {cohort.cohort_id}: {approach.value}...")
                    outcome = self._optimize(regime, strategy, cohort, members, spec, w0, fed_seed)
                    outcomes.append(outcome)

                    settings = config.hpo.posterior or config.federation
                    result = federated_averaging(
                        cohort, settings.to_config(outcome.eta_source(), fed_seed), spec, members, w0, settings.workers
                    )
                    score = accuracy(spec, result.params, test_pool)
                    rows += [
                        ResultRow(
                            client_id=member,
                            cohort_id=cohort.cohort_id,
                            approach=approach,
                            accuracy=score,
                            learning_rate=outcome.learning_rate_for(member),
                        )
                        for member in cohort.members
                    ]
                    rounds += [RoundRecord(cohort_id=cohort.cohort_id, approach=approach, log=log) for log in result.logs]
                    progress.advance(task)

        artifact = self._artifact(
            ArtifactKind.HPO, started, clock, outcomes=outcomes, results=ResultTable(rows=rows), rounds=rounds
        )
        self.store.save(artifact)
        self._print_outcomes(outcomes, artifact.results)
        return artifact

    def _optimize(
        self,
        regime: Regime,
        strategy: Strategy,
        cohort: Cohort,
        members: dict[int, ClientDataset],
        spec: ModelSpec,
        w0: ParamVector,
        fed_seed: int,
    ) -> HpoOutcome:
        config = self.config
        federation = config.federation
        bo = config.hpo.bayes.model_copy(update={"seed": derive_seed(config.seed, "bo", cohort.cohort_id)})
        if regime is Regime.LOCAL:
            train_cfg = TrainConfig(
                learning_rate=federation.learning_rate,
                epochs=config.hpo.local_epoch_count(federation),
                batch_size=federation.batch_size,
                seed=fed_seed,
                dropout=federation.dropout,
            )
            return local_hpo(
                strategy, members, spec, w0, train_cfg, config.hpo.grid, bo, federation.workers, cohort.cohort_id
            )
        search_cfg = federation.to_config(GlobalEta(learning_rate=federation.learning_rate), fed_seed)
        start = w0 if config.hpo.shared_w0 else None
        return global_hpo(
            strategy, cohort, members, spec, search_cfg, config.hpo.grid, bo, w0=start, workers=federation.workers
        )

    def run_baselines(self) -> RunArtifact:
        """Individual, central and federated training per cohort.

        Returns:
            Saved RunArtifact
        """
        config = self.config
        started, clock = datetime.now(timezone.utc), time.perf_counter()
        clients = self.load_clients()
        spec = self.model_spec(clients)
        by_id = {client.client_id: client for client in clients}
        cohorts = config.cohort_list()

        console.print(f"⚖️  Baselines for '{config.name}'", style="bold blue")
        reports = []
        rows: list[ResultRow] = []
        with self._progress() as progress:
            task = progress.add_task("Training...", total=len(cohorts))
            for cohort in cohorts:
                progress.update(task, description=f"Cohort {cohort.cohort_id}...")
                members = {member: by_id[member] for member in cohort.members}
                w0, fed_seed = self.cohort_start(spec, cohort)
                fed_cfg = config.federation.to_config(GlobalEta(learning_rate=config.federation.learning_rate), fed_seed)
                report = run_baselines(cohort, fed_cfg, spec, members, w0, config.federation.workers)
                reports.append(report)
                for row in report.rows:
                    for approach in (Approach.INDIVIDUAL, Approach.CENTRAL, Approach.FEDERATED):
                        rows.append(
                            ResultRow(
                                client_id=row.client_id,
                                cohort_id=cohort.cohort_id,
                                approach=approach,
                                accuracy=getattr(row, approach.value),
                                learning_rate=row.learning_rate,
                            )
                        )
                progress.advance(task)

        artifact = self._artifact(ArtifactKind.BASELINES, started, clock, baselines=reports, results=ResultTable(rows=rows))
        self.store.save(artifact)

        table = Table(title="Baselines (pooled cohort test accuracy)")
        for column in ("Cohort", "Individual", "Central", "Federated"):
            table.add_column(column)
        for report in reports:
            table.add_row(
                str(report.cohort_id),
                f"{report.mean(Approach.INDIVIDUAL):.4f}",
                f"{report.mean(Approach.CENTRAL):.4f}",
                f"{report.mean(Approach.FEDERATED):.4f}",
            )
        console.print(table)
        return artifact

    def _print_outcomes(self, outcomes: list[HpoOutcome], results: ResultTable) -> None:
        table = Table(title="Selected learning rates")
        for column in ("Cohort", "Approach", "Learning rate", "Evaluations", "Aggregations", "Test accuracy"):
            table.add_column(column)
        scores = {(row.cohort_id, row.approach): row.accuracy for row in results.rows}
        for outcome in outcomes:
            if isinstance(outcome.result, dict):
                eta = ", ".join(f"{cid}:{value:g}" for cid, value in sorted(outcome.result.items()))
            else:
                eta = f"{outcome.result:g}"
            table.add_row(
                str(outcome.cohort_id),
                outcome.approach.value,
                eta,
                str(len(outcome.trace)),
                str(outcome.aggregation_rounds),
                f"{scores[(outcome.cohort_id, outcome.approach)]:.4f}",
            )
        console.print(table)


def load_results(paths: list[Path]) -> ResultTable:
    """Merge result tables from run directories, artifact files or results CSVs."""
    table = ResultTable()
    for path in paths:
        path = Path(path)
        if path.is_dir():
            artifact = ArtifactStore(path).load()
            if artifact is None:
                raise ConfigError(f"no artifact.json in {path}")
            part = artifact.results
        elif path.suffix == ".json":
            part = RunArtifact.model_validate_json(path.read_text(encoding="utf-8")).results
        else:
            part = read_results_csv(path)
        try:
            table = table.merged(part)
        except ValueError as e:
            raise ConfigError(f"{path}: {e}") from e
    return table


def run_analysis(
    table: ResultTable,
    pairs: list[tuple[Approach, Approach]],
    exclude: list[int],
    output_dir: Path,
) -> list[TTestResult]:
    """Paired comparisons plus cohort summaries, written to the output directory."""
    results = compare_approaches(table, pairs, exclude)
    summaries = cohort_summary(table) if table.rows else []
    paths = ArtifactStore(output_dir).save_comparisons(results, summaries)
    if results:
        console.print(render_comparisons(results))
    else:
        console.print("No comparisons requested", style="yellow")
    console.print(f"📁 Report: {paths[0]}")
    return results
