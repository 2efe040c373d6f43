"""Reading and writing run artifacts, result CSVs and partition manifests."""

import csv
import io
import json
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.table import Table

from .datasets import save_csv
from .errors import DataFormatError
from .models import (
    Approach,
    ArtifactKind,
    ClientDataset,
    CohortSummary,
    ResultRow,
    ResultTable,
    RoundRecord,
    RunArtifact,
    SkewReport,
    TTestResult,
)

RESULTS_HEADER = ["clientId", "cohortId", "approach", "accuracy"]
REPORT_HEADER = [*RESULTS_HEADER, "learningRate"]
ROUNDS_HEADER = ["cohortId", "approach", "round", "clientId", "participated", "trainLoss", "validAccuracy"]


def _number(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def _write_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_results_csv(table: ResultTable, path: Path, with_learning_rate: bool = False) -> Path:
    """Write `clientId,cohortId,approach,accuracy[,learningRate]` rows (UTF-8, LF)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    order = list(Approach)
    rows = sorted(table.rows, key=lambda row: (row.client_id, order.index(row.approach)))
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(REPORT_HEADER if with_learning_rate else RESULTS_HEADER)
        for row in rows:
            fields = [row.client_id, row.cohort_id, row.approach.value, _number(row.accuracy)]
            if with_learning_rate:
                fields.append(_number(row.learning_rate))
            writer.writerow(fields)
    return path


def read_results_csv(path: Path) -> ResultTable:
    """Parse a results CSV; the learningRate column is optional.

    Raises:
        DataFormatError: On a bad header, unknown approach or malformed number
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header not in (RESULTS_HEADER, REPORT_HEADER):
            raise DataFormatError(f"{path}:1: header must be '{','.join(RESULTS_HEADER)}[,learningRate]'")
        rows = []
        for line_number, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(header):
                raise DataFormatError(f"{path}:{line_number}: expected {len(header)} fields, got {len(fields)}")
            try:
                rows.append(
                    ResultRow(
                        client_id=int(fields[0]),
                        cohort_id=int(fields[1]),
                        approach=Approach(fields[2]),
                        accuracy=float(fields[3]),
                        learning_rate=float(fields[4]) if len(fields) > 4 and fields[4] else None,
                    )
                )
            except ValueError as e:
                raise DataFormatError(f"{path}:{line_number}: {e}") from e
    try:
        return ResultTable(rows=rows)
    except ValueError as e:
        raise DataFormatError(f"{path}: {e}") from e


def write_rounds_csv(records: list[RoundRecord], members: dict[int, list[int]], path: Path) -> Path:
    """One line per (round, cohort member) with participation, train loss and validation accuracy."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ROUNDS_HEADER)
        for record in records:
            log = record.log
            for client_id in members.get(record.cohort_id, sorted(log.valid_accuracy)):
                writer.writerow(
                    [
                        record.cohort_id,
                        record.approach.value,
                        log.round,
                        client_id,
                        int(client_id in log.participants),
                        _number(log.train_loss.get(client_id)),
                        _number(log.valid_accuracy.get(client_id)),
                    ]
                )
    return path


def render_comparisons(results: list[TTestResult]) -> str:
    """Plain-text table of t-test results."""
    table = Table(title="Paired t-tests")
    for column in ("A", "B", "n", "df", "t", "p", "mean diff", "excluded"):
        table.add_column(column)
    for result in results:
        table.add_row(
            result.approach_a.value if result.approach_a else "-",
            result.approach_b.value if result.approach_b else "-",
            str(result.n_pairs),
            str(result.degrees_of_freedom),
            "-" if result.t_statistic is None else f"{result.t_statistic:.4f}",
            f"{result.p_value:.4f}" + (" (degenerate)" if result.degenerate else ""),
            f"{result.mean_difference:+.4f}",
            ",".join(str(c) for c in result.excluded_clients) or "-",
        )
    console = Console(file=io.StringIO(), record=True, width=110, color_system=None)
    console.print(table)
    return console.export_text()


class ArtifactStore:
    """Single writer and reader of a run's output directory."""

    def __init__(self, output_dir: Path):
        """Initialize artifact store.

        Args:
            output_dir: Directory where run files are stored
        """
        self.output_dir = Path(output_dir)
        self.artifact_file = self.output_dir / "artifact.json"

    def save(self, artifact: RunArtifact) -> Path:
        """Persist a run: artifact.json, the verbatim config, results and round logs.

        Args:
            artifact: Completed run

        Returns:
            Path to artifact.json
        """
        self.output_dir.mkdir(parents=True, exist_ok=True)
        _write_json(self.artifact_file, artifact.model_dump(mode="json"))

        # config snapshot must be byte-identical to the input
        with open(self.output_dir / "config.json", "w", encoding="utf-8", newline="") as f:
            f.write(artifact.config_text)

        write_results_csv(artifact.results, self.output_dir / "results.csv")
        members = {cohort.cohort_id: cohort.members for cohort in artifact.config.cohort_list()}
        write_rounds_csv(artifact.rounds, members, self.output_dir / "rounds.csv")
        return self.artifact_file

    def load(self) -> Optional[RunArtifact]:
        """Load a saved run.

        Returns:
            RunArtifact if artifact.json exists, None otherwise
        """
        if not self.artifact_file.exists():
            return None

        with open(self.artifact_file, "r", encoding="utf-8") as f:
            payload = json.load(f)

        return RunArtifact.model_validate(payload)

    def clear(self) -> None:
        """Remove a saved artifact."""
        if self.artifact_file.exists():
            self.artifact_file.unlink()

    def save_partition(
        self,
        clients: list[ClientDataset],
        cohorts: dict[int, int],
        report: Optional[SkewReport],
        seed: int,
    ) -> Path:
        """Write one CSV per client split plus manifest.json.

        Returns:
            Path to the manifest
        """
        entries = []
        for client in clients:
            folder = self.output_dir / "clients" / f"client-{client.client_id}"
            files = {}
            for split in ("train", "valid", "test"):
                data = getattr(client, split)
                files[split] = {"file": str(save_csv(data, folder / f"{split}.csv").relative_to(self.output_dir)), "n": len(data)}
            pooled = client.all_data()
            entries.append(
                {
                    "clientId": client.client_id,
                    "cohortId": cohorts.get(client.client_id, 0),
                    "n": client.n_k,
                    "splits": files,
                    "labelMarginal": (pooled.label_counts() / len(pooled)).tolist(),
                }
            )
        manifest = {
            "seed": seed,
            "clients": entries,
            "skew": report.model_dump(mode="json") if report else None,
        }
        return _write_json(self.output_dir / "manifest.json", manifest)

    def save_report(self, artifact: RunArtifact) -> Path:
        """Plot-ready CSV: baselines.csv for baseline runs, approaches.csv for HPO runs."""
        name = "baselines.csv" if artifact.kind is ArtifactKind.BASELINES else "approaches.csv"
        return write_results_csv(artifact.results, self.output_dir / name, with_learning_rate=True)

    def save_comparisons(self, results: list[TTestResult], summaries: list[CohortSummary]) -> list[Path]:
        """comparisons.json plus a text rendering of the same results."""
        json_path = _write_json(
            self.output_dir / "comparisons.json",
            {
                "comparisons": [result.model_dump(mode="json") for result in results],
                "cohorts": [summary.model_dump(mode="json") for summary in summaries],
            },
        )
        text_path = self.output_dir / "comparisons.txt"
        with open(text_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(render_comparisons(results))
        return [json_path, text_path]
