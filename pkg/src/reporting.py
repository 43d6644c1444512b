"""
Console rendering of command results: rich tables and panels for the CLI.
Library modules never print; everything user-facing goes through here.
"""

import json
from typing import Any, Dict, Iterable, Optional

from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from .errors import CoAError
from .evaluation import BUCKETS, EvalSummary, StratifiedTable
from .pipeline.base_pipeline import RunReport
from .pipeline.compare import SpeedupSummary
from .verifier import StatsReport
from .wiki_tools.bm25 import Index


def _fmt_rate(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.1%}"


def _fmt_seconds(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.3f}s"


class Reporter:
    """Renders results to ``console`` and diagnostics to ``errors``."""

    def __init__(self, console: Optional[Console] = None, errors: Optional[Console] = None, json_errors: bool = False):
        self.console = console or Console()
        self.errors = errors or Console(stderr=True)
        self.json_errors = json_errors

    # Diagnostics

    def error(self, error: CoAError, prefix: str = "") -> None:
        """One diagnostic line; a JSON object per error with ``--json``."""
        if self.json_errors:
            self.errors.print(json.dumps(error.to_dict(), sort_keys=True), markup=False, highlight=False, soft_wrap=True)
            return
        label = f"{prefix}: " if prefix else ""
        self.errors.print(f"[red]❌ {label}{error.code}: {error.message}[/red]", highlight=False)

    def usage(self, message: str) -> None:
        if self.json_errors:
            payload = {"code": "UsageError", "message": message}
            self.errors.print(json.dumps(payload, sort_keys=True), markup=False, highlight=False, soft_wrap=True)
            return
        self.errors.print(f"[red]❌ {message}[/red]", highlight=False)

    def status(self, message: str, style: str = "green") -> None:
        self.console.print(f"[{style}]{message}[/{style}]", highlight=False)

    def wrote(self, paths: Iterable[Any]) -> None:
        for path in paths:
            self.console.print(f"[dim]📄 {path}[/dim]", highlight=False)

    # Results

    def index_stats(self, index: Index, target: Optional[str] = None) -> None:
        text = Text()
        text.append("doc_count: ", style="bold")
        text.append(f"{index.doc_count}\n")
        text.append("avg_doc_length: ", style="bold")
        text.append(f"{index.avg_doc_length:.4f}\n")
        text.append("terms: ", style="bold")
        text.append(f"{len(index.postings)}\n")
        text.append("k1 / b: ", style="bold")
        text.append(f"{index.k1} / {index.b}")
        if target:
            text.append("\nwritten to: ", style="bold")
            text.append(target, style="cyan")
        self.console.print(Panel(text, title="📚 Index", border_style="blue"))

    def reify_status(self, records: Iterable[Dict[str, Any]]) -> None:
        table = Table(title="Reification")
        table.add_column("ID", style="cyan")
        table.add_column("Status")
        table.add_column("Result", overflow="fold")
        for record in records:
            ok = record["status"] == "ok"
            if not ok:
                result = record.get("error", {}).get("code", "")
            elif "final_answer" in record:
                result = str(record.get("final_answer"))
            else:
                result = record.get("context", "")[:80]
            table.add_row(record["id"], "[green]ok[/green]" if ok else "[red]failed[/red]", result)
        self.console.print(table)

    def verify_stats(self, stats: StatsReport) -> None:
        table = Table(title=f"Verification: {stats.accepted}/{stats.total} accepted ({_fmt_rate(stats.acceptance_rate)})")
        table.add_column("Group", style="cyan")
        table.add_column("n", justify="right")
        table.add_column("Accepted", justify="right")
        table.add_column("Rate", justify="right")
        for bucket, group in stats.by_steps.items():
            table.add_row(f"steps {bucket}", str(group.n), str(group.accepted), _fmt_rate(group.rate))
        for kind, group in stats.by_plan_kind.items():
            table.add_row(f"plan {kind}", str(group.n), str(group.accepted), _fmt_rate(group.rate))
        for reason, count in stats.rejections.items():
            table.add_row(f"[red]rejected: {reason}[/red]", str(count), "", _fmt_rate(stats.rejection_rates.get(reason)))
        self.console.print(table)
        if stats.warnings:
            self.status(f"⚠️  {stats.warnings} coincident-value warnings", "yellow")

    def run_report(self, report: RunReport) -> None:
        title = f"{report.mode} ({report.clock} clock): {_fmt_seconds(report.total_seconds)}"
        if report.queue_capacity is not None:
            title += f", queue {report.queue_capacity}"
        table = Table(title=title)
        table.add_column("Bucket", style="cyan")
        table.add_column("Gold steps", justify="right")
        table.add_column("Mean time", justify="right")
        table.add_column("n", justify="right")
        for bucket in report.buckets:
            table.add_row(bucket.bucket, f"{bucket.gold_steps:.2f}", _fmt_seconds(bucket.mean_seconds), str(bucket.n))
        self.console.print(table)
        if report.failures:
            self.status(f"⚠️  {report.failures} items failed", "yellow")

    def speedup(self, summary: SpeedupSummary, oracle_makespan: Optional[float] = None) -> None:
        text = Text()
        text.append(f"{summary.mode_a}: ", style="bold")
        text.append(f"{_fmt_seconds(summary.total_seconds_a)}  slope {summary.slope_a}\n")
        text.append(f"{summary.mode_b}: ", style="bold")
        text.append(f"{_fmt_seconds(summary.total_seconds_b)}  slope {summary.slope_b}\n")
        ratio = "n/a" if summary.ratio is None else f"{summary.ratio:.3f}x"
        text.append("speedup: ", style="bold")
        text.append(ratio, style="green" if summary.ratio and summary.ratio > 1 else "yellow")
        if oracle_makespan is not None:
            text.append("\noracle makespan: ", style="bold")
            text.append(_fmt_seconds(oracle_makespan))
        self.console.print(Panel(text, title="⏱️  Comparison", border_style="green"))

    def eval_summary(self, summary: EvalSummary, table: StratifiedTable) -> None:
        self.status(f"🎯 Accuracy {_fmt_rate(summary.accuracy)} ({summary.correct}/{summary.n})", "bold green")
        heatmap = Table(title="Accuracy by predicted (rows) and gold (columns) steps")
        heatmap.add_column("pred \\ gold", style="cyan")
        present = [b for b in BUCKETS if any(key[1] == b for key in table.cells)]
        for bucket in present:
            heatmap.add_column(bucket, justify="right")
        for predicted in BUCKETS:
            if not any(key[0] == predicted for key in table.cells):
                continue
            row = []
            for gold in present:
                cell = table.cells.get((predicted, gold))
                if cell is None:
                    row.append("")
                elif cell.accuracy is None:
                    row.append(f"[dim]({cell.count})[/dim]")
                else:
                    row.append(f"{cell.accuracy:.2f} ({cell.count})")
            heatmap.add_row(predicted, *row)
        self.console.print(heatmap)
