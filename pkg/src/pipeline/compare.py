"""
Comparing scheduling modes, and the exact two-stage schedule used as an oracle.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from ..errors import WorkloadMismatch
from ..evaluation import BUCKETS
from ..jsonl import write_csv, write_json
from .base_pipeline import RunReport

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["bucket", "gold_steps", "mode", "mean_seconds", "n"]


class BucketRatio(BaseModel):
    bucket: str
    mean_seconds_a: float
    mean_seconds_b: float
    ratio: Optional[float]
    n: int


class SpeedupSummary(BaseModel):
    """``ratio`` is time(b) / time(a): above 1 means mode a is faster."""

    mode_a: str
    mode_b: str
    total_seconds_a: float
    total_seconds_b: float
    ratio: Optional[float]
    slope_a: Optional[float] = None
    slope_b: Optional[float] = None
    buckets: List[BucketRatio] = Field(default_factory=list)


def _ratio(a: float, b: float) -> Optional[float]:
    if a == 0:
        return 1.0 if b == 0 else None
    return b / a


def time_vs_steps_slope(report: RunReport) -> Optional[float]:
    """Least-squares slope of per-item seconds against gold step count."""
    ok = [item for item in report.items if item.status == "ok"]
    steps = np.array([item.gold_steps for item in ok], dtype=float)
    if len(np.unique(steps)) < 2:
        return None
    seconds = np.array([item.seconds for item in ok], dtype=float)
    slope, _ = np.polyfit(steps, seconds, 1)
    return float(slope)


def compare_modes(report_a: RunReport, report_b: RunReport) -> SpeedupSummary:
    """Per-bucket mean-time ratios and time-vs-steps slopes of two runs.

    Raises:
        WorkloadMismatch: the runs did not process the same ids in the same order.
    """
    if report_a.ids != report_b.ids:
        missing = sorted(set(report_a.ids) ^ set(report_b.ids))
        raise WorkloadMismatch("Reports cover different workloads", differing_ids=missing[:20])

    b_buckets = {bucket.bucket: bucket for bucket in report_b.buckets}
    ratios = []
    for bucket in report_a.buckets:
        other = b_buckets.get(bucket.bucket)
        if other is None:
            continue
        ratios.append(
            BucketRatio(
                bucket=bucket.bucket,
                mean_seconds_a=bucket.mean_seconds,
                mean_seconds_b=other.mean_seconds,
                ratio=_ratio(bucket.mean_seconds, other.mean_seconds),
                n=bucket.n,
            )
        )
    summary = SpeedupSummary(
        mode_a=report_a.mode,
        mode_b=report_b.mode,
        total_seconds_a=report_a.total_seconds,
        total_seconds_b=report_b.total_seconds,
        ratio=_ratio(report_a.total_seconds, report_b.total_seconds),
        slope_a=time_vs_steps_slope(report_a),
        slope_b=time_vs_steps_slope(report_b),
        buckets=sorted(ratios, key=lambda r: BUCKETS.index(r.bucket)),
    )
    logger.info("%s vs %s: ratio %s", summary.mode_a, summary.mode_b, summary.ratio)
    return summary


class OracleSchedule(BaseModel):
    completions: List[float]
    makespan: float


def schedule_oracle(decode: Sequence[float], tool: Sequence[float], capacity: int) -> OracleSchedule:
    """Exact schedule of a two-stage pipeline with a queue of ``capacity`` items.

    Item i finishes decoding at G_i and is enqueued at P_i = max(G_i, S_{i-K});
    the tool stage starts it at S_i = max(P_i, E_{i-1}) and ends at
    E_i = S_i + tool_i. Decoding of item i+1 starts at P_i.
    """
    if len(decode) != len(tool):
        raise ValueError("decode and tool must have the same length")
    if capacity < 1:
        raise ValueError("capacity must be at least 1")
    starts: List[float] = []
    completions: List[float] = []
    produced = 0.0
    for i, (d, t) in enumerate(zip(decode, tool)):
        decoded = produced + d
        enqueued = max(decoded, starts[i - capacity]) if i >= capacity else decoded
        start = max(enqueued, completions[-1]) if completions else enqueued
        starts.append(start)
        completions.append(start + t)
        produced = enqueued
    return OracleSchedule(completions=completions, makespan=completions[-1] if completions else 0.0)


def write_bench_outputs(
    out_dir: Path,
    reports: Sequence[RunReport],
    summary: Optional[SpeedupSummary] = None,
    extra: Optional[Dict[str, object]] = None,
) -> List[Path]:
    """``bench.json`` with every report (and the comparison) plus ``bench.csv``."""
    out_dir = Path(out_dir)
    paths = [out_dir / "bench.json", out_dir / "bench.csv"]
    payload: Dict[str, object] = {"reports": [r.model_dump(mode="json") for r in reports]}
    if summary is not None:
        payload["summary"] = summary.model_dump(mode="json")
    payload.update(extra or {})
    write_json(paths[0], payload)
    write_csv(paths[1], [row for report in reports for row in report.csv_rows()], REPORT_COLUMNS)
    return paths
