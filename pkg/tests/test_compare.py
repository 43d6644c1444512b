import json

import pytest

from src.errors import WorkloadMismatch
from src.pipeline import (
    LatencyModel,
    Reifier,
    ReplayGenerator,
    RunReport,
    VirtualClock,
    WorkItem,
    compare_modes,
    run_decoupled,
    run_interleaved,
    schedule_oracle,
    write_bench_outputs,
)
from src.pipeline.base_pipeline import ItemReport, bucket_times
from src.pipeline.compare import time_vs_steps_slope
from src.tool_dispatcher import ToolDispatcher, standard_tools


def _report(mode: str, seconds, steps=None) -> RunReport:
    steps = steps or [1] * len(seconds)
    items = [ItemReport(id=f"q{i}", seconds=s, gold_steps=k) for i, (s, k) in enumerate(zip(seconds, steps))]
    return RunReport(mode=mode, clock="virtual", total_seconds=sum(seconds), items=items, buckets=bucket_times(items))


def test_ratio_is_b_over_a():
    summary = compare_modes(_report("decoupled", [1.0, 1.0]), _report("interleaved", [1.5, 1.5]))
    assert summary.ratio == pytest.approx(1.5)
    (bucket,) = summary.buckets
    assert (bucket.bucket, bucket.ratio, bucket.n) == ("1", pytest.approx(1.5), 2)
    assert summary.slope_a is None


def test_zero_latency_ratio_is_one():
    items = [WorkItem(id=f"q{i}", trace="[2 + 3 = y1]") for i in range(3)]
    free = LatencyModel(per_token_cost=0.0)
    decoupled = run_decoupled(items, ReplayGenerator.from_items(items, free), Reifier(), VirtualClock())
    clock = VirtualClock()
    interleaved = run_interleaved(items, ReplayGenerator.from_items(items, free), ToolDispatcher(clock, 0.0, standard_tools()), clock)
    assert compare_modes(decoupled, interleaved).ratio == 1.0


def test_ratio_undefined_when_only_a_is_instant():
    assert compare_modes(_report("a", [0.0]), _report("b", [1.0])).ratio is None


def test_mismatched_workloads():
    a = _report("a", [1.0, 1.0])
    b = RunReport(mode="b", clock="virtual", items=[ItemReport(id="q0"), ItemReport(id="other")])
    with pytest.raises(WorkloadMismatch) as info:
        compare_modes(a, b)
    assert info.value.details["differing_ids"] == ["other", "q1"]
    reordered = RunReport(mode="c", clock="virtual", items=a.items[::-1])
    with pytest.raises(WorkloadMismatch):
        compare_modes(a, reordered)


def test_slope():
    report = _report("x", [2.0, 4.0, 6.0], steps=[1, 2, 3])
    assert time_vs_steps_slope(report) == pytest.approx(2.0)


def test_oracle_tool_bound():
    schedule = schedule_oracle([1, 1, 1], [2, 2, 2], capacity=1)
    assert schedule.completions == [3, 5, 7]
    assert schedule.makespan == 7


def test_oracle_decode_bound():
    schedule = schedule_oracle([2, 2, 2], [1, 1, 1], capacity=4)
    assert schedule.completions == [3, 5, 7]


def test_oracle_blocked_decoder():
    assert schedule_oracle([1, 1, 1, 1], [3, 3, 3, 3], capacity=1).completions == [4, 7, 10, 13]


def test_oracle_edge_cases():
    assert schedule_oracle([], [], capacity=2).makespan == 0.0
    with pytest.raises(ValueError):
        schedule_oracle([1.0], [], capacity=1)
    with pytest.raises(ValueError):
        schedule_oracle([1.0], [1.0], capacity=0)


def test_write_bench_outputs(tmp_path):
    a, b = _report("decoupled", [1.0, 1.0]), _report("interleaved", [1.5, 1.5])
    paths = write_bench_outputs(tmp_path, [a, b], compare_modes(a, b), {"oracle_makespan": 2.0})
    assert [p.name for p in paths] == ["bench.json", "bench.csv"]
    payload = json.loads(paths[0].read_text(encoding="utf-8"))
    assert [r["mode"] for r in payload["reports"]] == ["decoupled", "interleaved"]
    assert payload["summary"]["ratio"] == pytest.approx(1.5)
    assert payload["oracle_makespan"] == 2.0
    lines = paths[1].read_text(encoding="utf-8").splitlines()
    assert lines[0] == "bucket,gold_steps,mode,mean_seconds,n"
    assert lines[1:] == ["1,1.0,decoupled,1.0,2", "1,1.0,interleaved,1.5,2"]
