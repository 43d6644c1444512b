"""
Command-line entry point: ``coa index|reify|verify|bench|eval``.

Exit codes: 0 success, 1 operational failure, 2 usage error or missing input,
3 when ``reify`` wrote its output but some records failed.
"""

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from rich.console import Console

from . import __version__
from .config import RunConfig, configure_logging, load_config
from .data import WIKI_CORPUS, data_path, traces_path
from .errors import CoAError, ConfigError
from .evaluation import AnswerStyle, GoldRecord, evaluate_records, load_gold, load_predictions, stratify, summarize, write_outputs
from .jsonl import ManifestRecorder, iter_jsonl, write_json, write_jsonl
from .math_reify import reify_math
from .pipeline.base_pipeline import RunReport, WorkItem, load_trace_items
from .pipeline.compare import compare_modes, schedule_oracle, write_bench_outputs
from .pipeline.decoupled import run_decoupled
from .pipeline.interleaved import run_interleaved
from .reified import ReifiedTrace
from .reporting import Reporter
from .resource_manager import ResourceManager
from .trace_dsl import Domain, parse_trace
from .verifier import VerificationResult, verification_stats, verify_record
from .wiki_reify import AnswerGenerator, PlanExecutor, WikiTools, collect_search_context, generate_answer
from .wiki_tools.bm25 import Index, build_index
from .wiki_tools.corpus import load_corpus
from .workers import map_ordered

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_PARTIAL = 3

# input paths checked before any work starts
_INPUT_FIELDS = ("corpus", "index", "traces", "gold", "candidates", "predictions", "workload", "answers")


def _recorder(command: str, config: RunConfig) -> ManifestRecorder:
    recorder = ManifestRecorder(command, config.hashed_fields(), config.config_hash)
    for name in _INPUT_FIELDS:
        recorder.add_input(getattr(config, name))
    return recorder


def _require_output(config: RunConfig, command: str) -> Path:
    if config.output is None:
        raise ConfigError(f"{command} needs --out")
    return config.output


def _use_bundled_corpus(config: RunConfig) -> None:
    """Bundled wiki traces come with the articles they retrieve."""
    if config.domain is Domain.WIKI and config.index is None and config.corpus is None:
        config.corpus = data_path(WIKI_CORPUS)


# index


def cmd_index(args: argparse.Namespace, config: RunConfig, reporter: Reporter) -> int:
    """``index build`` persists an index from a corpus; ``index dump`` reads one back."""
    manager = ResourceManager(config)
    if args.index_command == "build":
        if config.corpus is None:
            raise ConfigError("index build needs --corpus")
        target = _require_output(config, "index build")
        index = build_index(load_corpus(config.corpus, config.chunk), manager.bm25_params())
        index.save(target, config.index_format)
        recorder = _recorder("index build", config)
        recorder.add_output(target)
        recorder.write(target)
        reporter.index_stats(index, str(target))
        return EXIT_OK

    if config.index is None:
        raise ConfigError("index dump needs --index")
    index = Index.load(config.index)
    if config.output is not None:
        index.save(config.output, "json")
        recorder = _recorder("index dump", config)
        recorder.add_output(config.output)
        recorder.write(config.output)
    reporter.index_stats(index, str(config.output) if config.output else None)
    return EXIT_OK


# reify


def reify_item(item: WorkItem, wiki_tools: Optional[WikiTools] = None) -> ReifiedTrace:
    """Reify one trace, returning a failed result rather than raising."""
    trace = parse_trace(item.trace or "", item.domain)
    if item.domain is Domain.WIKI:
        if wiki_tools is None:
            raise ConfigError("Wiki reification needs --index or --corpus")
        return PlanExecutor(trace, wiki_tools, item.question, item.id).run()
    try:
        return reify_math(trace, item.id)
    except CoAError as exc:
        return ReifiedTrace(trace=trace, trace_id=item.id).fail(exc)


def _reify_record(item: WorkItem, wiki_tools: Optional[WikiTools]) -> Dict[str, Any]:
    try:
        reified = reify_item(item, wiki_tools)
    except ConfigError:
        raise
    except CoAError as exc:
        return {"id": item.id, "status": "failed", "error": exc.to_dict()}
    if reified.domain is Domain.MATH:
        return reified.to_record()
    record = reified.to_record(collect_search_context(reified) if reified.ok else "")
    record["_reified"] = reified
    return record


async def _answer_all(records: List[Dict[str, Any]], items: Dict[str, WorkItem], generator: AnswerGenerator) -> None:
    for record in records:
        reified = record.get("_reified")
        if reified is None or not reified.ok:
            continue
        try:
            record["final_answer"] = await generate_answer(reified, items[record["id"]].question, generator)
        except CoAError as exc:
            logger.warning("No final answer for %s: %s", record["id"], exc.message)


def cmd_reify(args: argparse.Namespace, config: RunConfig, reporter: Reporter) -> int:
    """Reify every trace in ``--traces``; exit 3 when any record failed."""
    if config.traces is None:
        raise ConfigError("reify needs --traces")
    target = _require_output(config, "reify")
    manager = ResourceManager(config)
    wiki_tools = manager.wiki_tools() if config.domain is Domain.WIKI else None

    items = load_trace_items(config.traces, config.domain)
    records = list(map_ordered(lambda item: _reify_record(item, wiki_tools), items, config.workers))
    if config.domain is Domain.WIKI:
        generator = manager.answer_generator()
        if generator is not None:
            asyncio.run(_answer_all(records, {item.id: item for item in items}, generator))
    for record in records:
        record.pop("_reified", None)

    write_jsonl(target, records)
    recorder = _recorder("reify", config)
    recorder.add_output(target)
    recorder.write(target)

    reporter.reify_status(records)
    failed = sum(record["status"] != "ok" for record in records)
    if failed:
        reporter.status(f"⚠️  {failed}/{len(records)} records failed", "yellow")
        return EXIT_PARTIAL
    reporter.status(f"✅ Reified {len(records)} traces")
    return EXIT_OK


# verify


def _verify_inputs(config: RunConfig) -> List[tuple]:
    """``(candidate text, gold record)`` pairs in candidate order."""
    candidates_path = config.candidates or traces_path(config.domain)
    golds = load_gold(config.gold) if config.gold is not None else {}
    pairs = []
    for row in iter_jsonl(candidates_path):
        item_id = str(row.get("id", ""))
        gold = golds.get(item_id) or GoldRecord.model_validate({**row, "id": item_id})
        pairs.append((str(row.get("candidate", row.get("trace", ""))), gold))
    return pairs


def cmd_verify(args: argparse.Namespace, config: RunConfig, reporter: Reporter) -> int:
    """Keep/discard every candidate; defaults to the bundled traces."""
    if config.candidates is None:
        _use_bundled_corpus(config)
    target = _require_output(config, "verify")
    manager = ResourceManager(config)
    tools = manager.wiki_tools() if config.domain is Domain.WIKI else None

    def verify(pair: tuple) -> VerificationResult:
        candidate, gold = pair
        return verify_record(candidate, gold, config.domain, tools, config.match_any_topk)

    results = list(map_ordered(verify, _verify_inputs(config), config.workers))
    stats = verification_stats(results)
    write_jsonl(target, (result.to_record() for result in results))
    stats_path = target.with_name(target.name + ".stats.json")
    write_json(stats_path, stats.model_dump(mode="json"))

    recorder = _recorder("verify", config)
    recorder.add_output(target)
    recorder.add_output(stats_path)
    recorder.write(target)
    reporter.verify_stats(stats)
    reporter.wrote([target, stats_path])
    return EXIT_OK


# bench


def _oracle_extra(report: RunReport, capacity: int) -> Dict[str, Any]:
    """Exact schedule for the observed decode and tool times, and the run's deviation from it."""
    oracle = schedule_oracle(
        [i.decode_seconds for i in report.items], [i.tool_seconds for i in report.items], capacity
    )
    deviation = None
    if oracle.makespan > 0:
        deviation = abs(report.total_seconds - oracle.makespan) / oracle.makespan
    return {"oracle_makespan": oracle.makespan, "oracle_deviation": deviation}


def cmd_bench(args: argparse.Namespace, config: RunConfig, reporter: Reporter) -> int:
    """Time the decoupled and/or interleaved pipelines over one workload."""
    if config.generator == "llm" and config.clock == "virtual":
        raise ConfigError("The llm generator needs --clock real")
    source = config.workload or config.traces
    if source is None:
        source = traces_path(config.domain)
        _use_bundled_corpus(config)
    manager = ResourceManager(config)
    items = load_trace_items(source, config.domain)
    modes = ["decoupled", "interleaved"] if config.mode == "both" else [config.mode]

    reports: List[RunReport] = []
    for mode in modes:
        clock = manager.clock()
        generator = manager.trace_generator(items)
        reporter.status(f"⏱️  Running {mode} on {len(items)} items", "blue")
        if mode == "decoupled":
            report = run_decoupled(items, generator, manager.reifier(), clock, config.queue)
        else:
            report = run_interleaved(items, generator, manager.dispatcher(clock), clock)
        reporter.run_report(report)
        reports.append(report)

    extra: Dict[str, Any] = {}
    decoupled = next((r for r in reports if r.mode == "decoupled"), None)
    if decoupled is not None and config.clock == "virtual":
        extra = _oracle_extra(decoupled, config.queue)
    summary = compare_modes(reports[0], reports[1]) if len(reports) == 2 else None
    if summary is not None:
        reporter.speedup(summary, extra.get("oracle_makespan"))

    if config.output is not None:
        paths = write_bench_outputs(config.output, reports, summary, extra)
        recorder = _recorder("bench", config)
        recorder.add_input(source)
        for path in paths:
            recorder.add_output(path)
        recorder.write(config.output)
        reporter.wrote(paths)
    return EXIT_OK


# eval


def cmd_eval(args: argparse.Namespace, config: RunConfig, reporter: Reporter) -> int:
    """Exact-match accuracy, per-bucket CSV and the step heatmap."""
    if config.gold is None or config.predictions is None:
        raise ConfigError("eval needs --gold and --predictions")
    out_dir = _require_output(config, "eval")
    records = evaluate_records(
        load_predictions(config.predictions), load_gold(config.gold), config.domain, AnswerStyle(config.answer_style)
    )
    table = stratify(records, config.min_cell)
    summary = summarize(records, table, config.domain)
    paths = write_outputs(out_dir, summary, table)
    records_path = out_dir / "records.jsonl"
    write_jsonl(records_path, (record.to_row() for record in records))
    paths.append(records_path)

    recorder = _recorder("eval", config)
    for path in paths:
        recorder.add_output(path)
    recorder.write(out_dir)
    reporter.eval_summary(summary, table)
    reporter.wrote(paths)
    return EXIT_OK


# Argument parsing

COMMANDS = {"index": cmd_index, "reify": cmd_reify, "verify": cmd_verify, "bench": cmd_bench, "eval": cmd_eval}


def _add_domain(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--domain", choices=[d.value for d in Domain], default=None)


def _add_out(parser: argparse.ArgumentParser, help_text: str) -> None:
    parser.add_argument("--out", dest="output", type=Path, default=None, help=help_text)


def _add_retrieval(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("retrieval")
    group.add_argument("--index", type=Path, default=None, help="persisted BM25 index")
    group.add_argument("--corpus", type=Path, default=None, help="corpus JSONL (index built in memory)")
    group.add_argument("--top-k", type=int, default=None)
    group.add_argument("--rerank-reference", choices=["query", "question"], default=None)
    group.add_argument("--ner", choices=["gazetteer", "spacy"], default=None)
    group.add_argument("--spacy-model", default=None)
    group.add_argument("--stem", action="store_true", default=None)


def _add_index_params(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k1", type=float, default=None)
    parser.add_argument("--b", type=float, default=None)
    parser.add_argument("--title-weight", type=int, default=None)
    parser.add_argument("--stem", action="store_true", default=None)
    parser.add_argument("--chunk", action="store_true", default=None, help="index each paragraph separately")


def _add_globals(parser: argparse.ArgumentParser, default: Any = None) -> None:
    parser.add_argument("--config", type=Path, default=default, help="flat key=value config file")
    parser.add_argument("--log-level", default=default, help="overrides COA_LOG")
    parser.add_argument("--json", dest="json_errors", action="store_true", default=default, help="JSON diagnostics on stderr")
    parser.add_argument("--workers", type=int, default=default)
    parser.add_argument("--seed", type=int, default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coa", description="Chain-of-Abstraction runtime")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_globals(parser)
    # accepted after the subcommand too; SUPPRESS keeps a subcommand from resetting them
    common = argparse.ArgumentParser(add_help=False)
    _add_globals(common, argparse.SUPPRESS)
    shared = {"parents": [common]}
    commands = parser.add_subparsers(dest="command", required=True)

    index = commands.add_parser("index", help="build or dump a BM25 index", **shared)
    index_commands = index.add_subparsers(dest="index_command", required=True)
    build = index_commands.add_parser("build", help="index a corpus JSONL", **shared)
    build.add_argument("--corpus", type=Path, default=None)
    _add_out(build, "index file")
    build.add_argument("--format", dest="index_format", choices=["binary", "json"], default=None)
    _add_index_params(build)
    dump = index_commands.add_parser("dump", help="print statistics, optionally write JSON", **shared)
    dump.add_argument("--index", type=Path, default=None)
    _add_out(dump, "JSON dump")

    reify = commands.add_parser("reify", help="fill placeholders of CoA traces", **shared)
    _add_domain(reify)
    reify.add_argument("--traces", type=Path, default=None, help="trace JSONL or one trace per line")
    reify.add_argument("--answers", type=Path, default=None, help="recorded final answers JSONL (wiki)")
    reify.add_argument("--generator", choices=["replay", "llm"], default=None)
    reify.add_argument("--model", default=None)
    _add_out(reify, "output JSONL")
    _add_retrieval(reify)

    verify = commands.add_parser("verify", help="keep/discard rewritten traces", **shared)
    _add_domain(verify)
    verify.add_argument("--gold", type=Path, default=None)
    verify.add_argument("--candidates", type=Path, default=None, help="defaults to the bundled traces")
    verify.add_argument("--match-any-topk", action="store_true", default=None)
    _add_out(verify, "verification JSONL")
    _add_retrieval(verify)

    bench = commands.add_parser("bench", help="time decoupled against interleaved tool calling", **shared)
    _add_domain(bench)
    bench.add_argument("--workload", type=Path, default=None, help="defaults to the bundled traces")
    bench.add_argument("--mode", choices=["decoupled", "interleaved", "both"], default=None)
    bench.add_argument("--sim-decode-tps", type=float, default=None)
    bench.add_argument("--sim-tool-ms", type=float, default=None)
    bench.add_argument("--queue", type=int, default=None)
    bench.add_argument("--clock", choices=["virtual", "real"], default=None)
    bench.add_argument("--generator", choices=["replay", "llm"], default=None)
    bench.add_argument("--model", default=None)
    _add_out(bench, "output directory")
    _add_retrieval(bench)

    evaluate = commands.add_parser("eval", help="exact-match accuracy and step stratification", **shared)
    _add_domain(evaluate)
    evaluate.add_argument("--gold", type=Path, default=None)
    evaluate.add_argument("--predictions", type=Path, default=None)
    evaluate.add_argument("--answer-style", choices=[s.value for s in AnswerStyle], default=None)
    evaluate.add_argument("--min-cell", type=int, default=None)
    _add_out(evaluate, "output directory")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {key: value for key, value in vars(args).items() if key in RunConfig.model_fields}


def _missing_inputs(config: RunConfig) -> List[str]:
    paths = [getattr(config, name) for name in _INPUT_FIELDS]
    return [str(path) for path in paths if path is not None and not Path(path).exists()]


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    reporter = Reporter(Console(), Console(stderr=True), json_errors=bool(args.json_errors))

    try:
        config = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        reporter.error(exc)
        return EXIT_USAGE
    missing = _missing_inputs(config)
    if missing:
        reporter.usage(f"Input not found: {', '.join(missing)}")
        return EXIT_USAGE
    configure_logging(config.log_level)
    reporter.json_errors = config.json_errors

    try:
        return COMMANDS[args.command](args, config, reporter)
    except ConfigError as exc:
        reporter.error(exc, args.command)
        return EXIT_USAGE
    except CoAError as exc:
        reporter.error(exc, args.command)
        return EXIT_FAILURE
    except OSError as exc:
        reporter.usage(f"{args.command}: {exc}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
