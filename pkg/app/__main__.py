#!/usr/bin/env python3
"""
Governance Harness - Main CLI

Usage:
    python -m app kg validate [--dir D]
    python -m app kg show <id>
    python -m app kg add --file node.json --role builder
    python -m app kg stats [--against D]
    python -m app state show [--file F]
    python -m app state replay --log data/state/discoveries.log [--out F]
    python -m app experiment run --condition C --trials 5 --provider mock --out results/C
    python -m app eval score --transcript T --manifest data/manifest.json
    python -m app eval stats --group a.csv --group b.csv
    python -m app metrics before.js after.js
    python -m app report --results results --format markdown

Every command takes --format json for machine-readable output.

Exit codes: 0 success, 1 validation/check failure, 2 usage error,
3 provider/transport error.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .access import AuditLog
from .assembler import TokenBudget
from .checks import load_manifest
from .config import HarnessConfig, load_config
from .errors import HarnessError, ValidationFailed
from .evaluator import check_evidence, score_transcript
from .governance import GovernanceEngine
from .graph import (
    TRACK_FILES, add_node, find_node, graph_for_track, load_graphs, save_graph, utc_now, validate_all,
)
from .memory import LearningMode, extract_state_blocks, load_state, persist_state, replay_discoveries
from .metrics import analyze_source
from .models import ConditionKind, KnowledgeNode, OperationClass, RoleMode, Track, Transcript
from .orchestrator import TrialContext, WorkflowSpec, run_trials
from .providers import MockProvider, create_provider
from .reports import (
    ReportGenerator, compare_conditions, format_csv, format_growth_table, growth_table,
    load_rows, markdown_report, metrics_table, summarize,
)
from .stats import trial_stats

logger = logging.getLogger(__name__)


def setup_logging(config: HarnessConfig, verbose: bool = False):
    """Diagnostics go to stderr and the configured log file; results go to stdout."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if config.log_file:
        Path(config.log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(config.log_file))
    logging.basicConfig(
        level=getattr(logging, config.log_level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)


def emit(args, data, text: Optional[str] = None):
    """Print a result as JSON or as text."""
    if args.format == "json" or text is None:
        print(json.dumps(data, indent=2))
    else:
        print(text)


def _graph_dir(args, config: HarnessConfig) -> Path:
    return Path(args.dir) if getattr(args, "dir", None) else config.graph_dir


# -----------------------------------------------------------------------------
# kg
# -----------------------------------------------------------------------------

def cmd_kg_validate(args, config: HarnessConfig) -> int:
    graphs = load_graphs(_graph_dir(args, config))
    report = validate_all(graphs)
    nodes = sum(len(g.nodes) for g in graphs)
    summary = f"{len(graphs)} graphs, {nodes} nodes, {len(report)} violations"
    emit(
        args,
        {"graphs": len(graphs), "nodes": nodes, **report.to_dict()},
        "\n".join([summary] + [f"  {v}" for v in report]),
    )
    return 0 if report.ok else 1


def cmd_kg_show(args, config: HarnessConfig) -> int:
    node = find_node(load_graphs(_graph_dir(args, config)), args.id)
    data = node.to_dict()
    lines = [f"{node.id} ({node.kind.value})", f"  title:    {node.title}"]
    if node.parent:
        lines.append(f"  parent:   {node.parent}")
    if node.priority:
        lines.append(f"  priority: {node.priority.value}")
    for link_field, targets in node.links.items():
        if targets:
            lines.append(f"  {link_field}: {', '.join(targets)}")
    if node.content:
        lines.append(f"  content:  {node.content}")
    emit(args, data, "\n".join(lines))
    return 0


def cmd_kg_add(args, config: HarnessConfig) -> int:
    path = Path(args.file)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ValidationFailed([f"{path}: {e}"])
    if isinstance(data, dict) and "metadata" not in data:
        now = utc_now()
        data["metadata"] = {"created": now, "updated": now, "version": 1}
    node = KnowledgeNode.from_dict(data)

    engine = GovernanceEngine(role=RoleMode(args.role), audit=AuditLog(str(config.audit_log)))
    engine.require(OperationClass.STRUCTURE_MUTATION, node.id)

    track = Track.for_node_id(node.id)
    if track is None:
        raise ValidationFailed([f"node id {node.id} names no known track"])
    graph_dir = _graph_dir(args, config)
    graphs = load_graphs(graph_dir)
    peers = [g for g in graphs if g.track is not track]
    updated = add_node(graph_for_track(graphs, track), node, engine.role, peers)
    saved = save_graph(updated, graph_dir / TRACK_FILES[track])

    emit(
        args,
        {"added": node.id, "track": track.value, "version": saved.version},
        f"Added {node.id} to {track.value} (v{saved.version})",
    )
    return 0


def cmd_kg_stats(args, config: HarnessConfig) -> int:
    initial = load_graphs(_graph_dir(args, config))
    final = load_graphs(args.against) if args.against else initial
    rows = growth_table(initial, final)
    emit(args, rows, format_growth_table(rows))
    return 0


# -----------------------------------------------------------------------------
# state
# -----------------------------------------------------------------------------

def cmd_state_show(args, config: HarnessConfig) -> int:
    state = load_state(args.file or config.seed_state)
    lines = [f"{len(state.entries)} entries (v{state.version})"] + [e.render() for e in state.entries]
    emit(args, state.to_dict(), "\n".join(lines))
    return 0


def _learning_mode(config: HarnessConfig) -> LearningMode:
    """The configured mode; reviewed mode needs an approver the command line cannot give."""
    if config.learning_mode is LearningMode.REVIEWED:
        raise ValidationFailed([
            "learning.mode 'reviewed' needs a builder approver; call replay_discoveries or "
            "run_trials with one, or set learning.mode to 'auto' for command-line runs"
        ])
    return config.learning_mode


def cmd_state_replay(args, config: HarnessConfig) -> int:
    mode = _learning_mode(config)
    seed = load_state(args.seed or config.seed_state)
    log_path = Path(args.log)
    try:
        text = log_path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ValidationFailed([f"{log_path}: {e}"])

    engine = GovernanceEngine(audit=AuditLog(str(config.audit_log)))
    graphs = load_graphs(config.graph_dir)
    result = replay_discoveries(
        extract_state_blocks(text), seed, graphs, mode, engine=engine, categories=config.categories,
    )
    if args.out:
        persist_state(result.state, args.out)

    knowledge_before = len(graph_for_track(graphs, Track.KNOWLEDGE).nodes)
    knowledge_after = len(graph_for_track(result.graphs, Track.KNOWLEDGE).nodes)
    data = {
        "entries_before": len(seed.entries),
        "entries_after": len(result.state.entries),
        "knowledge_nodes_before": knowledge_before,
        "knowledge_nodes_after": knowledge_after,
        "added_nodes": result.added_nodes,
        "rejected": result.rejected,
    }
    text_out = (
        f"State entries: {len(seed.entries)} -> {len(result.state.entries)}\n"
        f"Knowledge nodes: {knowledge_before} -> {knowledge_after}"
        + "".join(f"\n  rejected: {raw}" for raw in result.rejected)
    )
    emit(args, data, text_out)
    return 0


# -----------------------------------------------------------------------------
# experiment
# -----------------------------------------------------------------------------

def cmd_experiment_run(args, config: HarnessConfig) -> int:
    condition = ConditionKind.from_label(args.condition)
    mode = _learning_mode(config) if condition is ConditionKind.C_DYNAMIC else config.learning_mode
    spec = WorkflowSpec.from_yaml(args.workflow or config.workflow)

    provider = create_provider(args.provider, args.mock_dir or config.mock_dir, config.provider)
    if isinstance(provider, MockProvider):
        provider = provider.for_condition(condition)
    judge = provider if config.judge_enabled and not args.no_judge else None

    context = TrialContext(
        graphs=load_graphs(config.graph_dir),
        seed_state=load_state(config.seed_state),
        manifest=load_manifest(config.manifest),
        graph_base=config.graph_dir,
        budget=TokenBudget(config.token_budget),
        weights=config.weights,
        judge=judge,
        judge_dimensions=config.judge_dimensions,
        audit=AuditLog(str(config.audit_log)),
        categories=config.categories,
        role=RoleMode(args.role),
        learning_mode=mode,
    )
    trials = config.trials if args.trials is None else args.trials
    jobs = config.jobs if args.jobs is None else args.jobs
    if trials < 0 or jobs < 1:
        raise ValidationFailed(["experiment.trials must be >= 0 and experiment.jobs >= 1"])
    records = run_trials(spec, condition, provider, trials, context, jobs=jobs)

    reporter = ReportGenerator(args.out or config.results_dir / condition.value)
    reporter.write_trials(records, include_wall_time=config.record_wall_time)
    paths = reporter.write_summary(records)
    if args.dump_prompts:
        reporter.write_prompts(records, args.dump_prompts)

    data = {
        "condition": condition.value,
        "output_dir": str(reporter.output_dir),
        "trials": [
            {
                "trial": r.trial,
                "failed": r.failed,
                "cumulative": r.rubric.cumulative if r.rubric else None,
                "error": r.error,
            }
            for r in records
        ],
        "summary": paths,
    }
    lines = [f"Condition {condition.value}: {len(records)} trial(s) -> {reporter.output_dir}"]
    for r in records:
        lines.append(f"  trial {r.trial:02d}: " + (f"FAILED ({r.error})" if r.failed else f"{r.rubric.cumulative:.4f}"))
    emit(args, data, "\n".join(lines))

    failed = [r for r in records if r.failed]
    if any((r.error or "").startswith("ProviderError") for r in failed):
        return 3
    return 1 if failed else 0


# -----------------------------------------------------------------------------
# eval
# -----------------------------------------------------------------------------

def cmd_eval_score(args, config: HarnessConfig) -> int:
    path = Path(args.transcript)
    try:
        transcript = Transcript.from_dict(json.loads(path.read_text(encoding="utf-8")))
    except (OSError, ValueError) as e:
        raise ValidationFailed([f"{path}: {e}"])
    manifest = load_manifest(args.manifest)
    judge = MockProvider(args.mock_dir) if args.mock_dir else None

    rubric = score_transcript(transcript, manifest, config.weights, judge, config.judge_dimensions)
    failures = check_evidence(transcript, manifest)
    data = {**rubric.to_dict(), "failures": failures}

    lines = [f"{s.dimension.value} {s.dimension.title}: {s.aggregated:.2f}" for s in rubric.scores]
    lines.append(f"Cumulative: {rubric.cumulative:.4f}" + (" (deterministic only)" if rubric.deterministic_only else ""))
    for f in failures:
        lines.append(f"  FAIL {f['check']} step {f['step']}: {'; '.join(f['evidence'])}")
    emit(args, data, "\n".join(lines))
    return 0 if all(s.aggregated == 2 for s in rubric.scores) else 1


def read_group(path) -> List[float]:
    """Cumulative scores from a summary CSV, a JSON list, or whitespace-separated numbers."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ValidationFailed([f"{path}: {e}"])
    try:
        if path.suffix == ".csv":
            rows = csv.DictReader(text.splitlines())
            return [float(row["cumulative"]) for row in rows if row.get("cumulative")]
        if path.suffix == ".json":
            return [float(v) for v in json.loads(text)]
        return [float(v) for v in text.split()]
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationFailed([f"{path}: not a list of scores ({e})"])


def cmd_eval_stats(args, config: HarnessConfig) -> int:
    groups = [read_group(g) for g in args.group]
    result = trial_stats(groups[0], groups[1] if len(groups) == 2 else None)
    data = result.to_dict()

    std = "n/a" if result.sample_std is None else f"{result.sample_std:.4f}"
    lines = [f"n={result.n} mean={result.mean:.4f} sd={std}"]
    if result.welch:
        w, f = data["welch"], data["f_test"]
        lines.append("Welch: undefined (constant samples)" if w["degenerate"]
                     else f"Welch: t={w['t']:.4f} df={w['df']:.2f} p={w['p']:.4f}")
        lines.append("F-test: undefined (constant samples)" if f["degenerate"]
                     else f"F-test: F={f['F']} df=({f['df1']}, {f['df2']}) p={f['p']:.4f}")
    emit(args, data, "\n".join(lines))
    return 0


# -----------------------------------------------------------------------------
# metrics / report
# -----------------------------------------------------------------------------

def cmd_metrics(args, config: HarnessConfig) -> int:
    reports = []
    for name in args.files:
        path = Path(name)
        try:
            source = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as e:
            raise ValidationFailed([f"{path}: {e}"])
        reports.append(analyze_source(source, path=str(path)))
    emit(args, [r.to_dict() for r in reports], metrics_table(reports))
    return 0


def cmd_report(args, config: HarnessConfig) -> int:
    rows = load_rows(args.results)
    if args.format == "csv":
        sys.stdout.write(format_csv(rows))
    elif args.format == "json":
        print(json.dumps({**summarize(rows), "comparisons": compare_conditions(rows)}, indent=2))
    else:
        print(markdown_report(rows))
    return 0


# -----------------------------------------------------------------------------
# Parser
# -----------------------------------------------------------------------------

def non_negative_int(value: str) -> int:
    number = int(value)
    if number < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {number}")
    return number


def positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {number}")
    return number


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', '-c', help='Config file path (default: config/settings.yaml)')
    common.add_argument('--role', choices=[r.value for r in RoleMode], default=RoleMode.EXPERT.value,
                        help='Active role (default: expert)')
    common.add_argument('--verbose', '-v', action='store_true', help='Verbose output')

    formatted = argparse.ArgumentParser(add_help=False, parents=[common])
    formatted.add_argument('--format', choices=['text', 'json'], default='text', help='Output format')

    parser = argparse.ArgumentParser(
        prog="python -m app",
        description="Governance Harness - knowledge graph, governed prompts and workflow experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__.split("Usage:", 1)[1],
    )
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    subparsers.required = True

    # kg
    kg = subparsers.add_parser('kg', help='Knowledge graph management')
    kg_sub = kg.add_subparsers(dest='action', metavar='ACTION')
    kg_sub.required = True

    p = kg_sub.add_parser('validate', help='Validate the three track graphs', parents=[formatted])
    p.add_argument('--dir', help='Graph directory')
    p.set_defaults(func=cmd_kg_validate)

    p = kg_sub.add_parser('show', help='Show one node', parents=[formatted])
    p.add_argument('id', help='Node id')
    p.add_argument('--dir', help='Graph directory')
    p.set_defaults(func=cmd_kg_show)

    p = kg_sub.add_parser('add', help='Add a node (builder role)', parents=[formatted])
    p.add_argument('--file', required=True, help='Node JSON file')
    p.add_argument('--dir', help='Graph directory')
    p.set_defaults(func=cmd_kg_add)

    p = kg_sub.add_parser('stats', help='Node counts per track', parents=[formatted])
    p.add_argument('--dir', help='Graph directory')
    p.add_argument('--against', help='Graph directory to compare against')
    p.set_defaults(func=cmd_kg_stats)

    # state
    state = subparsers.add_parser('state', help='Session state')
    state_sub = state.add_subparsers(dest='action', metavar='ACTION')
    state_sub.required = True

    p = state_sub.add_parser('show', help='Show a state file', parents=[formatted])
    p.add_argument('--file', help='State file (default: seed state)')
    p.set_defaults(func=cmd_state_show)

    p = state_sub.add_parser('replay', help='Replay a discovery log', parents=[formatted])
    p.add_argument('--log', required=True, help='File of ```STATE blocks')
    p.add_argument('--seed', help='Seed state (default: configured seed)')
    p.add_argument('--out', help='Write the resulting state here')
    p.set_defaults(func=cmd_state_replay)

    # experiment
    experiment = subparsers.add_parser('experiment', help='Workflow experiments')
    experiment_sub = experiment.add_subparsers(dest='action', metavar='ACTION')
    experiment_sub.required = True

    p = experiment_sub.add_parser('run', help='Run N trials of one condition', parents=[formatted])
    p.add_argument('--condition', required=True, choices=['A', 'B', 'C'], help='Prompting condition')
    p.add_argument('--trials', type=non_negative_int, help='Number of trials (default from config)')
    p.add_argument('--provider', required=True, choices=['live', 'mock'], help='Completion provider')
    p.add_argument('--mock-dir', help='Scripted response directory')
    p.add_argument('--workflow', help='Workflow YAML (default from config)')
    p.add_argument('--dump-prompts', metavar='DIR', help='Write each system prompt under DIR')
    p.add_argument('--out', help='Output directory')
    p.add_argument('--jobs', type=positive_int, help='Parallel trials (default from config)')
    p.add_argument('--no-judge', action='store_true', help='Deterministic checks only')
    p.set_defaults(func=cmd_experiment_run)

    # eval
    evaluation = subparsers.add_parser('eval', help='Scoring and statistics')
    eval_sub = evaluation.add_subparsers(dest='action', metavar='ACTION')
    eval_sub.required = True

    p = eval_sub.add_parser('score', help='Score a transcript', parents=[formatted])
    p.add_argument('--transcript', required=True, help='Transcript JSON')
    p.add_argument('--manifest', required=True, help='Check manifest JSON')
    p.add_argument('--mock-dir', help='Scripted judge replies (omit for checks only)')
    p.set_defaults(func=cmd_eval_score)

    p = eval_sub.add_parser('stats', help='Mean, SD, Welch and F-test', parents=[formatted])
    p.add_argument('--group', action='append', required=True, help='Scores file (csv, json or plain)')
    p.set_defaults(func=cmd_eval_stats)

    # metrics
    p = subparsers.add_parser('metrics', help='Source metrics for JavaScript files', parents=[formatted])
    p.add_argument('files', nargs='+', help='JavaScript files')
    p.set_defaults(func=cmd_metrics)

    # report
    p = subparsers.add_parser('report', help='Summarize experiment results', parents=[common])
    p.add_argument('--results', required=True, help='Results directory')
    p.add_argument('--format', choices=['csv', 'json', 'markdown'], default='markdown', help='Report format')
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point. Returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if len(getattr(args, "group", None) or []) > 2:
            parser.error("eval stats takes one or two --group files")
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    try:
        config = load_config(args.config)
    except HarnessError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    setup_logging(config, args.verbose)

    try:
        return args.func(args, config)
    except HarnessError as e:
        logger.error(f"{type(e).__name__}: {e}")
        if args.format == "json":
            print(json.dumps({"error": str(e), "type": type(e).__name__}, indent=2))
        return e.exit_code


if __name__ == '__main__':
    sys.exit(main())
