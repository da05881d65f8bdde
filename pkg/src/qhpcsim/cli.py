"""``qhpc-sim`` command line.

Subcommands::

    submit HWD       parse a descriptor and check it against a scenario registry
    run [SCENARIO]   simulate a scenario, write trace, metrics and per-job CSV
    report TRACE     recompute metrics from a trace (optionally compare to a file)
    validate [SCENARIO]  load a scenario and print what it contains

The scenario defaults to ``$QHPC_SIM_CONFIG``; bundled scenarios can be named
without a path (``qhpc-sim run vqe_vs_modes``).

Exit codes:
    0  success
    1  report: recomputed metrics differ from the given metrics file
    2  descriptor, scenario or trace format error
    3  job infeasible against the registry (``no feasible QPU``)
    4  internal invariant violation (simulation abort or trace causality)
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .dctg import classify_paths, unroll
from .hwd import HwdError, parse_hwd
from .metrics import CausalityError, JobRow, MetricsReport, from_trace
from .registry import Registry
from .scenario import Scenario, ScenarioError, load_scenario, parse_mode
from .scheduler import PendingJob, QssWeights, capacity_units, choose_fallback, mem_units, rank_qpus
from .simcore import SimulationInvariantError, run
from .trace import FormatError, parse_trace

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_INVARIANT = 4

REPORT_TOLERANCE = 1e-9

log = logging.getLogger("qhpcsim")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _scenario_arg(value: str | None) -> str:
    value = value or os.environ.get("QHPC_SIM_CONFIG")
    if not value:
        raise CliError(EXIT_INPUT, "no scenario given and QHPC_SIM_CONFIG is not set")
    return value


def _load(value: str | None) -> Scenario:
    try:
        return load_scenario(_scenario_arg(value))
    except ScenarioError as exc:
        raise CliError(EXIT_INPUT, f"scenario error: {exc}") from None


def _weights(text: str) -> QssWeights:
    try:
        parts = [float(x) for x in text.split(",")]
        return QssWeights.normalized(parts)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, f"--weights: {exc}") from None


def _apply_flags(scenario: Scenario, args) -> Scenario:
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    if args.horizon is not None:
        if args.horizon < 0:
            raise CliError(EXIT_INPUT, "--horizon must be >= 0")
        scenario = scenario.with_horizon(args.horizon)
    if args.mode is not None:
        scenario = scenario.with_policy(mode_override=parse_mode(args.mode))
    if args.weights is not None:
        scenario = scenario.with_policy(weights=_weights(args.weights))
    return scenario


# ---------------------------------------------------------------------------
# submit
# ---------------------------------------------------------------------------


def cmd_submit(args, out) -> int:
    try:
        text = Path(args.hwd).read_text()
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"{args.hwd}: {exc.strerror}") from None
    try:
        descriptor = parse_hwd(text)
    except HwdError as exc:
        raise CliError(EXIT_INPUT, f"{args.hwd}: {exc}") from None
    scenario = _load(args.scenario)
    if args.weights is not None:
        scenario = scenario.with_policy(weights=_weights(args.weights))
    policy = scenario.policy
    registry = Registry.from_records(scenario.records, scenario.drift)

    c = descriptor.classical
    demand = (c.cpu_cores, c.gpu_count, mem_units(c.memory_gb))
    hosts = [
        r.resource_id
        for r in registry.all()
        if r.cpu_cores > 0 and all(x <= cap for x, cap in zip(demand, (r.cpu_cores, r.gpu_count, capacity_units(r.memory_gb))))
    ]
    print(f"job {descriptor.job_id}: valid descriptor", file=out)
    print(f"classical demand: cores={demand[0]} gpus={demand[1]} memory_mib={demand[2]}", file=out)
    print(f"classical hosts: {', '.join(hosts) if hosts else 'none'}", file=out)
    if not hosts:
        raise CliError(EXIT_INFEASIBLE, f"job {descriptor.job_id}: classical demand fits no resource")

    template = args.template or ("classical_only" if descriptor.quantum is None else "vqe_loop")
    try:
        graph = PendingJob(descriptor, 0, template).task_graph(policy.templates)
    except ValueError as exc:
        raise CliError(EXIT_INPUT, f"template {template}: {exc}") from None
    paths = classify_paths(graph)
    flat = unroll(graph)
    print(
        f"template {template}: {len(graph.nodes)} nodes, {len(graph.edges)} edges, "
        f"{len(graph.feedback_loops)} loops; unrolled {len(flat.nodes)} nodes, {len(flat.qpu_nodes())} QPU tasks",
        file=out,
    )
    print(
        f"latency-critical chains: {len(paths.latency_critical_chains)}, "
        f"latency-tolerant batches: {len(paths.latency_tolerant_batches)}",
        file=out,
    )

    q = descriptor.quantum
    if q is None:
        print("QPU candidates: 0", file=out)
        return EXIT_OK
    ranked = rank_qpus(registry, q, policy.weights, policy.norms, None, policy.fabric)
    print(f"QPU candidates: {len(ranked)}", file=out)
    for i, (record, b) in enumerate(ranked, 1):
        print(
            f"  {i}. {record.resource_id} tier={record.tier} modality={record.qpu.modality} "
            f"qubits={record.qpu.qubit_count} feasible={'yes' if b.feasible else 'no'} qss={b.total!r}",
            file=out,
        )
    if not ranked or not ranked[0][1].feasible:
        action = choose_fallback(q, registry, policy.midware)
        raise CliError(EXIT_INFEASIBLE, f"no feasible QPU for job {descriptor.job_id} (fallback would be {action})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _print_summary(metrics: MetricsReport, out) -> None:
    print(f"jobs: {metrics.job_count} completed={metrics.completed_job_count} "
          f"degraded={metrics.degraded_job_count} pending={metrics.pending_job_count} "
          f"running={metrics.running_job_count}", file=out)
    print(f"makespan_s: {metrics.makespan_s!r}", file=out)
    for tier, u in metrics.utilization.items():
        print(f"utilization.{tier}: {u:.6f}", file=out)
    print(f"qpu_idle_fraction: {metrics.qpu_idle_fraction:.6f}", file=out)
    print(f"cpu_idle_core_seconds: {metrics.cpu_idle_core_seconds!r}", file=out)
    print("fallbacks: " + " ".join(f"{k}={v}" for k, v in metrics.fallback_counts.items()), file=out)


def cmd_run(args, out) -> int:
    scenario = _apply_flags(_load(args.scenario), args)
    out_dir = Path(args.out_dir)
    trace_path = Path(args.trace) if args.trace else out_dir / "trace.tsv"
    metrics_path = Path(args.metrics) if args.metrics else out_dir / "metrics.txt"
    jobs_path = out_dir / "jobs.csv"
    try:
        result = run(scenario)
    except SimulationInvariantError as exc:
        raise CliError(EXIT_INVARIANT, f"simulation aborted: {exc}") from None
    for path in (trace_path, metrics_path, jobs_path):
        path.parent.mkdir(parents=True, exist_ok=True)
    trace_path.write_text(result.trace)
    metrics_path.write_text(result.metrics.to_text())
    jobs_path.write_text(result.jobs_csv())
    _print_summary(result.metrics, out)
    print(f"trace: {trace_path}", file=out)
    print(f"metrics: {metrics_path}", file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def compare_metrics(a: MetricsReport, b: MetricsReport, tol: float = REPORT_TOLERANCE) -> list[str]:
    ia, ib = a.numeric_items(), b.numeric_items()
    return [k for k in sorted(ia) if abs(ia[k] - ib.get(k, float("nan"))) > tol or k not in ib]


def cmd_report(args, out) -> int:
    try:
        trace = parse_trace(Path(args.trace).read_text())
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"{args.trace}: {exc.strerror}") from None
    except FormatError as exc:
        raise CliError(EXIT_INPUT, f"{args.trace}: {exc}") from None
    try:
        acc, metrics = from_trace(trace)
    except CausalityError as exc:
        raise CliError(EXIT_INVARIANT, f"causality violation: {exc}") from None
    except (KeyError, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"{args.trace}: malformed event ({exc})") from None
    print(JobRow.CSV_HEADER, file=out)
    for job_id in sorted(acc.jobs):
        print(acc.jobs[job_id].csv(), file=out)
    print(file=out)
    out.write(metrics.to_text())
    if args.check_metrics:
        try:
            emitted = MetricsReport.from_text(Path(args.check_metrics).read_text())
        except (OSError, KeyError, ValueError) as exc:
            raise CliError(EXIT_INPUT, f"{args.check_metrics}: unreadable metrics ({exc})") from None
        diffs = compare_metrics(metrics, emitted)
        if diffs:
            print(f"metrics mismatch: {', '.join(diffs)}", file=out)
            return EXIT_MISMATCH
        print("metrics match", file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def cmd_validate(args, out) -> int:
    scenario = _load(args.scenario)
    print(f"scenario {scenario.name}: ok", file=out)
    print(f"seed: {scenario.seed}", file=out)
    print(f"horizon_s: {'none' if scenario.horizon_s is None else repr(scenario.horizon_s)}", file=out)
    print(f"resources: {len(scenario.records)}", file=out)
    for r in sorted(scenario.records, key=lambda r: r.resource_id):
        qpu = "" if r.qpu is None else f" qpu={r.qpu.modality}/{r.qpu.qubit_count}q/{r.qpu.connectivity}"
        print(f"  {r.resource_id} {r.tier} cores={r.cpu_cores} gpus={r.gpu_count} memory_gb={r.memory_gb!r}{qpu}", file=out)
    print(f"jobs: {len(scenario.jobs)}", file=out)
    for j in scenario.jobs:
        kind = "hybrid" if j.descriptor.quantum is not None else "classical"
        print(f"  {j.job_id} {kind} template={j.template} submit_ns={j.submit_ns}", file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qhpc-sim", description="Hybrid quantum-classical cluster scheduling simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("submit", help="validate a descriptor against a scenario registry")
    p.add_argument("hwd")
    p.add_argument("scenario", nargs="?", help="scenario file or bundled name (default: $QHPC_SIM_CONFIG)")
    p.add_argument("--template", help="workflow template for the graph summary")
    p.add_argument("--weights", help="QSS weights f,c,q,l (normalized)")
    p.set_defaults(func=cmd_submit)

    p = sub.add_parser("run", help="simulate a scenario")
    p.add_argument("scenario", nargs="?", help="scenario file or bundled name (default: $QHPC_SIM_CONFIG)")
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=float, help="stop the simulation at this time (seconds)")
    p.add_argument("--mode", choices=("auto", "simultaneous", "interleaved", "async"))
    p.add_argument("--weights", help="QSS weights f,c,q,l (normalized)")
    p.add_argument("--out-dir", default=".", help="directory for trace.tsv, metrics.txt and jobs.csv")
    p.add_argument("--trace", help="trace output path (overrides --out-dir)")
    p.add_argument("--metrics", help="metrics output path (overrides --out-dir)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="recompute metrics from a trace")
    p.add_argument("trace")
    p.add_argument("--check-metrics", metavar="FILE", help="compare against a metrics file written by run")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario", nargs="?", help="scenario file or bundled name (default: $QHPC_SIM_CONFIG)")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, out)
    except CliError as exc:
        print(f"qhpc-sim: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
