"""Aggregate metrics and the trace-based recomputation used by ``report``.

The simulator accumulates its own bookkeeping while it runs; ``from_trace``
rebuilds the same inputs from nothing but the trace text.  Both feed
``summarize`` so any disagreement points at the trace or the event loop, not
at two copies of a formula.

Definitions:

* makespan: last job end minus first submission (0 when no job finished).
* per-tier utilization: allocated core-seconds inside the makespan window over
  tier cores times window length; tiers without cores use QPU busy time.
* QPU idle fraction: per device ``(H - busy) / H`` with ``H`` the simulated
  horizon, averaged over devices.
* CPU idle core-seconds: cores a job holds while none of its classical tasks
  is running.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from ._time import to_s
from .trace import Trace, parse_trace

__all__ = [
    "CausalityError",
    "JobRow",
    "MetricsReport",
    "RunAccounting",
    "from_trace",
    "summarize",
]

TIERS = ("R1", "R2", "R3", "R4")
FALLBACK_ACTIONS = ("gpu_emulation", "queued", "degraded_notice")


class CausalityError(ValueError):
    pass


@dataclass
class JobRow:
    job_id: str
    submit_ns: int
    start_ns: int | None = None
    end_ns: int | None = None
    state: str = "pending"
    mode: str = ""
    plan: str = ""
    resource: str = ""
    qpu: str = ""
    shots: int = 0

    CSV_HEADER = "job_id,submit_s,start_s,end_s,wait_s,state,mode,plan,resource,qpu,shots"

    def csv(self) -> str:
        def s(ns):
            return "" if ns is None else repr(to_s(ns))

        wait = None if self.start_ns is None else self.start_ns - self.submit_ns
        return ",".join(
            [self.job_id, s(self.submit_ns), s(self.start_ns), s(self.end_ns), s(wait), self.state, self.mode,
             self.plan, self.resource, self.qpu, str(self.shots)]
        )


@dataclass
class RunAccounting:
    """Raw run facts, in integer nanoseconds."""

    tier_of: dict[str, str] = field(default_factory=dict)
    cores_of: dict[str, int] = field(default_factory=dict)
    qpus: list[str] = field(default_factory=list)
    jobs: dict[str, JobRow] = field(default_factory=dict)
    alloc_intervals: list[tuple[str, int, int, int]] = field(default_factory=list)  # rid, cores, t0, t1
    qpu_intervals: list[tuple[str, int, int]] = field(default_factory=list)  # rid, t0, t1
    fallbacks: dict[str, int] = field(default_factory=lambda: {a: 0 for a in FALLBACK_ACTIONS})
    idle_core_ns: int = 0
    sim_end_ns: int = 0


@dataclass(frozen=True)
class MetricsReport:
    job_count: int
    completed_job_count: int
    degraded_job_count: int
    pending_job_count: int
    running_job_count: int
    makespan_s: float
    utilization: dict[str, float]
    qpu_idle_fraction: float
    mean_job_wait_s: float
    fallback_counts: dict[str, int]
    total_shots_executed: int
    cpu_idle_core_seconds: float
    horizon_s: float

    def to_text(self) -> str:
        lines = [
            f"job_count: {self.job_count}",
            f"completed_job_count: {self.completed_job_count}",
            f"degraded_job_count: {self.degraded_job_count}",
            f"pending_job_count: {self.pending_job_count}",
            f"running_job_count: {self.running_job_count}",
            f"makespan_s: {self.makespan_s!r}",
        ]
        lines += [f"utilization.{t}: {self.utilization[t]!r}" for t in TIERS]
        lines += [
            f"qpu_idle_fraction: {self.qpu_idle_fraction!r}",
            f"mean_job_wait_s: {self.mean_job_wait_s!r}",
        ]
        lines += [f"fallback.{a}: {self.fallback_counts[a]}" for a in FALLBACK_ACTIONS]
        lines += [
            f"total_shots_executed: {self.total_shots_executed}",
            f"cpu_idle_core_seconds: {self.cpu_idle_core_seconds!r}",
            f"horizon_s: {self.horizon_s!r}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        kv = {}
        for line in text.splitlines():
            if line.strip():
                k, _, v = line.partition(":")
                kv[k.strip()] = v.strip()
        return cls(
            job_count=int(kv["job_count"]),
            completed_job_count=int(kv["completed_job_count"]),
            degraded_job_count=int(kv["degraded_job_count"]),
            pending_job_count=int(kv["pending_job_count"]),
            running_job_count=int(kv["running_job_count"]),
            makespan_s=float(kv["makespan_s"]),
            utilization={t: float(kv[f"utilization.{t}"]) for t in TIERS},
            qpu_idle_fraction=float(kv["qpu_idle_fraction"]),
            mean_job_wait_s=float(kv["mean_job_wait_s"]),
            fallback_counts={a: int(kv[f"fallback.{a}"]) for a in FALLBACK_ACTIONS},
            total_shots_executed=int(kv["total_shots_executed"]),
            cpu_idle_core_seconds=float(kv["cpu_idle_core_seconds"]),
            horizon_s=float(kv["horizon_s"]),
        )

    def numeric_items(self) -> dict[str, float]:
        out = {k: float(v) for k, v in vars(self).items() if isinstance(v, (int, float))}
        out.update({f"utilization.{t}": v for t, v in self.utilization.items()})
        out.update({f"fallback.{a}": float(v) for a, v in self.fallback_counts.items()})
        return out


def _overlap(a0: int, a1: int, w0: int, w1: int) -> int:
    return max(0, min(a1, w1) - max(a0, w0))


def summarize(acc: RunAccounting) -> MetricsReport:
    rows = [acc.jobs[k] for k in sorted(acc.jobs)]
    finished = [r for r in rows if r.end_ns is not None]
    started = [r for r in rows if r.start_ns is not None]
    if finished:
        w0 = min(r.submit_ns for r in rows)
        w1 = max(r.end_ns for r in finished)
    else:
        w0 = w1 = 0
    window = w1 - w0

    utilization = {}
    for tier in TIERS:
        rids = sorted(r for r, t in acc.tier_of.items() if t == tier)
        cores = sum(acc.cores_of[r] for r in rids)
        tier_qpus = [r for r in rids if r in acc.qpus]
        if window <= 0 or (cores == 0 and not tier_qpus):
            utilization[tier] = 0.0
        elif cores > 0:
            used = sum(c * _overlap(t0, t1, w0, w1) for rid, c, t0, t1 in acc.alloc_intervals if rid in rids)
            utilization[tier] = used / (cores * window)
        else:
            used = sum(_overlap(t0, t1, w0, w1) for rid, t0, t1 in acc.qpu_intervals if rid in tier_qpus)
            utilization[tier] = used / (len(tier_qpus) * window)

    horizon = acc.sim_end_ns
    if acc.qpus and horizon > 0:
        fractions = []
        for rid in sorted(acc.qpus):
            busy = sum(_overlap(t0, t1, 0, horizon) for r, t0, t1 in acc.qpu_intervals if r == rid)
            fractions.append((horizon - busy) / horizon)
        qpu_idle = sum(fractions) / len(fractions)
    else:
        qpu_idle = 0.0

    waits = [r.start_ns - r.submit_ns for r in started]
    return MetricsReport(
        job_count=len(rows),
        completed_job_count=sum(1 for r in rows if r.state == "completed"),
        degraded_job_count=sum(1 for r in rows if r.state == "degraded"),
        pending_job_count=sum(1 for r in rows if r.start_ns is None),
        running_job_count=sum(1 for r in rows if r.start_ns is not None and r.end_ns is None),
        makespan_s=to_s(window),
        utilization=utilization,
        qpu_idle_fraction=qpu_idle,
        mean_job_wait_s=to_s(sum(waits)) / len(waits) if waits else 0.0,
        fallback_counts=dict(acc.fallbacks),
        total_shots_executed=sum(r.shots for r in rows),
        cpu_idle_core_seconds=to_s(acc.idle_core_ns),
        horizon_s=to_s(horizon),
    )


def from_trace(trace: Trace | str, *, check_causality: bool = True) -> tuple[RunAccounting, MetricsReport]:
    """Rebuild run accounting from a trace alone and summarize it."""
    if isinstance(trace, str):
        trace = parse_trace(trace)
    acc = RunAccounting()
    for res in trace.resources():
        rid = res["id"]
        acc.tier_of[rid] = res["tier"]
        acc.cores_of[rid] = int(res["cores"])
        if res.get("qpu") == "1":
            acc.qpus.append(rid)

    held: dict[str, tuple[str, int, int]] = {}  # job -> (rid, cores, since)
    running: dict[str, int] = defaultdict(int)
    idle_since: dict[str, int] = {}
    done: dict[str, set] = defaultdict(set)
    phase_open: dict[tuple[str, str], tuple[str, int]] = {}
    tokens: dict[str, tuple[str, int]] = {}  # job -> (token, expires_ns)
    last_ns = 0

    def idle_update(job: str, t: int) -> None:
        idle = job in held and running[job] == 0
        if idle and job not in idle_since:
            idle_since[job] = t
        elif not idle and job in idle_since:
            acc.idle_core_ns += held_cores.get(job, 0) * (t - idle_since.pop(job))

    held_cores: dict[str, int] = {}

    for rec in trace.records:
        t = rec.time_ns
        if t < last_ns:
            raise CausalityError(f"event seq {rec.seq} goes back in time")
        last_ns = t
        kind = rec.kind
        if kind == "job_submit":
            acc.jobs[rec["job"]] = JobRow(rec["job"], t)
        elif kind == "job_start":
            job = rec["job"]
            row = acc.jobs[job]
            row.start_ns, row.state = t, "running"
            row.mode, row.plan, row.resource, row.qpu = rec["mode"], rec["plan"], rec["resource"], rec["qpu"]
            cores = int(rec["cores"])
            held[job] = (rec["resource"], cores, t)
            held_cores[job] = cores
            if rec["token"] != "-":
                tokens[job] = (rec["token"], int(rec["token_expires_ns"]))
            idle_update(job, t)
        elif kind in ("cores_released", "job_end") and rec.get("job") in held:
            job = rec["job"]
            rid, cores, since = held.pop(job)
            acc.alloc_intervals.append((rid, cores, since, t))
            idle_update(job, t)
        elif kind == "cores_reacquired":
            job = rec["job"]
            held[job] = (rec["resource"], held_cores[job], t)
            idle_update(job, t)

        if kind in ("task_start", "qpu_phase_start"):
            job, node = rec["job"], rec["node"]
            deps = rec["deps"]
            missing = [d for d in deps.split(",") if d and d not in done[job]] if deps else []
            if check_causality and missing:
                raise CausalityError(f"{job}/{node} started at {t} before dependencies {missing} finished")
            if kind == "task_start":
                if check_causality and job not in held:
                    raise CausalityError(f"{job}/{node} started without a classical allocation")
                running[job] += 1
                idle_update(job, t)
            else:
                if rec.get("token_new") == "1":
                    tokens[job] = (rec["token"], int(rec["token_expires_ns"]))
                tok = tokens.get(job)
                if check_causality and (tok is None or tok[0] != rec["token"] or t >= tok[1]):
                    raise CausalityError(f"{job}/{node} QPU phase without a valid token")
                phase_open[(job, node)] = (rec["resource"], t)
        elif kind == "task_end":
            job = rec["job"]
            done[job].add(rec["node"])
            running[job] -= 1
            idle_update(job, t)
        elif kind == "qpu_phase_end":
            job, node = rec["job"], rec["node"]
            done[job].add(node)
            rid, t0 = phase_open.pop((job, node))
            acc.qpu_intervals.append((rid, t0, t))
            acc.jobs[job].shots += int(rec["shots"])
        elif kind == "fallback":
            acc.fallbacks[rec["action"]] += 1
        elif kind == "job_end":
            row = acc.jobs[rec["job"]]
            row.end_ns, row.state = t, rec["state"]
            idle_update(rec["job"], t)
        elif kind == "sim_end":
            acc.sim_end_ns = t

    end = acc.sim_end_ns
    for job, (rid, cores, since) in sorted(held.items()):
        acc.alloc_intervals.append((rid, cores, since, end))
    for job, since in sorted(idle_since.items()):
        acc.idle_core_ns += held_cores[job] * (end - since)
    for (job, node), (rid, t0) in sorted(phase_open.items()):
        acc.qpu_intervals.append((rid, t0, end))
    return acc, summarize(acc)
