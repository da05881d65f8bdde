"""Deterministic discrete-event engine.

Time is an integer count of nanoseconds.  Events are ordered by
``(time_ns, seq)`` with ``seq`` assigned at enqueue, which makes every run a
pure function of the scenario.  The loop is the only writer of cluster state
and of the registry; after each event it re-checks capacity conservation,
single-holder QPU exclusivity and the calibration staleness bound, and aborts
with :class:`SimulationInvariantError` on the first violation.

Co-scheduling modes, as executed here:

simultaneous
    the classical allocation is held from job start to job end.
interleaved
    a QPU phase starts only while the job holds its allocation and no
    classical task runs; the allocation is released at phase start and
    re-acquired at the scheduling pass ``sched_latency_s`` after phase end.
async_streaming
    QPU tasks run whenever their dependencies are met; the allocation is
    released while only quantum work is outstanding and re-acquired (through
    the same scheduling pass) once a classical task becomes ready.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ._time import duration_ns, to_ns, to_s
from .dctg import Edge, TaskGraph, TaskNode, contract_qpu_nodes, unroll
from .fabric import QrtpPayload, feedback_rtt, qpu_exec_time
from .kernels import EventQueue
from .metrics import JobRow, MetricsReport, RunAccounting, summarize
from .midware import emulation_cost
from .registry import Registry
from .scheduler import (
    Allocation,
    ClusterState,
    PendingJob,
    QpuToken,
    ScheduleDecision,
    schedule_step,
)
from .trace import FORMAT_VERSION, MAGIC, format_record

__all__ = ["SimResult", "SimulationInvariantError", "Simulator", "run"]

log = logging.getLogger(__name__)


class SimulationInvariantError(RuntimeError):
    pass


@dataclass
class SimResult:
    trace: str
    metrics: MetricsReport
    jobs: list[JobRow]
    event_count: int

    def jobs_csv(self) -> str:
        return "\n".join([JobRow.CSV_HEADER] + [r.csv() for r in self.jobs]) + "\n"


@dataclass
class _Job:
    spec: PendingJob
    row: JobRow
    decision: ScheduleDecision | None = None
    graph: TaskGraph | None = None
    dur: dict[str, int] = field(default_factory=dict)
    deps: dict[str, list[str]] = field(default_factory=dict)
    succs: dict[str, list[str]] = field(default_factory=dict)
    waiting: dict[str, int] = field(default_factory=dict)
    done: set = field(default_factory=set)
    ready_c: set = field(default_factory=set)
    ready_q: set = field(default_factory=set)
    running_c: set = field(default_factory=set)
    qpu_node: str | None = None
    phase_started: int = 0
    alloc: Allocation | None = None
    held: bool = False
    held_since: int = 0
    idle_since: int | None = None
    reacquire_at: int | None = None  # pass time at which the allocation may come back
    release_until: int = 0  # estimate of when a released allocation is needed again
    qpu: str | None = None
    qpu_tier: str | None = None
    token: QpuToken | None = None
    token_count: int = 0
    start_ns: int = 0
    wall_ns: int = 0
    shots: dict[str, int] = field(default_factory=dict)
    fallback_noted: bool = False

    @property
    def job_id(self) -> str:
        return self.spec.job_id

    @property
    def mode(self) -> str:
        return self.decision.mode


class Simulator:
    def __init__(self, scenario):
        self.scenario = scenario
        self.policy = scenario.policy
        self.registry = Registry.from_records(scenario.records, scenario.drift)
        self.horizon_ns = None if scenario.horizon_s is None else to_ns(scenario.horizon_s)
        self.poll_ns = to_ns(scenario.drift.poll_period_s)
        self.latency_ns = to_ns(self.policy.sched_latency_s)
        self.max_events = scenario.max_events

        self.queue = EventQueue()
        self._seq = 0
        self._record_seq = 0
        self.lines: list[str] = []
        self.jobs: dict[str, _Job] = {}
        self.pending: list[str] = []
        self.unsubmitted = 0
        self.reacquire: set[str] = set()
        self._pass_at: set[int] = set()

        self.capacity: dict[str, tuple[int, int, int]] = {}
        self.free: dict[str, list[int]] = {}
        self.holder: dict[str, str | None] = {}
        self.last_poll: dict[str, int] = {}
        self.acc = RunAccounting()
        self._init_resources()

    # -- setup -------------------------------------------------------------

    def _init_resources(self) -> None:
        state = ClusterState.idle(self.registry)
        self.capacity = dict(state.capacity)
        self.free = {rid: list(cap) for rid, cap in state.capacity.items()}
        for r in self.registry.all():
            self.acc.tier_of[r.resource_id] = r.tier
            self.acc.cores_of[r.resource_id] = r.cpu_cores
            if r.qpu is not None:
                self.holder[r.resource_id] = None
                self.acc.qpus.append(r.resource_id)
                self.last_poll[r.resource_id] = to_ns(r.qpu.calibration.timestamp_s)

    def _header(self) -> list[str]:
        sc = self.scenario
        lines = [
            f"{MAGIC}\t{FORMAT_VERSION}",
            f"#seed\t{sc.seed}",
            f"#horizon_s\t{'none' if sc.horizon_s is None else repr(float(sc.horizon_s))}",
        ]
        d = sc.drift
        consts = [
            ("drift.step_sigma", repr(d.step_sigma)),
            ("drift.recalibration_period_s", repr(d.recalibration_period_s)),
            ("drift.poll_period_s", repr(d.poll_period_s)),
            ("drift.floor", repr(d.floor)),
        ] + self.policy.header_items()
        lines += [f"#const\t{k}={v}" for k, v in consts]
        for r in self.registry.all():
            lines.append(
                f"#resource\tid={r.resource_id}\ttier={r.tier}\tcores={r.cpu_cores}\tgpus={r.gpu_count}"
                f"\tmemory_gb={r.memory_gb!r}\tqpu={int(r.qpu is not None)}"
            )
        return lines

    # -- primitives ----------------------------------------------------------

    def _push(self, t: int, item) -> None:
        self._seq += 1
        self.queue.push(t, self._seq, item)

    def _emit(self, t: int, kind: str, *fields) -> None:
        self._record_seq += 1
        self.lines.append(format_record(t, self._record_seq, kind, fields))

    def _request_pass(self, t: int) -> None:
        if t not in self._pass_at:
            self._pass_at.add(t)
            self._push(t, ("sched",))

    def _fail(self, message: str):
        raise SimulationInvariantError(message)

    # -- run -----------------------------------------------------------------

    def run(self) -> SimResult:
        self.lines = self._header()
        self._emit(0, "sim_start", ("jobs", str(len(self.scenario.jobs))), ("resources", str(len(self.registry))))
        for spec in self.scenario.jobs:
            job = _Job(spec, JobRow(spec.job_id, spec.submit_ns))
            self.jobs[spec.job_id] = job
            self.unsubmitted += 1
            self._push(spec.submit_ns, ("submit", spec.job_id))
        for rid in self.holder:
            self._schedule_poll(rid, self.last_poll[rid] + self.poll_ns, initial=True)

        events = 0
        now = 0
        while len(self.queue):
            t = self.queue.peek_time()
            if self.horizon_ns is not None and t > self.horizon_ns:
                break
            t, _, item = self.queue.pop()
            if item[0] == "poll" and self.horizon_ns is None and not self._outstanding():
                continue  # nothing left to calibrate for
            if t < now:
                self._fail(f"time went backwards: {t} < {now}")
            now = t
            events += 1
            if events > self.max_events:
                self._fail(f"event safety valve tripped after {self.max_events} events")
            self._handle(t, item)
            self._check_invariants(t)

        end = self.horizon_ns if self.horizon_ns is not None else now
        self._finalize(end)
        self._emit(end, "sim_end", ("events", str(events)))
        rows = [self.jobs[k].row for k in sorted(self.jobs)]
        return SimResult("\n".join(self.lines) + "\n", summarize(self.acc), rows, events)

    def _handle(self, t: int, item) -> None:
        kind = item[0]
        if kind == "submit":
            job = self.jobs[item[1]]
            self.unsubmitted -= 1
            self.pending.append(job.job_id)
            self.acc.jobs[job.job_id] = job.row
            d = job.spec.descriptor
            self._emit(
                t,
                "job_submit",
                ("job", job.job_id),
                ("priority", str(d.priority)),
                ("quantum", str(int(d.quantum is not None))),
                ("template", job.spec.template),
            )
            self._request_pass(t)
        elif kind == "sched":
            self._pass_at.discard(t)
            self._sched_pass(t)
        elif kind == "task_end":
            self._task_end(t, self.jobs[item[1]], item[2])
        elif kind == "phase_end":
            self._phase_end(t, self.jobs[item[1]], item[2])
        elif kind == "poll":
            self._poll(t, item[1])
        else:
            self._fail(f"unknown event {kind!r}")

    # -- calibration ----------------------------------------------------------

    def _outstanding(self) -> bool:
        return self.unsubmitted > 0 or any(j.row.start_ns is not None and j.row.end_ns is None for j in self.jobs.values())

    def _schedule_poll(self, rid: str, t: int, initial: bool = False) -> None:
        if self.horizon_ns is not None:
            if t <= self.horizon_ns:
                self._push(t, ("poll", rid))
        elif initial or self._outstanding():
            self._push(t, ("poll", rid))

    def _poll(self, t: int, rid: str) -> None:
        if self.registry.recalibration_due(rid, to_s(t)):
            nominal = self.registry.get(rid).qpu.calibration.nominal_fidelity
            self._emit(t, "recalibration", ("resource", rid), ("nominal", repr(nominal)))
        cal = self.registry.poll(rid, to_s(t))
        self.last_poll[rid] = t
        self._emit(t, "calib_poll", ("resource", rid), ("fidelity", repr(cal.two_qubit_fidelity)))
        self._schedule_poll(rid, t + self.poll_ns)

    # -- scheduling ----------------------------------------------------------

    def _cluster_state(self, t: int) -> ClusterState:
        state = ClusterState(
            capacity=dict(self.capacity),
            free={rid: tuple(v) for rid, v in self.free.items()},
            busy={rid: [] for rid in self.capacity},
            qpu_busy={rid: [] for rid in self.holder},
            qpu_holder=dict(self.holder),
        )
        for job_id in sorted(self.jobs):
            job = self.jobs[job_id]
            if job.alloc is None or job.row.end_ns is not None:
                continue
            est_end = max(job.start_ns + job.wall_ns, t + 1)
            a = job.alloc
            loads = (a.cores, a.gpus, a.memory_units)
            if job.held:
                state.busy[a.resource_id].append((t, est_end, loads))
            else:
                back = max(job.release_until, t)
                state.busy[a.resource_id].append((back, max(est_end, back + 1), loads))
            if job.qpu is not None:
                state.qpu_busy[job.qpu].append((t, est_end, (1,)))
        return state

    def _sched_pass(self, t: int) -> None:
        self._emit(t, "sched_pass", ("pending", str(len(self.pending))), ("reacquire", str(len(self.reacquire))))
        for job_id in sorted(self.reacquire, key=lambda j: (self.jobs[j].reacquire_at, j)):
            job = self.jobs[job_id]
            if job.reacquire_at > t:
                continue
            a = job.alloc
            if all(f >= x for f, x in zip(self.free[a.resource_id], (a.cores, a.gpus, a.memory_units))):
                self.reacquire.discard(job_id)
                job.reacquire_at = None
                self._acquire(job, t)
                self._emit(t, "cores_reacquired", ("job", job_id), ("resource", a.resource_id), ("cores", str(a.cores)))
                self._idle_update(job, t)
                self._dispatch(job, t)
        if not self.pending:
            return
        pending = [self.jobs[j].spec for j in self.pending]
        decisions = schedule_step(pending, self.registry, self._cluster_state(t), to_s(t), self.policy)
        for decision in decisions:
            job = self.jobs[decision.job_id]
            if decision.start_time_s is None:
                if not job.fallback_noted:
                    job.fallback_noted = True
                    self.acc.fallbacks[decision.fallback_taken] += 1
                    self._emit(t, "fallback", ("job", job.job_id), ("action", decision.fallback_taken))
                continue
            self._start_job(job, decision, t)

    # -- job execution ----------------------------------------------------------

    def _acquire(self, job: _Job, t: int) -> None:
        a = job.alloc
        free = self.free[a.resource_id]
        for i, x in enumerate((a.cores, a.gpus, a.memory_units)):
            free[i] -= x
        job.held = True
        job.held_since = t

    def _release(self, job: _Job, t: int) -> None:
        a = job.alloc
        free = self.free[a.resource_id]
        for i, x in enumerate((a.cores, a.gpus, a.memory_units)):
            free[i] += x
        job.held = False
        self.acc.alloc_intervals.append((a.resource_id, a.cores, job.held_since, t))
        self._request_pass(t)

    def _idle_update(self, job: _Job, t: int) -> None:
        idle = job.held and not job.running_c
        if idle and job.idle_since is None:
            job.idle_since = t
        elif not idle and job.idle_since is not None:
            self.acc.idle_core_ns += job.alloc.cores * (t - job.idle_since)
            job.idle_since = None

    def _build_plan(self, job: _Job, decision: ScheduleDecision) -> TaskGraph:
        spec = job.spec
        policy = self.policy
        g = unroll(spec.task_graph(policy.templates))
        q = spec.descriptor.quantum
        if decision.plan == "degraded":
            g = contract_qpu_nodes(g)
        elif decision.plan == "emulated":
            nodes = []
            for n in g.nodes:
                if n.is_qpu:
                    cost = emulation_cost(n.qubits, n.depth, n.shots, policy.midware)
                    nodes.append(TaskNode(n.node_id, "GPU", duration_s=cost, gpus=1, origin=n.origin, iteration=n.iteration))
                else:
                    nodes.append(n)
            g = TaskGraph(tuple(nodes), g.edges).validate()
        elif decision.plan == "qpu":
            est = decision.compilation
            roots = [n.node_id for n in g.nodes if not any(e.dst == n.node_id for e in g.edges)]
            compile_node = TaskNode("compile", "CPU", duration_s=est.compile_time_s, cores=spec.descriptor.classical.cpu_cores)
            g = TaskGraph((compile_node,) + g.nodes, tuple(Edge("compile", r) for r in roots) + g.edges).validate()
            record = self.registry.get(job.qpu)
            for n in g.qpu_nodes():
                shots = est.effective_shots(n.shots)
                exec_s = qpu_exec_time(shots, est.optimized_depth, record.qpu.modality, policy.fabric)
                rtt_s = feedback_rtt(record.tier, QrtpPayload(shots, n.qubits or q.qubit_count), policy.fabric)
                job.shots[n.node_id] = shots
                job.dur[n.node_id] = duration_ns(exec_s + rtt_s)
        for n in g.nodes:
            if not n.is_qpu:
                job.dur[n.node_id] = duration_ns(n.duration_s)
        return g

    def _start_job(self, job: _Job, decision: ScheduleDecision, t: int) -> None:
        self.pending.remove(job.job_id)
        job.decision = decision
        job.alloc = decision.classical_allocation
        job.start_ns = t
        job.wall_ns = duration_ns(job.spec.descriptor.classical.walltime_s)
        job.token = decision.qpu_token
        if job.token is not None:
            job.qpu = job.token.resource_id
            job.qpu_tier = self.registry.get(job.qpu).tier
            if self.holder[job.qpu] is not None:
                self._fail(f"QPU {job.qpu} already held by {self.holder[job.qpu]}")
            self.holder[job.qpu] = job.job_id
            job.token_count = 1
        a = job.alloc
        if not all(f >= x for f, x in zip(self.free[a.resource_id], (a.cores, a.gpus, a.memory_units))):
            self._fail(f"decision for {job.job_id} oversubscribes {a.resource_id}")
        self._acquire(job, t)
        row = job.row
        row.start_ns, row.state = t, "running"
        row.mode, row.plan, row.resource, row.qpu = decision.mode, decision.plan, a.resource_id, job.qpu or "-"
        tok = job.token
        self._emit(
            t,
            "job_start",
            ("job", job.job_id),
            ("plan", decision.plan),
            ("mode", decision.mode),
            ("resource", a.resource_id),
            ("cores", str(a.cores)),
            ("gpus", str(a.gpus)),
            ("memory_units", str(a.memory_units)),
            ("qpu", job.qpu or "-"),
            ("token", tok.token_id if tok else "-"),
            ("token_expires_ns", str(to_ns(tok.expires_at_s)) if tok else "-"),
            ("fidelity", repr(tok.calibration_snapshot.two_qubit_fidelity) if tok else "-"),
            ("qss", repr(decision.qss.total) if decision.qss else "-"),
            ("mitigation", decision.compilation.mitigation if decision.compilation else "-"),
            ("fallback", decision.fallback_taken),
        )
        if decision.fallback_taken != "none":
            self.acc.fallbacks[decision.fallback_taken] += 1
            self._emit(t, "fallback", ("job", job.job_id), ("action", decision.fallback_taken))

        g = self._build_plan(job, decision)
        job.graph = g
        job.deps = {n: [] for n in g.node_ids}
        job.succs = {n: [] for n in g.node_ids}
        for e in g.edges:
            job.deps[e.dst].append(e.src)
            job.succs[e.src].append(e.dst)
        job.waiting = {n: len(v) for n, v in job.deps.items()}
        for nid, count in job.waiting.items():
            if count == 0:
                self._mark_ready(job, nid)
        self._idle_update(job, t)
        self._dispatch(job, t)

    def _mark_ready(self, job: _Job, nid: str) -> None:
        if job.graph.node(nid).is_qpu:
            job.ready_q.add(nid)
        else:
            job.ready_c.add(nid)

    def _request_reacquire(self, job: _Job, t: int) -> None:
        job.reacquire_at = t + self.latency_ns
        self.reacquire.add(job.job_id)
        self._request_pass(job.reacquire_at)

    def _dispatch(self, job: _Job, t: int) -> None:
        mode = job.mode
        if job.ready_c:
            if job.held:
                for nid in sorted(job.ready_c):
                    self._start_task(job, nid, t)
                job.ready_c.clear()
            elif job.reacquire_at is None:
                self._request_reacquire(job, t)
        if job.qpu_node is None and job.ready_q:
            nid = min(job.ready_q)
            if mode != "interleaved":
                self._start_phase(job, nid, t)
            elif job.held and not job.running_c and job.reacquire_at is None:
                job.release_until = t + job.dur[nid] + self.latency_ns
                self._release_cores(job, t)
                self._start_phase(job, nid, t)
        if (
            mode == "async_streaming"
            and job.held
            and not job.running_c
            and not job.ready_c
            and (job.qpu_node is not None or job.ready_q)
        ):
            queued = sum(job.dur[n] for n in job.ready_q)
            job.release_until = t + queued + (job.dur[job.qpu_node] if job.qpu_node else 0) + self.latency_ns
            self._release_cores(job, t)
        if len(job.done) == len(job.dur) and job.reacquire_at is None and not job.running_c:
            self._finish_job(job, t)

    def _release_cores(self, job: _Job, t: int) -> None:
        a = job.alloc
        self._idle_update(job, t)
        self._release(job, t)
        self._idle_update(job, t)
        self._emit(t, "cores_released", ("job", job.job_id), ("resource", a.resource_id), ("cores", str(a.cores)))

    def _start_task(self, job: _Job, nid: str, t: int) -> None:
        if job.waiting[nid] != 0:
            self._fail(f"{job.job_id}/{nid} dispatched before its dependencies")
        node = job.graph.node(nid)
        job.running_c.add(nid)
        self._emit(
            t,
            "task_start",
            ("job", job.job_id),
            ("node", nid),
            ("kind", node.kind),
            ("duration_s", repr(node.duration_s)),
            ("deps", ",".join(sorted(job.deps[nid]))),
        )
        self._idle_update(job, t)
        self._push(t + job.dur[nid], ("task_end", job.job_id, nid))

    def _start_phase(self, job: _Job, nid: str, t: int) -> None:
        if job.waiting[nid] != 0:
            self._fail(f"{job.job_id}/{nid} dispatched before its dependencies")
        if self.holder.get(job.qpu) != job.job_id:
            self._fail(f"{job.job_id} runs a QPU phase on {job.qpu} without holding it")
        job.ready_q.discard(nid)
        job.qpu_node = nid
        job.phase_started = t
        fresh = False
        if t >= to_ns(job.token.expires_at_s):
            # tokens live for one walltime; re-issue with a current calibration snapshot
            cal = self.registry.get(job.qpu).qpu.calibration
            job.token = QpuToken(
                f"{job.job_id}.t{job.token_count}", job.qpu, to_s(t), cal, to_s(t + job.wall_ns)
            )
            job.token_count += 1
            fresh = True
        snapshot_age = t - to_ns(job.token.calibration_snapshot.timestamp_s)
        issued_age = to_ns(job.token.issued_at_s) - to_ns(job.token.calibration_snapshot.timestamp_s)
        if issued_age > self.poll_ns:
            self._fail(f"token {job.token.token_id} issued with a stale calibration snapshot")
        self._emit(
            t,
            "qpu_phase_start",
            ("job", job.job_id),
            ("node", nid),
            ("resource", job.qpu),
            ("token", job.token.token_id),
            ("token_expires_ns", str(to_ns(job.token.expires_at_s))),
            ("token_new", str(int(fresh))),
            ("snapshot_age_ns", str(snapshot_age)),
            ("deps", ",".join(sorted(job.deps[nid]))),
        )
        self._push(t + job.dur[nid], ("phase_end", job.job_id, nid))

    def _complete_node(self, job: _Job, nid: str) -> None:
        job.done.add(nid)
        for s in job.succs[nid]:
            job.waiting[s] -= 1
            if job.waiting[s] == 0:
                self._mark_ready(job, s)

    def _task_end(self, t: int, job: _Job, nid: str) -> None:
        job.running_c.discard(nid)
        self._emit(t, "task_end", ("job", job.job_id), ("node", nid))
        self._complete_node(job, nid)
        self._idle_update(job, t)
        self._request_pass(t)
        self._dispatch(job, t)

    def _phase_end(self, t: int, job: _Job, nid: str) -> None:
        job.qpu_node = None
        start = t - job.dur[nid]
        self.acc.qpu_intervals.append((job.qpu, start, t))
        shots = job.shots[nid]
        job.row.shots += shots
        self._emit(t, "qpu_phase_end", ("job", job.job_id), ("node", nid), ("resource", job.qpu), ("shots", str(shots)))
        self._complete_node(job, nid)
        if job.mode == "interleaved" and not job.held:
            self._request_reacquire(job, t)
        self._request_pass(t)
        self._dispatch(job, t)

    def _finish_job(self, job: _Job, t: int) -> None:
        if job.held:
            self._idle_update(job, t)
            a = job.alloc
            free = self.free[a.resource_id]
            for i, x in enumerate((a.cores, a.gpus, a.memory_units)):
                free[i] += x
            job.held = False
            self.acc.alloc_intervals.append((a.resource_id, a.cores, job.held_since, t))
        self._idle_update(job, t)
        if job.qpu is not None:
            self.holder[job.qpu] = None
        state = "degraded" if job.decision.plan == "degraded" else "completed"
        job.row.end_ns, job.row.state = t, state
        self._emit(t, "job_end", ("job", job.job_id), ("state", state))
        self._request_pass(t)

    def _finalize(self, end: int) -> None:
        for job_id in sorted(self.jobs):
            job = self.jobs[job_id]
            if job.row.start_ns is None or job.row.end_ns is not None:
                continue
            if job.held:
                self.acc.alloc_intervals.append((job.alloc.resource_id, job.alloc.cores, job.held_since, end))
            if job.idle_since is not None:
                self.acc.idle_core_ns += job.alloc.cores * (end - job.idle_since)
            if job.qpu_node is not None:
                self.acc.qpu_intervals.append((job.qpu, job.phase_started, end))
        self.acc.sim_end_ns = end

    # -- invariants ----------------------------------------------------------

    def _check_invariants(self, t: int) -> None:
        for rid, free in self.free.items():
            cap = self.capacity[rid]
            for f, c in zip(free, cap):
                if f < 0 or f > c:
                    self._fail(f"capacity conservation violated on {rid} at {t}: free={free} cap={cap}")
        holders = [h for h in self.holder.values() if h is not None]
        if len(holders) != len(set(holders)):
            self._fail(f"a job holds more than one QPU at {t}")
        for rid, last in self.last_poll.items():
            if self.horizon_ns is not None or self._outstanding():
                if t - last > self.poll_ns:
                    self._fail(f"calibration of {rid} is stale at {t}")


def run(scenario) -> SimResult:
    return Simulator(scenario).run()
