"""Quantum-aware scheduling policy.

Three layers:

* QPU selection by Quantum Suitability Score (QSS): a convex combination of
  calibrated fidelity, connectivity compatibility, expected queue wait and
  access latency, with hard cuts for qubit count and connectivity.  The job's
  modality preference list is a strict tiering applied before the score.
* Classical placement in fair-share order (priority, then submit time) with
  conservative backfill: every job that cannot start gets a reservation in a
  resource profile, and a later job may start now only if it fits without
  overlapping any earlier reservation.
* Co-scheduling mode assignment and the QPU-scarcity fallback.

``schedule_step`` is a pure function of its inputs; the simulator applies the
decisions it returns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import kernels
from ._time import duration_ns, to_ns, to_s
from .connectivity import satisfiable
from .dctg import TaskGraph, TemplateConfig, build_graph, classify_paths
from .fabric import FabricConfig, QrtpPayload, feedback_rtt, qpu_exec_time
from .hwd import HybridWorkloadDescriptor, QuantumDescriptor
from .midware import CompilationEstimate, MidwareConfig, compile_estimate
from .registry import CalibrationProfile, Registry, ResourceRecord

__all__ = [
    "Allocation",
    "ClusterState",
    "NoFeasibleQpu",
    "NoQpuError",
    "PendingJob",
    "Policy",
    "QpuToken",
    "QssBreakdown",
    "QssNorms",
    "QssWeights",
    "ScheduleDecision",
    "choose_fallback",
    "mem_units",
    "plan_job",
    "qss",
    "rank_qpus",
    "schedule_step",
    "select_qpu",
]

MODES = ("simultaneous", "interleaved", "async_streaming")
FALLBACK_ACTIONS = ("none", "gpu_emulation", "queued", "degraded_notice")


class NoQpuError(ValueError):
    pass


class NoFeasibleQpu(LookupError):
    pass


@dataclass(frozen=True)
class QssWeights:
    fidelity: float = 0.4
    connectivity: float = 0.2
    queue: float = 0.2
    latency: float = 0.2

    def __post_init__(self):
        values = self.as_tuple()
        if any(w < 0 or not math.isfinite(w) for w in values):
            raise ValueError("QSS weights must be finite and >= 0")
        if abs(sum(values) - 1.0) > 1e-9:
            raise ValueError(f"QSS weights must sum to 1, got {sum(values)!r}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.fidelity, self.connectivity, self.queue, self.latency)

    @classmethod
    def normalized(cls, raw) -> "QssWeights":
        raw = [float(w) for w in raw]
        total = sum(raw)
        if len(raw) != 4 or total <= 0:
            raise ValueError("need four non-negative weights with a positive sum")
        return cls(*(w / total for w in raw))


@dataclass(frozen=True)
class QssNorms:
    max_wait_s: float = 900.0
    max_latency_s: float = 0.1

    def __post_init__(self):
        if not self.max_wait_s > 0 or not self.max_latency_s > 0:
            raise ValueError("QSS normalization constants must be > 0")


@dataclass(frozen=True)
class QssBreakdown:
    fidelity_term: float
    connectivity_term: float
    queue_term: float
    latency_term: float
    total: float
    feasible: bool


@dataclass(frozen=True)
class QpuToken:
    token_id: str
    resource_id: str
    issued_at_s: float
    calibration_snapshot: CalibrationProfile
    expires_at_s: float


@dataclass(frozen=True)
class Allocation:
    resource_id: str
    cores: int
    gpus: int
    memory_units: int  # MiB


@dataclass(frozen=True)
class ScheduleDecision:
    job_id: str
    mode: str
    classical_allocation: Allocation | None
    qpu_token: QpuToken | None
    start_time_s: float | None  # None: the job stays pending
    fallback_taken: str = "none"
    plan: str = "classical"  # classical | qpu | emulated | degraded | queued
    qss: QssBreakdown | None = None
    compilation: CompilationEstimate | None = None
    phase_s: float | None = None


@dataclass(frozen=True)
class PendingJob:
    descriptor: HybridWorkloadDescriptor
    submit_ns: int
    template: str
    graph: "TaskGraph | None" = None  # explicit graph overrides the template

    def task_graph(self, config: TemplateConfig | None = None) -> "TaskGraph":
        if self.graph is not None:
            return self.graph
        return build_graph(self.descriptor, self.template, config)

    @property
    def job_id(self) -> str:
        return self.descriptor.job_id

    def order_key(self):
        return (-self.descriptor.priority, self.submit_ns, self.descriptor.job_id)


@dataclass
class ClusterState:
    """What the scheduler sees of the running cluster at one instant.

    ``busy`` holds, per classical resource, the estimated occupancy intervals
    ``(start_ns, end_ns, (cores, gpus, mem))`` of running jobs.  ``qpu_busy``
    does the same for QPU holders.  ``free`` is the capacity idle right now.
    """

    capacity: dict[str, tuple[int, int, int]] = field(default_factory=dict)
    free: dict[str, tuple[int, int, int]] = field(default_factory=dict)
    busy: dict[str, list] = field(default_factory=dict)
    qpu_busy: dict[str, list] = field(default_factory=dict)
    qpu_holder: dict[str, str | None] = field(default_factory=dict)

    @classmethod
    def idle(cls, registry: Registry) -> "ClusterState":
        state = cls()
        for r in registry.all():
            if r.cpu_cores > 0:
                cap = (r.cpu_cores, r.gpu_count, capacity_units(r.memory_gb))
                state.capacity[r.resource_id] = cap
                state.free[r.resource_id] = cap
                state.busy[r.resource_id] = []
            if r.qpu is not None:
                state.qpu_busy[r.resource_id] = []
                state.qpu_holder[r.resource_id] = None
        return state


@dataclass(frozen=True)
class Policy:
    weights: QssWeights = field(default_factory=QssWeights)
    norms: QssNorms = field(default_factory=QssNorms)
    interleave_threshold_s: float = 1.0
    backfill: bool = True
    mode_override: str | None = None
    sched_latency_s: float = 0.01
    templates: TemplateConfig = field(default_factory=TemplateConfig)
    fabric: FabricConfig = field(default_factory=FabricConfig)
    midware: MidwareConfig = field(default_factory=MidwareConfig)

    def __post_init__(self):
        if self.mode_override is not None and self.mode_override not in MODES:
            raise ValueError(f"unknown mode {self.mode_override!r}")
        if self.interleave_threshold_s < 0 or self.sched_latency_s < 0:
            raise ValueError("thresholds and latencies must be >= 0")

    def header_items(self) -> list[tuple[str, str]]:
        w = self.weights
        items = [
            ("qss.weights", ",".join(repr(x) for x in w.as_tuple())),
            ("qss.max_wait_s", repr(self.norms.max_wait_s)),
            ("qss.max_latency_s", repr(self.norms.max_latency_s)),
            ("interleave_threshold_s", repr(self.interleave_threshold_s)),
            ("backfill", str(int(self.backfill))),
            ("mode_override", self.mode_override or "none"),
            ("sched_latency_s", repr(self.sched_latency_s)),
        ]
        items += [(f"template.{k}", repr(v)) for k, v in vars(self.templates).items()]
        return items + self.fabric.header_items() + self.midware.header_items()


def mem_units(gb: float) -> int:
    return math.ceil(gb * 1024)


def capacity_units(gb: float) -> int:
    return math.floor(gb * 1024)


# ---------------------------------------------------------------------------
# QPU selection
# ---------------------------------------------------------------------------


def access_rtt(record: ResourceRecord, fabric: FabricConfig | None = None) -> float:
    fabric = fabric or FabricConfig()
    return fabric.links[record.access_latency_class].rtt_s


def qss(
    candidate: ResourceRecord,
    demand: QuantumDescriptor,
    queue_wait_s: float,
    weights: QssWeights | None = None,
    norms: QssNorms | None = None,
    fabric: FabricConfig | None = None,
) -> QssBreakdown:
    if candidate.qpu is None:
        raise NoQpuError(f"{candidate.resource_id} has no QPU")
    weights = weights or QssWeights()
    norms = norms or QssNorms()
    q = candidate.qpu
    fidelity = q.calibration.two_qubit_fidelity
    connectivity = 1.0 if satisfiable(demand.connectivity, q.connectivity) else 0.0
    queue = 1.0 - min(queue_wait_s / norms.max_wait_s, 1.0)
    latency = 1.0 - min(access_rtt(candidate, fabric) / norms.max_latency_s, 1.0)
    feasible = q.qubit_count >= demand.qubit_count and connectivity > 0
    total = (
        weights.fidelity * fidelity
        + weights.connectivity * connectivity
        + weights.queue * queue
        + weights.latency * latency
    )
    return QssBreakdown(fidelity, connectivity, queue, latency, total if feasible else 0.0, feasible)


def _modality_tier(modality: str, preference: tuple[str, ...]) -> int | None:
    for i, pref in enumerate(preference):
        if pref == modality or pref == "best_available":
            return i
    return None


def rank_qpus(
    registry: Registry,
    demand: QuantumDescriptor,
    weights: QssWeights | None = None,
    norms: QssNorms | None = None,
    queue_waits: dict[str, float] | None = None,
    fabric: FabricConfig | None = None,
) -> list[tuple[ResourceRecord, QssBreakdown]]:
    """Every candidate QPU in selection order; infeasible candidates last."""
    queue_waits = queue_waits or {}
    scored = []
    for r in registry.all():
        if r.qpu is None or r.tier not in ("R3", "R4"):
            continue
        tier = _modality_tier(r.qpu.modality, demand.modality_preference)
        if tier is None:
            continue
        b = qss(r, demand, queue_waits.get(r.resource_id, 0.0), weights, norms, fabric)
        scored.append(((0, tier, -b.total, r.resource_id) if b.feasible else (1, tier, 0.0, r.resource_id), r, b))
    scored.sort(key=lambda item: item[0])
    return [(r, b) for _, r, b in scored]


def select_qpu(
    registry: Registry,
    demand: QuantumDescriptor,
    weights: QssWeights | None = None,
    now_s: float = 0.0,
    *,
    norms: QssNorms | None = None,
    queue_waits: dict[str, float] | None = None,
    fabric: FabricConfig | None = None,
) -> tuple[ResourceRecord, QssBreakdown]:
    """Best QPU for ``demand``: first modality tier with a feasible device, then max QSS."""
    ranked = rank_qpus(registry, demand, weights, norms, queue_waits, fabric)
    if not ranked or not ranked[0][1].feasible:
        raise NoFeasibleQpu(f"no feasible QPU for {demand.qubit_count}-qubit {demand.connectivity} circuit")
    return ranked[0]


def choose_fallback(demand: QuantumDescriptor, registry: Registry, midware: MidwareConfig | None = None) -> str:
    """Action taken when no QPU can host ``demand``."""
    midware = midware or MidwareConfig()
    policy = demand.fallback_policy
    if policy == "emulate_on_gpu":
        has_gpu_node = any(r.tier == "R2" and r.gpu_count >= 1 for r in registry.all())
        if has_gpu_node and demand.qubit_count <= midware.emulation_qubit_cap:
            return "gpu_emulation"
        return "queued"
    if policy == "queue_for_qpu":
        return "queued"
    return "degraded_notice"


# ---------------------------------------------------------------------------
# Job planning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JobPlan:
    kind: str  # classical | qpu | emulated | degraded | queued
    demand: tuple[int, int, int]
    duration_ns: int
    eligible_tiers: tuple[str, ...]
    mode: str = "simultaneous"
    qpu: ResourceRecord | None = None
    breakdown: QssBreakdown | None = None
    compilation: CompilationEstimate | None = None
    phase_s: float | None = None
    fallback: str = "none"


def quantum_phase_s(demand: QuantumDescriptor, record: ResourceRecord, est: CompilationEstimate, fabric) -> float:
    shots = est.effective_shots(demand.shots)
    return qpu_exec_time(shots, est.optimized_depth, record.qpu.modality, fabric) + feedback_rtt(
        record.tier, QrtpPayload(shots, demand.qubit_count), fabric
    )


def choose_mode(job: PendingJob, phase_s: float, policy: Policy) -> str:
    if policy.mode_override is not None:
        return policy.mode_override
    hint = job.descriptor.mode_hint
    if hint != "auto":
        return hint
    paths = classify_paths(job.task_graph(policy.templates))
    if paths.latency_critical_chains:
        return "simultaneous" if phase_s < policy.interleave_threshold_s else "interleaved"
    if paths.latency_tolerant_batches:
        return "async_streaming"
    return "simultaneous"


def _queue_waits(state: ClusterState, now_ns: int) -> dict[str, float]:
    waits = {}
    for rid, intervals in state.qpu_busy.items():
        last = max((end for _, end, _ in intervals), default=now_ns)
        waits[rid] = to_s(max(0, last - now_ns))
    return waits


def plan_job(job: PendingJob, registry: Registry, state: ClusterState, now_ns: int, policy: Policy) -> JobPlan:
    d = job.descriptor
    c = d.classical
    demand = (c.cpu_cores, c.gpu_count, mem_units(c.memory_gb))
    duration = duration_ns(c.walltime_s)
    classical_tiers = ("R1", "R2", "R3", "R4")
    if d.quantum is None:
        return JobPlan("classical", demand, duration, classical_tiers)
    q = d.quantum
    try:
        record, breakdown = select_qpu(
            registry,
            q,
            policy.weights,
            to_s(now_ns),
            norms=policy.norms,
            queue_waits=_queue_waits(state, now_ns),
            fabric=policy.fabric,
        )
    except NoFeasibleQpu:
        action = choose_fallback(q, registry, policy.midware)
        if action == "gpu_emulation":
            return JobPlan(
                "emulated", (c.cpu_cores, max(1, c.gpu_count), demand[2]), duration, ("R2",), fallback=action
            )
        if action == "degraded_notice":
            return JobPlan("degraded", demand, duration, classical_tiers, fallback=action)
        return JobPlan("queued", demand, duration, (), fallback=action)
    est = compile_estimate(q, record.qpu, policy.midware)
    phase = quantum_phase_s(q, record, est, policy.fabric)
    mode = choose_mode(job, phase, policy)
    return JobPlan("qpu", demand, duration, classical_tiers, mode, record, breakdown, est, phase)


# ---------------------------------------------------------------------------
# One scheduling pass
# ---------------------------------------------------------------------------


def _fits(free, demand) -> bool:
    return all(f >= x for f, x in zip(free, demand))


def _joint_earliest(state, busy, qbusy, rid, qrid, demand, duration, now_ns) -> int:
    s = now_ns
    while True:
        s1 = kernels.earliest_fit(busy[rid], state.capacity[rid], demand, s, duration)
        if s1 < 0 or qrid is None:
            return s1
        s2 = kernels.earliest_fit([(a, b, (1,)) for a, b, _ in qbusy[qrid]], (1,), (1,), s1, duration)
        if s2 == s1:
            return s1
        s = s2


def schedule_step(
    pending_jobs,
    registry: Registry,
    cluster_state: ClusterState,
    now_s: float,
    policy: Policy | None = None,
) -> list[ScheduleDecision]:
    """Decide which pending jobs start at ``now_s``.

    Returns one decision per started job plus a non-starting decision for each
    job whose fallback leaves it queued.  Jobs not mentioned stay pending.
    """
    policy = policy or Policy()
    now = to_ns(now_s)
    state = cluster_state
    busy = {rid: list(v) for rid, v in state.busy.items()}
    qbusy = {rid: list(v) for rid, v in state.qpu_busy.items()}
    free = dict(state.free)
    decisions: list[ScheduleDecision] = []

    for job in sorted(pending_jobs, key=PendingJob.order_key):
        view = ClusterState(state.capacity, free, busy, qbusy, state.qpu_holder)
        plan = plan_job(job, registry, view, now, policy)
        if plan.kind == "queued":
            decisions.append(
                ScheduleDecision(job.job_id, "simultaneous", None, None, None, plan.fallback, plan="queued")
            )
            continue
        qrid = plan.qpu.resource_id if plan.qpu is not None else None
        best = None
        for rid in sorted(state.capacity):
            if registry.get(rid).tier not in plan.eligible_tiers:
                continue
            s = _joint_earliest(state, busy, qbusy, rid, qrid, plan.demand, plan.duration_ns, now)
            if s >= 0 and (best is None or s < best[0]):
                best = (s, rid)
        if best is None:
            continue  # can never fit this cluster
        start, rid = best
        interval = (start, start + plan.duration_ns, plan.demand)
        runnable = (
            start == now
            and _fits(free[rid], plan.demand)
            and (qrid is None or state.qpu_holder.get(qrid) is None)
        )
        if runnable:
            free[rid] = tuple(f - x for f, x in zip(free[rid], plan.demand))
            busy[rid].append(interval)
            token = None
            if qrid is not None:
                qbusy[qrid].append((start, start + plan.duration_ns, (1,)))
                token = QpuToken(
                    token_id=f"{job.job_id}.t0",
                    resource_id=qrid,
                    issued_at_s=to_s(now),
                    calibration_snapshot=plan.qpu.qpu.calibration,
                    expires_at_s=to_s(now + plan.duration_ns),
                )
            decisions.append(
                ScheduleDecision(
                    job.job_id,
                    plan.mode,
                    Allocation(rid, *plan.demand),
                    token,
                    to_s(now),
                    plan.fallback,
                    plan=plan.kind,
                    qss=plan.breakdown,
                    compilation=plan.compilation,
                    phase_s=plan.phase_s,
                )
            )
            continue
        if not policy.backfill:
            break
        # reserve, so later jobs cannot push this one back
        busy[rid].append(interval)
        if qrid is not None:
            qbusy[qrid].append((start, start + plan.duration_ns, (1,)))
    return decisions
