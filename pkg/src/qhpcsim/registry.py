"""Unified resource registry: tiered inventory plus drifting QPU calibration.

Tiers:
    R1  CPU-only nodes
    R2  CPU + GPU nodes
    R3  co-located CPU/GPU/QPU (intra-node link to the QPU)
    R4  remote or cloud QPUs (WAN link)

Calibration drift is a Gaussian random walk on two-qubit fidelity, clamped to
``[floor, 1]`` and reset to the nominal value whenever a recalibration
boundary (a multiple of ``recalibration_period_s``) is crossed.  Each QPU owns
an independent generator derived from the scenario seed and its resource id,
so trajectories depend only on (seed, resource id, poll sequence).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Iterable

from .connectivity import satisfiable
from .hwd import CONNECTIVITIES, MODALITIES

__all__ = [
    "CalibrationProfile",
    "DriftProcess",
    "QpuProfile",
    "QueryPredicate",
    "Registry",
    "RegistryError",
    "ResourceRecord",
    "StaleClockError",
    "TIERS",
]

TIERS = ("R1", "R2", "R3", "R4")
ACCESS_CLASSES = ("intra_node", "inter_node", "wan")


class RegistryError(ValueError):
    pass


class StaleClockError(RegistryError):
    pass


@dataclass(frozen=True)
class CalibrationProfile:
    two_qubit_fidelity: float
    coherence_time_us: float
    timestamp_s: float
    nominal_fidelity: float


@dataclass(frozen=True)
class QpuProfile:
    modality: str
    qubit_count: int
    connectivity: str
    calibration: CalibrationProfile


@dataclass(frozen=True)
class ResourceRecord:
    resource_id: str
    tier: str
    access_latency_class: str
    cpu_cores: int = 0
    gpu_count: int = 0
    memory_gb: float = 0.0
    qpu: QpuProfile | None = None

    def check(self) -> "ResourceRecord":
        rid = self.resource_id
        if not rid or any(ch.isspace() or ch in "=," for ch in rid):
            raise RegistryError(f"invalid resource_id {rid!r}")
        if self.tier not in TIERS:
            raise RegistryError(f"{rid}: unknown tier {self.tier!r}")
        if self.access_latency_class not in ACCESS_CLASSES:
            raise RegistryError(f"{rid}: unknown access class {self.access_latency_class!r}")
        if self.cpu_cores < 0 or self.gpu_count < 0 or self.memory_gb < 0:
            raise RegistryError(f"{rid}: capacities must be >= 0")
        if self.tier == "R1" and (self.gpu_count != 0 or self.qpu is not None):
            raise RegistryError(f"{rid}: R1 records have no GPU and no QPU")
        if self.tier == "R2" and (self.gpu_count < 1 or self.qpu is not None):
            raise RegistryError(f"{rid}: R2 records have at least one GPU and no QPU")
        if self.tier == "R3" and (self.qpu is None or self.access_latency_class != "intra_node"):
            raise RegistryError(f"{rid}: R3 records carry a QPU on an intra_node link")
        if self.tier == "R4" and (self.qpu is None or self.access_latency_class != "wan"):
            raise RegistryError(f"{rid}: R4 records carry a QPU on a wan link")
        if self.qpu is not None:
            q = self.qpu
            if q.modality not in MODALITIES:
                raise RegistryError(f"{rid}: unknown modality {q.modality!r}")
            if q.connectivity not in CONNECTIVITIES:
                raise RegistryError(f"{rid}: unknown connectivity {q.connectivity!r}")
            if q.qubit_count < 1:
                raise RegistryError(f"{rid}: qubit_count must be >= 1")
            cal = q.calibration
            if not 0 < cal.two_qubit_fidelity <= 1 or not 0 < cal.nominal_fidelity <= 1:
                raise RegistryError(f"{rid}: fidelities must lie in (0, 1]")
            if not cal.coherence_time_us > 0:
                raise RegistryError(f"{rid}: coherence_time_us must be > 0")
        return self

    @property
    def has_qpu(self) -> bool:
        return self.qpu is not None


@dataclass(frozen=True)
class DriftProcess:
    rng_seed: int = 0
    step_sigma: float = 0.0
    recalibration_period_s: float = 86400.0
    poll_period_s: float = 900.0
    floor: float = 0.5

    def __post_init__(self):
        if self.step_sigma < 0:
            raise RegistryError("step_sigma must be >= 0")
        if not self.recalibration_period_s > 0 or not self.poll_period_s > 0:
            raise RegistryError("recalibration and poll periods must be > 0")
        if not 0 < self.floor <= 1:
            raise RegistryError("fidelity floor must lie in (0, 1]")

    def generator(self, resource_id: str) -> random.Random:
        return random.Random(f"{self.rng_seed}:{resource_id}")


@dataclass(frozen=True)
class QueryPredicate:
    min_qubits: int = 0
    connectivity: str | None = None
    modalities: tuple[str, ...] | None = None
    tier_set: frozenset[str] | None = None

    def matches(self, r: ResourceRecord) -> bool:
        if self.tier_set is not None and r.tier not in self.tier_set:
            return False
        needs_qpu = self.min_qubits > 0 or self.connectivity is not None or self.modalities is not None
        if r.qpu is None:
            return not needs_qpu
        if r.qpu.qubit_count < self.min_qubits:
            return False
        if self.connectivity is not None and not satisfiable(self.connectivity, r.qpu.connectivity):
            return False
        if self.modalities is not None and "best_available" not in self.modalities:
            if r.qpu.modality not in self.modalities:
                return False
        return True


def _crossed_boundary(prev_s: float, now_s: float, period_s: float) -> bool:
    return math.floor(now_s / period_s) > math.floor(prev_s / period_s)


@dataclass
class Registry:
    """Resource inventory; the simulator's event loop is its only writer."""

    records: dict[str, ResourceRecord] = field(default_factory=dict)
    drift: DriftProcess = field(default_factory=DriftProcess)
    _rngs: dict[str, random.Random] = field(default_factory=dict, repr=False)

    @classmethod
    def from_records(cls, records: Iterable[ResourceRecord], drift: DriftProcess | None = None) -> "Registry":
        reg = cls(drift=drift or DriftProcess())
        for r in records:
            reg.add(r)
        return reg

    def add(self, record: ResourceRecord) -> None:
        record.check()
        if record.resource_id in self.records:
            raise RegistryError(f"duplicate resource_id {record.resource_id!r}")
        self.records[record.resource_id] = record
        if record.qpu is not None:
            self._rngs[record.resource_id] = self.drift.generator(record.resource_id)

    def __len__(self) -> int:
        return len(self.records)

    def get(self, resource_id: str) -> ResourceRecord:
        return self.records[resource_id]

    def all(self) -> list[ResourceRecord]:
        return [self.records[k] for k in sorted(self.records)]

    def qpus(self) -> list[ResourceRecord]:
        return [r for r in self.all() if r.qpu is not None]

    def query(self, predicate: QueryPredicate | None = None) -> list[ResourceRecord]:
        predicate = predicate or QueryPredicate()
        return [r for r in self.all() if predicate.matches(r)]

    def poll(self, resource_id: str, now_s: float) -> CalibrationProfile:
        """Advance one QPU's calibration to ``now_s`` and return the new profile."""
        record = self.records[resource_id]
        if record.qpu is None:
            raise RegistryError(f"{resource_id} has no QPU to poll")
        cal = record.qpu.calibration
        if now_s < cal.timestamp_s:
            raise StaleClockError(f"{resource_id}: poll at {now_s} precedes last poll at {cal.timestamp_s}")
        d = self.drift
        fidelity = cal.two_qubit_fidelity
        if _crossed_boundary(cal.timestamp_s, now_s, d.recalibration_period_s):
            fidelity = cal.nominal_fidelity
        # always draw, so the stream position depends only on the poll count
        step = self._rngs[resource_id].gauss(0.0, 1.0) * d.step_sigma
        fidelity = min(1.0, max(d.floor, fidelity + step))
        new_cal = replace(cal, two_qubit_fidelity=fidelity, timestamp_s=now_s)
        self.records[resource_id] = replace(record, qpu=replace(record.qpu, calibration=new_cal)).check()
        return new_cal

    def recalibration_due(self, resource_id: str, now_s: float) -> bool:
        cal = self.records[resource_id].qpu.calibration
        return _crossed_boundary(cal.timestamp_s, now_s, self.drift.recalibration_period_s)

    def snapshot_text(self) -> str:
        """Line-oriented dump of every record, for golden comparisons."""
        lines = []
        for r in self.all():
            parts = [
                f"resource {r.resource_id}",
                f"tier={r.tier}",
                f"access={r.access_latency_class}",
                f"cpu_cores={r.cpu_cores}",
                f"gpu_count={r.gpu_count}",
                f"memory_gb={r.memory_gb!r}",
            ]
            if r.qpu is not None:
                q, c = r.qpu, r.qpu.calibration
                parts += [
                    f"modality={q.modality}",
                    f"qubits={q.qubit_count}",
                    f"connectivity={q.connectivity}",
                    f"fidelity={c.two_qubit_fidelity!r}",
                    f"nominal={c.nominal_fidelity!r}",
                    f"coherence_us={c.coherence_time_us!r}",
                    f"timestamp_s={c.timestamp_s!r}",
                ]
            lines.append(" ".join(parts))
        return "\n".join(lines) + ("\n" if lines else "")
