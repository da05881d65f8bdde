"""Random scenario builders shared by the simulator and acceptance tests."""

from __future__ import annotations

import random

from qhpcsim._time import to_ns
from qhpcsim.dctg import TemplateConfig
from qhpcsim.hwd import (
    CONNECTIVITIES,
    FALLBACK_POLICIES,
    MODALITIES,
    ClassicalDescriptor,
    HybridWorkloadDescriptor,
    QuantumDescriptor,
)
from qhpcsim.registry import CalibrationProfile, DriftProcess, QpuProfile, ResourceRecord
from qhpcsim.scenario import Scenario
from qhpcsim.scheduler import PendingJob, Policy

SMALL_TEMPLATES = TemplateConfig(max_iterations=3, batch_size=3)


def qpu_profile(rng: random.Random, fidelity: float | None = None) -> QpuProfile:
    f = fidelity if fidelity is not None else rng.choice([0.97, 0.985, 0.992, 0.995, 0.999])
    return QpuProfile(
        modality=rng.choice(MODALITIES),
        qubit_count=rng.choice([8, 16, 27, 56, 127]),
        connectivity=rng.choice(CONNECTIVITIES),
        calibration=CalibrationProfile(f, rng.uniform(50, 500), 0.0, f),
    )


def random_records(rng: random.Random, n: int) -> tuple[ResourceRecord, ...]:
    # always one plain CPU node big enough for every generated job
    records = [ResourceRecord("cpu-00", "R1", "inter_node", cpu_cores=64, memory_gb=256.0)]
    for i in range(1, n):
        tier = rng.choice(["R1", "R2", "R3", "R4"])
        rid = f"res-{i:02d}"
        if tier == "R1":
            records.append(ResourceRecord(rid, tier, "inter_node", cpu_cores=rng.choice([16, 32, 64]), memory_gb=128.0))
        elif tier == "R2":
            records.append(
                ResourceRecord(rid, tier, "inter_node", cpu_cores=32, gpu_count=rng.choice([1, 2, 4]), memory_gb=256.0)
            )
        elif tier == "R3":
            records.append(ResourceRecord(rid, tier, "intra_node", cpu_cores=16, gpu_count=1, memory_gb=64.0, qpu=qpu_profile(rng)))
        else:
            records.append(ResourceRecord(rid, tier, "wan", qpu=qpu_profile(rng)))
    return tuple(records)


def random_job(rng: random.Random, i: int) -> PendingJob:
    classical = ClassicalDescriptor(
        cpu_cores=rng.choice([1, 2, 4, 8, 16, 32]),
        memory_gb=rng.choice([1.0, 4.0, 16.0, 64.0]),
        walltime_s=float(rng.choice([5, 20, 60, 300])),
        mpi_ranks=1,
    )
    quantum = None
    template = "classical_only"
    if rng.random() < 0.6:
        quantum = QuantumDescriptor(
            qubit_count=rng.choice([2, 4, 8, 20, 40]),
            connectivity=rng.choice(CONNECTIVITIES),
            modality_preference=tuple(rng.sample(MODALITIES, rng.randint(1, 2))) if rng.random() < 0.7 else ("best_available",),
            circuit_depth=rng.choice([5, 20, 80]),
            fallback_policy=rng.choice(FALLBACK_POLICIES),
            shot_budget=rng.choice([10, 100, 500]),
        )
        template = rng.choice(["vqe_loop", "batched_circuits"])
    mode = rng.choice(["auto", "auto", "simultaneous", "interleaved", "async_streaming"])
    d = HybridWorkloadDescriptor(f"job-{i:03d}", classical, quantum, mode, rng.randint(0, 2))
    return PendingJob(d, to_ns(rng.choice([0.0, 0.0, 1.5, 10.0, 30.0, 120.0])), template)


def random_scenario(seed: int, *, n_jobs: int | None = None, n_resources: int | None = None, horizon_s=None) -> Scenario:
    rng = random.Random(seed)
    n_res = n_resources if n_resources is not None else rng.randint(1, 10)
    jobs = n_jobs if n_jobs is not None else rng.randint(0, 50)
    records = random_records(rng, n_res)
    return Scenario(
        records=records,
        jobs=tuple(random_job(rng, i) for i in range(jobs)),
        drift=DriftProcess(rng_seed=seed, step_sigma=0.002),
        policy=Policy(backfill=rng.random() < 0.8, templates=SMALL_TEMPLATES),
        seed=seed,
        horizon_s=horizon_s,
        name=f"random-{seed}",
    )
