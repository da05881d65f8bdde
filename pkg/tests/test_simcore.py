import dataclasses

import pytest

from gen import SMALL_TEMPLATES, random_scenario
from qhpcsim._time import to_ns
from qhpcsim.hwd import ClassicalDescriptor, HybridWorkloadDescriptor, QuantumDescriptor
from qhpcsim.metrics import CausalityError, from_trace
from qhpcsim.midware import emulation_cost
from qhpcsim.registry import CalibrationProfile, DriftProcess, QpuProfile, ResourceRecord
from qhpcsim.scenario import Scenario, load_scenario
from qhpcsim.scheduler import PendingJob, Policy
from qhpcsim.simcore import SimulationInvariantError, run
from qhpcsim.trace import parse_trace, replay_check

CPU = ResourceRecord("cpu", "R1", "inter_node", cpu_cores=16, memory_gb=64.0)
GPU = ResourceRecord("gpu", "R2", "inter_node", cpu_cores=16, gpu_count=2, memory_gb=64.0)


def qnode(fidelity=0.999):
    cal = CalibrationProfile(fidelity, 100.0, 0.0, fidelity)
    return ResourceRecord("qn", "R3", "intra_node", cpu_cores=16, memory_gb=64.0,
                          qpu=QpuProfile("superconducting", 27, "all_to_all", cal))


def classical(jid, cores=16, wall=100.0, submit=0.0, priority=0):
    d = HybridWorkloadDescriptor(jid, ClassicalDescriptor(cores, 8.0, wall, 1), None, "auto", priority)
    return PendingJob(d, to_ns(submit), "classical_only")


def vqe(jid, shots=2000, mode="auto", fallback="queue_for_qpu", qubits=10, cores=8, wall=30.0, template="vqe_loop"):
    q = QuantumDescriptor(qubits, "linear", ("superconducting",), 40, fallback, shot_budget=shots)
    d = HybridWorkloadDescriptor(jid, ClassicalDescriptor(cores, 8.0, wall, 1), q, mode, 0)
    return PendingJob(d, 0, template)


def scenario(records, jobs, **kw):
    kw.setdefault("policy", Policy(templates=SMALL_TEMPLATES))
    return Scenario(tuple(records), tuple(jobs), DriftProcess(kw.pop("seed", 1), 0.002), **kw)


def kinds(trace_text):
    return [r.kind for r in parse_trace(trace_text).records]


def test_empty_run_polls_four_times():
    res = run(scenario([qnode()], [], horizon_s=3600.0))
    recs = parse_trace(res.trace).records
    assert [r.kind for r in recs] == ["sim_start"] + ["calib_poll"] * 4 + ["sim_end"]
    assert [r.time_ns for r in recs if r.kind == "calib_poll"] == [to_ns(900.0 * k) for k in range(1, 5)]


def test_single_classical_job_fills_resource():
    res = run(scenario([CPU], [classical("a")]))
    m = res.metrics
    assert m.makespan_s == 100.0
    assert m.utilization["R1"] == 1.0
    assert m.completed_job_count == 1 and m.mean_job_wait_s == 0.0


def test_double_run_is_byte_identical():
    sc = random_scenario(3, n_jobs=20, n_resources=6)
    assert run(sc).trace == run(sc).trace


def test_seed_change_diverges_at_first_poll():
    sc = scenario([qnode()], [], horizon_s=3600.0)
    a, b = run(sc.with_seed(1)).trace, run(sc.with_seed(2)).trace
    diff = replay_check(a, b)
    assert not diff
    assert diff.index == kinds(a).index("calib_poll")
    assert diff.field == "fidelity"


def test_replay_equal_to_itself():
    res = run(random_scenario(9))
    assert replay_check(res.trace, res.trace)


def test_report_recomputation_matches():
    for seed in range(10):
        res = run(random_scenario(seed))
        _, again = from_trace(res.trace)
        assert again == res.metrics


def phase_events(trace_text, job):
    recs = parse_trace(trace_text).records
    return [r for r in recs if r.get("job") == job]


def test_interleaved_releases_cores_around_phases():
    res = run(scenario([qnode()], [vqe("v", mode="interleaved")]))
    recs = phase_events(res.trace, "v")
    evs = [r.kind for r in recs]
    starts = evs.count("qpu_phase_start")
    assert starts == SMALL_TEMPLATES.max_iterations
    assert evs.count("cores_released") == starts
    assert evs.count("cores_reacquired") == starts
    latency = to_ns(Policy().sched_latency_s)
    for i, r in enumerate(recs):
        if r.kind == "qpu_phase_start":
            assert recs[i - 1].kind == "cores_released" and recs[i - 1].time_ns == r.time_ns
        if r.kind == "qpu_phase_end":
            back = next(x for x in recs[i:] if x.kind == "cores_reacquired")
            assert back.time_ns == r.time_ns + latency


def test_simultaneous_never_releases():
    res = run(scenario([qnode()], [vqe("v", mode="simultaneous")]))
    assert "cores_released" not in kinds(res.trace)


def test_interleaved_idles_less_than_simultaneous():
    sim = run(scenario([qnode()], [vqe("v", mode="simultaneous", shots=20000)])).metrics
    inter = run(scenario([qnode()], [vqe("v", mode="interleaved", shots=20000)])).metrics
    assert inter.cpu_idle_core_seconds <= sim.cpu_idle_core_seconds
    assert sim.cpu_idle_core_seconds > 0


def test_async_batches_complete():
    res = run(scenario([qnode()], [vqe("b", mode="auto", template="batched_circuits")]))
    assert res.jobs[0].state == "completed" and res.jobs[0].mode == "async_streaming"
    assert res.metrics.total_shots_executed >= 3 * 2000


def test_emulation_durations_are_exact():
    res = run(scenario([CPU, GPU], [vqe("e", fallback="emulate_on_gpu", shots=500)]))
    gpu_tasks = [r for r in parse_trace(res.trace).records if r.kind == "task_start" and r["kind"] == "GPU"]
    assert gpu_tasks
    for r in gpu_tasks:
        assert r["duration_s"] == repr(emulation_cost(10, 40, 500))
    assert res.metrics.fallback_counts["gpu_emulation"] == 1
    assert res.jobs[0].state == "completed"


def test_degraded_and_queued_fallbacks():
    res = run(scenario([CPU], [vqe("d", fallback="fail_degraded"), vqe("q", fallback="queue_for_qpu")]))
    m = res.metrics
    assert m.degraded_job_count == 1
    assert m.fallback_counts["queued"] == 1 and m.pending_job_count == 1
    assert {r.job_id: r.state for r in res.jobs} == {"d": "degraded", "q": "pending"}


def test_horizon_truncates_running_jobs():
    res = run(scenario([CPU], [classical("a", wall=500.0)], horizon_s=100.0))
    assert res.metrics.running_job_count == 1
    assert parse_trace(res.trace).records[-1].time_ns == to_ns(100.0)


def test_deleted_task_end_is_a_causality_error():
    text = run(scenario([qnode()], [vqe("v", mode="interleaved")])).trace
    lines = text.splitlines(keepends=True)
    i = next(k for k, line in enumerate(lines) if "\ttask_end\t" in line)
    with pytest.raises(CausalityError):
        from_trace("".join(lines[:i] + lines[i + 1:]))


def test_safety_valve():
    sc = dataclasses.replace(random_scenario(4, n_jobs=20), max_events=10)
    with pytest.raises(SimulationInvariantError):
        run(sc)


def test_priority_order_on_shared_node():
    res = run(scenario([CPU], [classical("low", priority=0, submit=1.0), classical("high", priority=5, submit=1.0)]))
    rows = {r.job_id: r for r in res.jobs}
    assert rows["high"].start_ns < rows["low"].start_ns


def test_bundled_scenarios_run():
    for name in ("demo", "vqe_vs_modes"):
        res = run(load_scenario(name))
        assert res.metrics.pending_job_count == 0 or res.metrics.horizon_s > 0
        assert from_trace(res.trace)[1] == res.metrics


@pytest.mark.parametrize("seed", range(40))
def test_random_scenarios_hold_invariants(seed):
    res = run(random_scenario(seed, horizon_s=None if seed % 3 else 200.0))
    m = res.metrics
    assert all(0.0 <= u <= 1.0 for u in m.utilization.values())
    assert 0.0 <= m.qpu_idle_fraction <= 1.0
    assert m.completed_job_count + m.degraded_job_count + m.pending_job_count + m.running_job_count == m.job_count
