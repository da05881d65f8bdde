"""Scenario files: registry, drift, policy, cost-model overrides and jobs.

Scenarios are YAML documents.  Job descriptors are embedded as literal
blocks (``hwd: |``) or referenced by path (``hwd_file:``, relative to the
scenario file) and always go through the descriptor parser, so the same
diagnostics apply whichever way a job arrives.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ._time import to_ns
from .dctg import TEMPLATES, GraphError, TemplateConfig, TemplateError, build_graph, graph_from_text
from .fabric import DEFAULT_GATE_TIMES, LINK_NAMES, FabricConfig, LinkClass, default_links
from .hwd import HwdError, check_unique_ids, parse_hwd
from .midware import MidwareConfig
from .registry import CalibrationProfile, DriftProcess, QpuProfile, RegistryError, ResourceRecord
from .scheduler import MODES, PendingJob, Policy, QssNorms, QssWeights, capacity_units, mem_units

__all__ = ["Scenario", "ScenarioError", "load_scenario", "parse_scenario", "bundled_scenario_path"]

DEFAULT_MAX_EVENTS = 5_000_000
BUNDLED_DIR = Path(__file__).parent / "scenarios"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    records: tuple[ResourceRecord, ...]
    jobs: tuple[PendingJob, ...]
    drift: DriftProcess = field(default_factory=DriftProcess)
    policy: Policy = field(default_factory=Policy)
    seed: int = 0
    horizon_s: float | None = None
    max_events: int = DEFAULT_MAX_EVENTS
    name: str = "scenario"

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, seed=seed, drift=dataclasses.replace(self.drift, rng_seed=seed))

    def with_horizon(self, horizon_s: float | None) -> "Scenario":
        return dataclasses.replace(self, horizon_s=horizon_s)

    def with_policy(self, **changes) -> "Scenario":
        return dataclasses.replace(self, policy=dataclasses.replace(self.policy, **changes))


def bundled_scenario_path(name: str) -> Path | None:
    path = BUNDLED_DIR / f"{name}.yaml"
    return path if path.is_file() else None


# ---------------------------------------------------------------------------
# block readers
# ---------------------------------------------------------------------------


def _mapping(value: Any, where: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ScenarioError(f"{where}: expected a mapping")
    return value


def _keys(block: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {unknown}")


def _number(block: dict, key: str, where: str, default=None, *, integer=False):
    if key not in block:
        if default is None:
            raise ScenarioError(f"{where}: missing {key}")
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}.{key}: expected a number")
    if integer:
        if not isinstance(value, int):
            raise ScenarioError(f"{where}.{key}: expected an integer")
        return value
    return float(value)


def _resource(entry: Any, index: int) -> ResourceRecord:
    where = f"registry[{index}]"
    entry = _mapping(entry, where)
    _keys(entry, {"id", "tier", "access", "cores", "gpus", "memory_gb", "qpu"}, where)
    qpu = None
    if "qpu" in entry:
        q = _mapping(entry["qpu"], f"{where}.qpu")
        _keys(q, {"modality", "qubits", "connectivity", "fidelity", "nominal_fidelity", "coherence_us", "timestamp_s"}, f"{where}.qpu")
        fidelity = _number(q, "fidelity", f"{where}.qpu")
        cal = CalibrationProfile(
            two_qubit_fidelity=fidelity,
            coherence_time_us=_number(q, "coherence_us", f"{where}.qpu", 100.0),
            timestamp_s=_number(q, "timestamp_s", f"{where}.qpu", 0.0),
            nominal_fidelity=_number(q, "nominal_fidelity", f"{where}.qpu", fidelity),
        )
        qpu = QpuProfile(
            modality=str(q.get("modality", "")),
            qubit_count=_number(q, "qubits", f"{where}.qpu", integer=True),
            connectivity=str(q.get("connectivity", "")),
            calibration=cal,
        )
    tier = str(entry.get("tier", ""))
    default_access = {"R3": "intra_node", "R4": "wan"}.get(tier, "inter_node")
    record = ResourceRecord(
        resource_id=str(entry.get("id", "")),
        tier=tier,
        access_latency_class=str(entry.get("access", default_access)),
        cpu_cores=_number(entry, "cores", where, 0, integer=True),
        gpu_count=_number(entry, "gpus", where, 0, integer=True),
        memory_gb=_number(entry, "memory_gb", where, 0.0),
        qpu=qpu,
    )
    try:
        return record.check()
    except RegistryError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _drift(block: Any, seed: int) -> DriftProcess:
    block = _mapping(block, "drift")
    names = {f.name for f in dataclasses.fields(DriftProcess)} - {"rng_seed"}
    _keys(block, names, "drift")
    try:
        return DriftProcess(rng_seed=seed, **{k: float(v) for k, v in block.items()})
    except (RegistryError, TypeError, ValueError) as exc:
        raise ScenarioError(f"drift: {exc}") from None


def _dataclass_block(cls, block: Any, where: str):
    block = _mapping(block, where)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    _keys(block, set(fields), where)
    defaults = cls()
    values = {}
    for k, v in block.items():
        current = getattr(defaults, k)
        if isinstance(current, bool) or isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioError(f"{where}.{k}: expected a number")
        values[k] = int(v) if isinstance(current, int) else float(v)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _fabric(block: Any) -> FabricConfig:
    block = _mapping(block, "fabric")
    _keys(block, {"links", "gate_times", "per_shot_overhead_s"}, "fabric")
    links = default_links()
    for name, spec in _mapping(block.get("links"), "fabric.links").items():
        if name not in LINK_NAMES:
            raise ScenarioError(f"fabric.links: unknown link class {name!r}")
        spec = _mapping(spec, f"fabric.links.{name}")
        _keys(spec, {"rtt_s", "bandwidth_bytes_per_s"}, f"fabric.links.{name}")
        base = links[name]
        try:
            links[name] = LinkClass(
                name,
                _number(spec, "rtt_s", f"fabric.links.{name}", base.rtt_s),
                _number(spec, "bandwidth_bytes_per_s", f"fabric.links.{name}", base.bandwidth_bytes_per_s),
            )
        except ValueError as exc:
            raise ScenarioError(f"fabric.links.{name}: {exc}") from None
    gate_times = dict(DEFAULT_GATE_TIMES)
    for modality, value in _mapping(block.get("gate_times"), "fabric.gate_times").items():
        if modality not in DEFAULT_GATE_TIMES:
            raise ScenarioError(f"fabric.gate_times: unknown modality {modality!r}")
        gate_times[modality] = _number({"v": value}, "v", f"fabric.gate_times.{modality}")
    try:
        return FabricConfig(
            links, gate_times, _number(block, "per_shot_overhead_s", "fabric", FabricConfig().per_shot_overhead_s)
        )
    except ValueError as exc:
        raise ScenarioError(f"fabric: {exc}") from None


def _policy(block: Any, templates: TemplateConfig, fabric: FabricConfig, midware: MidwareConfig) -> Policy:
    block = _mapping(block, "policy")
    _keys(
        block,
        {"weights", "max_wait_s", "max_latency_s", "interleave_threshold_s", "backfill", "mode", "sched_latency_s"},
        "policy",
    )
    try:
        weights = QssWeights()
        if "weights" in block:
            raw = block["weights"]
            if isinstance(raw, dict):
                raw = [raw.get(k, 0.0) for k in ("fidelity", "connectivity", "queue", "latency")]
            weights = QssWeights.normalized(raw)
        norms = QssNorms(
            _number(block, "max_wait_s", "policy", QssNorms().max_wait_s),
            _number(block, "max_latency_s", "policy", QssNorms().max_latency_s),
        )
        backfill = block.get("backfill", True)
        if not isinstance(backfill, bool):
            raise ScenarioError("policy.backfill: expected true or false")
        mode = block.get("mode", "auto")
        return Policy(
            weights=weights,
            norms=norms,
            interleave_threshold_s=_number(block, "interleave_threshold_s", "policy", 1.0),
            backfill=backfill,
            mode_override=parse_mode(mode),
            sched_latency_s=_number(block, "sched_latency_s", "policy", 0.01),
            templates=templates,
            fabric=fabric,
            midware=midware,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"policy: {exc}") from None


def parse_mode(mode: str | None) -> str | None:
    """Map a mode flag (``auto`` or a mode name, ``async`` accepted) to an override."""
    if mode is None or mode == "auto":
        return None
    if mode == "async":
        mode = "async_streaming"
    if mode not in MODES:
        raise ScenarioError(f"unknown mode {mode!r}")
    return mode


def _job(entry: Any, index: int, base: Path | None, templates: TemplateConfig) -> PendingJob:
    where = f"jobs[{index}]"
    entry = _mapping(entry, where)
    _keys(entry, {"hwd", "hwd_file", "submit_s", "template", "graph"}, where)
    if ("hwd" in entry) == ("hwd_file" in entry):
        raise ScenarioError(f"{where}: give exactly one of hwd or hwd_file")
    if "hwd" in entry:
        text = entry["hwd"]
        if not isinstance(text, str):
            raise ScenarioError(f"{where}.hwd: expected a literal block")
        source = where
    else:
        path = Path(str(entry["hwd_file"]))
        if not path.is_absolute() and base is not None:
            path = base / path
        try:
            text = path.read_text()
        except OSError as exc:
            raise ScenarioError(f"{where}.hwd_file: cannot read {path}: {exc.strerror}") from None
        source = str(path)
    try:
        descriptor = parse_hwd(text)
    except HwdError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    submit_s = _number(entry, "submit_s", where, 0.0)
    if submit_s < 0:
        raise ScenarioError(f"{where}.submit_s: must be >= 0")
    default_template = "classical_only" if descriptor.quantum is None else "vqe_loop"
    template = str(entry.get("template", default_template))
    graph = None
    try:
        if "graph" in entry:
            template = "custom"
            graph = graph_from_text(str(entry["graph"]))
            if graph.qpu_nodes() and descriptor.quantum is None:
                raise ScenarioError(f"{where}: graph has QPU nodes but the job has no quantum block")
        elif template not in TEMPLATES:
            raise ScenarioError(f"{where}.template: unknown template {template!r}")
        else:
            build_graph(descriptor, template, templates)
    except (GraphError, TemplateError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None
    return PendingJob(descriptor, to_ns(submit_s), template, graph)


def _check_fits(jobs, records) -> None:
    """Every job's classical demand must fit at least one node when idle."""
    for job in jobs:
        c = job.descriptor.classical
        demand = (c.cpu_cores, c.gpu_count, mem_units(c.memory_gb))
        if not any(
            r.cpu_cores > 0 and all(x <= cap for x, cap in zip(demand, (r.cpu_cores, r.gpu_count, capacity_units(r.memory_gb))))
            for r in records
        ):
            raise ScenarioError(f"job {job.job_id}: classical demand {demand} fits no resource in the registry")


_TOP_KEYS = {"name", "seed", "horizon_s", "max_events", "registry", "drift", "policy", "templates", "fabric", "midware", "jobs"}


def parse_scenario(data: Any, base: Path | None = None) -> Scenario:
    data = _mapping(data, "scenario")
    _keys(data, _TOP_KEYS, "scenario")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ScenarioError("seed: expected an integer")
    horizon = data.get("horizon_s")
    if horizon is not None:
        horizon = _number(data, "horizon_s", "scenario")
        if horizon < 0:
            raise ScenarioError("horizon_s: must be >= 0")
    max_events = _number(data, "max_events", "scenario", DEFAULT_MAX_EVENTS, integer=True)

    registry = data.get("registry") or []
    if not isinstance(registry, list):
        raise ScenarioError("registry: expected a list")
    records = tuple(_resource(e, i) for i, e in enumerate(registry))
    ids = [r.resource_id for r in records]
    if len(ids) != len(set(ids)):
        raise ScenarioError("registry: duplicate resource ids")

    templates = _dataclass_block(TemplateConfig, data.get("templates"), "templates")
    midware = _dataclass_block(MidwareConfig, data.get("midware"), "midware")
    fabric = _fabric(data.get("fabric"))
    policy = _policy(data.get("policy"), templates, fabric, midware)
    drift = _drift(data.get("drift"), seed)

    raw_jobs = data.get("jobs") or []
    if not isinstance(raw_jobs, list):
        raise ScenarioError("jobs: expected a list")
    jobs = tuple(_job(e, i, base, templates) for i, e in enumerate(raw_jobs))
    try:
        check_unique_ids(j.descriptor for j in jobs)
    except HwdError as exc:
        raise ScenarioError(str(exc)) from None
    _check_fits(jobs, records)
    return Scenario(records, jobs, drift, policy, seed, horizon, max_events, str(data.get("name", "scenario")))


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario file, or a bundled scenario by name."""
    p = Path(path)
    if not p.is_file():
        bundled = bundled_scenario_path(str(path))
        if bundled is None:
            raise ScenarioError(f"no such scenario: {path}")
        p = bundled
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{p}: {exc}") from None
    except OSError as exc:
        raise ScenarioError(f"{p}: {exc.strerror}") from None
    return parse_scenario(data, p.parent)
