"""Directed cyclic task graphs for hybrid workloads.

A graph is a DAG plus a set of vertex-disjoint feedback loops.  Each loop
lists its members in body order; an edge between two members of the same loop
whose target does not come after its source in that order is a back-edge.
Removing every back-edge must leave an acyclic graph, and the strongly
connected components of the full graph must be exactly the loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import networkx as nx

__all__ = [
    "Edge",
    "FeedbackLoop",
    "GraphError",
    "NODE_KINDS",
    "PathClassification",
    "TaskGraph",
    "TaskNode",
    "TemplateConfig",
    "TemplateError",
    "build_graph",
    "classify_paths",
    "graph_from_text",
    "graph_to_text",
    "qpu_result_bytes",
    "unroll",
]

NODE_KINDS = ("CPU", "GPU", "QPU", "FPGA")
TEMPLATES = ("vqe_loop", "batched_circuits", "classical_only")


class GraphError(ValueError):
    pass


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class TaskNode:
    node_id: str
    kind: str
    duration_s: float | None = None  # CPU / GPU / FPGA service time
    shots: int | None = None  # QPU only
    depth: int | None = None  # QPU only
    qubits: int = 0
    cores: int = 0
    gpus: int = 0
    origin: str | None = None  # template node this copy was unrolled from
    iteration: int | None = None

    @property
    def is_qpu(self) -> bool:
        return self.kind == "QPU"


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    payload_bytes: int = 0


@dataclass(frozen=True)
class FeedbackLoop:
    members: tuple[str, ...]
    max_iterations: int


@dataclass(frozen=True)
class PathClassification:
    latency_critical_chains: tuple[tuple[str, ...], ...]
    latency_tolerant_batches: tuple[frozenset[str], ...]


@dataclass(frozen=True)
class TaskGraph:
    nodes: tuple[TaskNode, ...]
    edges: tuple[Edge, ...] = ()
    feedback_loops: tuple[FeedbackLoop, ...] = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {n.node_id: n for n in self.nodes})

    def node(self, node_id: str) -> TaskNode:
        return self._index[node_id]

    @property
    def node_ids(self) -> list[str]:
        return [n.node_id for n in self.nodes]

    def loop_of(self) -> dict[str, int]:
        return {m: i for i, loop in enumerate(self.feedback_loops) for m in loop.members}

    def back_edges(self) -> list[Edge]:
        position = {}
        for i, loop in enumerate(self.feedback_loops):
            for k, m in enumerate(loop.members):
                position[m] = (i, k)
        out = []
        for e in self.edges:
            ps, pd = position.get(e.src), position.get(e.dst)
            if ps and pd and ps[0] == pd[0] and pd[1] <= ps[1]:
                out.append(e)
        return out

    def to_networkx(self, *, drop_back_edges: bool = False) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.node_ids)
        skip = set(self.back_edges()) if drop_back_edges else set()
        g.add_edges_from((e.src, e.dst) for e in self.edges if e not in skip)
        return g

    def qpu_nodes(self) -> list[TaskNode]:
        return [n for n in self.nodes if n.is_qpu]

    def validate(self) -> "TaskGraph":
        ids = self.node_ids
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate node_id")
        for n in self.nodes:
            if n.kind not in NODE_KINDS:
                raise GraphError(f"node {n.node_id}: unknown kind {n.kind!r}")
            if n.is_qpu:
                if not (n.shots and n.shots > 0 and n.depth and n.depth > 0):
                    raise GraphError(f"node {n.node_id}: QPU nodes need positive shots and depth")
            elif n.duration_s is None or not n.duration_s > 0:
                raise GraphError(f"node {n.node_id}: duration must be > 0")
        pairs = set()
        for e in self.edges:
            if e.src not in self._index or e.dst not in self._index:
                raise GraphError(f"edge {e.src}->{e.dst} references an unknown node")
            if (e.src, e.dst) in pairs:
                raise GraphError(f"duplicate edge {e.src}->{e.dst}")
            if e.payload_bytes < 0:
                raise GraphError(f"edge {e.src}->{e.dst}: negative payload")
            pairs.add((e.src, e.dst))
        seen: set[str] = set()
        for loop in self.feedback_loops:
            if not loop.members:
                raise GraphError("empty feedback loop")
            if not isinstance(loop.max_iterations, int) or loop.max_iterations < 1:
                raise GraphError("feedback loop max_iterations must be a finite integer >= 1")
            for m in loop.members:
                if m not in self._index:
                    raise GraphError(f"loop member {m} is not a node")
                if m in seen:
                    raise GraphError(f"node {m} belongs to more than one loop (overlapping cycles)")
                seen.add(m)
        if not nx.is_directed_acyclic_graph(self.to_networkx(drop_back_edges=True)):
            raise GraphError("graph has a cycle not covered by a feedback loop")
        full = self.to_networkx()
        components = {
            frozenset(c)
            for c in nx.strongly_connected_components(full)
            if len(c) > 1 or any(full.has_edge(v, v) for v in c)
        }
        declared = {frozenset(loop.members) for loop in self.feedback_loops}
        if components != declared:
            raise GraphError("feedback loops do not match the cycles of the graph")
        return self


def qpu_result_bytes(shots: int, qubits: int) -> int:
    return shots * math.ceil(qubits / 8)


@dataclass(frozen=True)
class TemplateConfig:
    max_iterations: int = 10
    batch_size: int = 8
    init_s: float = 1.0
    opt_s: float = 0.5
    measure_s: float = 0.1
    finalize_s: float = 1.0
    prep_s: float = 1.0
    reduce_s: float = 1.0


def build_graph(descriptor, template: str, config: TemplateConfig | None = None) -> TaskGraph:
    """Instantiate one of the shipped workflow templates for a descriptor."""
    config = config or TemplateConfig()
    if template not in TEMPLATES:
        raise TemplateError(f"unknown template {template!r}")
    c = descriptor.classical
    q = descriptor.quantum
    if template == "classical_only":
        kind = "GPU" if c.gpu_count else "CPU"
        node = TaskNode("run", kind, duration_s=c.walltime_s, cores=c.cpu_cores, gpus=c.gpu_count)
        return TaskGraph((node,)).validate()
    if q is None:
        raise TemplateError(f"template {template} needs a quantum descriptor")

    def cpu(name: str, seconds: float) -> TaskNode:
        return TaskNode(name, "CPU", duration_s=seconds, cores=c.cpu_cores)

    def qpu(name: str) -> TaskNode:
        return TaskNode(name, "QPU", shots=q.shots, depth=q.circuit_depth, qubits=q.qubit_count)

    result = qpu_result_bytes(q.shots, q.qubit_count)
    if template == "vqe_loop":
        nodes = (
            cpu("init", config.init_s),
            cpu("opt", config.opt_s),
            qpu("eval"),
            cpu("measure", config.measure_s),
            cpu("finalize", config.finalize_s),
        )
        edges = (
            Edge("init", "opt"),
            Edge("opt", "eval"),
            Edge("eval", "measure", result),
            Edge("measure", "opt"),
            Edge("measure", "finalize"),
        )
        loops = (FeedbackLoop(("opt", "eval", "measure"), config.max_iterations),)
        return TaskGraph(nodes, edges, loops).validate()

    width = len(str(config.batch_size - 1))
    circuits = [f"circ{i:0{width}d}" for i in range(config.batch_size)]
    nodes = (cpu("prep", config.prep_s), *(qpu(name) for name in circuits), cpu("reduce", config.reduce_s))
    edges = tuple(Edge("prep", name) for name in circuits) + tuple(
        Edge(name, "reduce", result) for name in circuits
    )
    return TaskGraph(nodes, edges).validate()


def _reach(g: nx.DiGraph, a: str, b: str) -> bool:
    return a != b and nx.has_path(g, a, b)


def classify_paths(g: TaskGraph) -> PathClassification:
    """Split QPU nodes into latency-critical chains and latency-tolerant batches."""
    g.validate()
    full = g.to_networkx()
    loop_of = g.loop_of()
    chains = []
    critical = set()
    for node in sorted(g.qpu_nodes(), key=lambda n: n.node_id):
        if node.node_id not in loop_of:
            continue
        preds = sorted(p for p in full.predecessors(node.node_id) if g.node(p).kind == "CPU")
        succs = sorted(s for s in full.successors(node.node_id) if g.node(s).kind == "CPU")
        if preds and succs:
            chains.append((preds[0], node.node_id, succs[0]))
            critical.add(node.node_id)

    batches: list[list[str]] = []
    for nid in sorted(n.node_id for n in g.qpu_nodes() if n.node_id not in critical):
        for batch in batches:
            if all(not _reach(full, nid, other) and not _reach(full, other, nid) for other in batch):
                batch.append(nid)
                break
        else:
            batches.append([nid])
    return PathClassification(tuple(chains), tuple(frozenset(b) for b in batches))


def _copy_id(node_id: str, i: int) -> str:
    return f"{node_id}#{i}"


def unroll(g: TaskGraph) -> TaskGraph:
    """Expand every feedback loop into ``max_iterations`` sequential copies."""
    g.validate()
    if not g.feedback_loops:
        return g
    loop_of = g.loop_of()
    iters = [loop.max_iterations for loop in g.feedback_loops]
    back = set(g.back_edges())

    nodes: list[TaskNode] = []
    for n in g.nodes:
        if n.node_id in loop_of:
            for i in range(iters[loop_of[n.node_id]]):
                nodes.append(replace(n, node_id=_copy_id(n.node_id, i), origin=n.node_id, iteration=i))
        else:
            nodes.append(n)

    def exit_id(nid: str) -> str:
        return _copy_id(nid, iters[loop_of[nid]] - 1) if nid in loop_of else nid

    def entry_id(nid: str) -> str:
        return _copy_id(nid, 0) if nid in loop_of else nid

    edges: list[Edge] = []
    for e in g.edges:
        ls, ld = loop_of.get(e.src), loop_of.get(e.dst)
        if ls is not None and ls == ld:
            n = iters[ls]
            if e in back:
                edges.extend(
                    Edge(_copy_id(e.src, i), _copy_id(e.dst, i + 1), e.payload_bytes) for i in range(n - 1)
                )
            else:
                edges.extend(Edge(_copy_id(e.src, i), _copy_id(e.dst, i), e.payload_bytes) for i in range(n))
        else:
            edges.append(Edge(exit_id(e.src), entry_id(e.dst), e.payload_bytes))
    return TaskGraph(tuple(nodes), tuple(edges)).validate()


def contract_qpu_nodes(g: TaskGraph) -> TaskGraph:
    """Drop QPU nodes from an acyclic graph, wiring predecessors to successors."""
    dag = g.to_networkx()
    for n in g.qpu_nodes():
        preds, succs = list(dag.predecessors(n.node_id)), list(dag.successors(n.node_id))
        dag.remove_node(n.node_id)
        dag.add_edges_from((p, s) for p in preds for s in succs)
    payload = {(e.src, e.dst): e.payload_bytes for e in g.edges}
    nodes = tuple(n for n in g.nodes if not n.is_qpu)
    edges = tuple(Edge(s, d, payload.get((s, d), 0)) for s, d in sorted(dag.edges()))
    return TaskGraph(nodes, edges).validate()


def graph_to_text(g: TaskGraph) -> str:
    """Line-oriented export: ``node``, ``edge`` and ``loop`` records."""
    lines = []
    for n in g.nodes:
        if n.is_qpu:
            attrs = f"shots={n.shots} depth={n.depth} qubits={n.qubits}"
        else:
            attrs = f"duration_s={n.duration_s!r} cores={n.cores} gpus={n.gpus}"
        lines.append(f"node {n.node_id} {n.kind} {attrs}")
    lines.extend(f"edge {e.src} {e.dst} {e.payload_bytes}" for e in g.edges)
    lines.extend(f"loop {' '.join(loop.members)} {loop.max_iterations}" for loop in g.feedback_loops)
    return "\n".join(lines) + "\n"


def graph_from_text(text: str) -> TaskGraph:
    nodes, edges, loops = [], [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "node":
                nid, kind, *attrs = parts[1:]
                kv = dict(a.split("=", 1) for a in attrs)
                if kind == "QPU":
                    nodes.append(
                        TaskNode(nid, kind, shots=int(kv["shots"]), depth=int(kv["depth"]), qubits=int(kv.get("qubits", 1)))
                    )
                else:
                    nodes.append(
                        TaskNode(
                            nid,
                            kind,
                            duration_s=float(kv["duration_s"]),
                            cores=int(kv.get("cores", 0)),
                            gpus=int(kv.get("gpus", 0)),
                        )
                    )
            elif parts[0] == "edge":
                src, dst, *rest = parts[1:]
                edges.append(Edge(src, dst, int(rest[0]) if rest else 0))
            elif parts[0] == "loop":
                *members, iters = parts[1:]
                loops.append(FeedbackLoop(tuple(members), int(iters)))
            else:
                raise GraphError(f"line {lineno}: unknown record {parts[0]!r}")
        except (ValueError, KeyError) as exc:
            if isinstance(exc, GraphError):
                raise
            raise GraphError(f"line {lineno}: malformed record ({exc})") from None
    return TaskGraph(tuple(nodes), tuple(edges), tuple(loops)).validate()


def total_shots(nodes: Iterable[TaskNode]) -> int:
    return sum(n.shots for n in nodes if n.is_qpu)
