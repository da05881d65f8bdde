"""Hybrid Workload Descriptor (HWD) parsing, validation and canonical output.

The descriptor format is a restricted, indentation-based key/value document:
nested mappings, block or flow lists of scalars, quoted or plain scalars and
``|`` literal blocks.  Anchors, aliases, tags, flow mappings and multi-document
streams are rejected so that every document has exactly one parse and every
syntax error carries a line and column.

Example::

    job_id: vqe-h2
    priority: 2
    classical:
      cpu_cores: 16
      memory_gb: 32
      walltime_s: 600
      mpi_ranks: 4
    quantum:
      qubits: 12
      connectivity: linear
      shots: 1024
      modalities: [superconducting, best_available]
      depth: 80
      fallback: emulate_on_gpu
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable

__all__ = [
    "CONNECTIVITIES",
    "FALLBACK_POLICIES",
    "MODALITIES",
    "MODE_HINTS",
    "ClassicalDescriptor",
    "ClusterLimits",
    "DomainError",
    "HwdError",
    "HybridWorkloadDescriptor",
    "ParseError",
    "QuantumDescriptor",
    "ValidationError",
    "check_unique_ids",
    "descriptor_from_mapping",
    "load_document",
    "parse_hwd",
    "serialize_hwd",
    "shots_from_confidence",
]

CONNECTIVITIES = ("linear", "ring", "grid", "heavy_hex", "all_to_all")
MODALITIES = ("superconducting", "trapped_ion", "neutral_atom", "photonic")
MODALITY_PREFERENCES = MODALITIES + ("best_available",)
FALLBACK_POLICIES = ("emulate_on_gpu", "queue_for_qpu", "fail_degraded")
MODE_HINTS = ("simultaneous", "interleaved", "async_streaming", "auto")

DEFAULT_EPSILON = 0.01

_JOB_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.\-]*$")
_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_LITERAL_OPEN_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*:\s+\|-?\s*(#.*)?$")
_INT_RE = re.compile(r"^[-+]?[0-9]+$")
_FLOAT_RE = re.compile(r"^[-+]?([0-9]+\.[0-9]*|\.[0-9]+|[0-9]+)([eE][-+]?[0-9]+)?$")


class HwdError(ValueError):
    """Base class for descriptor errors."""


class ParseError(HwdError):
    def __init__(self, line: int, column: int, reason: str):
        self.line = line
        self.column = column
        self.reason = reason
        super().__init__(f"line {line}, column {column}: {reason}")


class ValidationError(HwdError):
    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class DomainError(ValueError):
    """Argument outside the mathematical domain of a conversion."""


@dataclass(frozen=True)
class ClusterLimits:
    """Cluster-wide maxima that every descriptor must respect."""

    max_cpu_cores: int = 1 << 20
    max_gpu_count: int = 1 << 16
    max_memory_gb: float = 1.0e9
    max_walltime_s: float = 1.0e9
    max_mpi_ranks: int = 1 << 24
    max_qubits: int = 1 << 20
    max_depth: int = 10**9
    max_shots: int = 10**12


@dataclass(frozen=True)
class ClassicalDescriptor:
    cpu_cores: int
    memory_gb: float
    walltime_s: float
    mpi_ranks: int
    gpu_count: int = 0


@dataclass(frozen=True)
class QuantumDescriptor:
    qubit_count: int
    connectivity: str
    modality_preference: tuple[str, ...]
    circuit_depth: int
    fallback_policy: str
    shot_budget: int | None = None
    target_confidence: float | None = None
    epsilon: float = DEFAULT_EPSILON
    circuit: str = ""

    @property
    def shots(self) -> int:
        """Shots to execute before any error-mitigation multiplier."""
        if self.shot_budget is not None:
            return self.shot_budget
        return shots_from_confidence(self.target_confidence, self.epsilon)


@dataclass(frozen=True)
class HybridWorkloadDescriptor:
    job_id: str
    classical: ClassicalDescriptor
    quantum: QuantumDescriptor | None = None
    mode_hint: str = "auto"
    priority: int = 0

    @property
    def is_quantum(self) -> bool:
        return self.quantum is not None


def shots_from_confidence(target_confidence: float, epsilon: float = DEFAULT_EPSILON) -> int:
    """Hoeffding shot count for estimating a bounded observable to +/- epsilon.

    Returns ``ceil(ln(2 / (1 - confidence)) / (2 * epsilon**2))``.
    """
    if not isinstance(target_confidence, (int, float)) or isinstance(target_confidence, bool):
        raise DomainError("target_confidence must be a number")
    if not isinstance(epsilon, (int, float)) or isinstance(epsilon, bool):
        raise DomainError("epsilon must be a number")
    if not 0.0 < target_confidence < 1.0:
        raise DomainError(f"target_confidence must lie in (0, 1), got {target_confidence!r}")
    if not (epsilon > 0.0 and math.isfinite(epsilon)):
        raise DomainError(f"epsilon must be positive and finite, got {epsilon!r}")
    return math.ceil(math.log(2.0 / (1.0 - target_confidence)) / (2.0 * epsilon * epsilon))


# ---------------------------------------------------------------------------
# Restricted document syntax
# ---------------------------------------------------------------------------


@dataclass
class _Line:
    number: int
    indent: int
    text: str  # content with indentation and trailing comment removed


@dataclass
class _Doc:
    raw: list[str]
    lines: list[_Line] = field(default_factory=list)
    # line number of every key, keyed by dotted path; used for diagnostics
    positions: dict[str, tuple[int, int]] = field(default_factory=dict)


def _strip_comment(text: str, lineno: int, offset: int) -> str:
    quote = None
    i = 0
    while i < len(text):
        ch = text[i]
        if quote:
            if ch == "\\" and quote == '"':
                i += 2
                continue
            if ch == quote:
                if quote == "'" and text[i + 1 : i + 2] == "'":
                    i += 2
                    continue
                quote = None
        elif ch in "\"'":
            # quotes only open a scalar at token start
            if i == 0 or text[i - 1] in " [,":
                quote = ch
        elif ch == "#" and (i == 0 or text[i - 1] in " \t"):
            return text[:i].rstrip()
        i += 1
    if quote:
        raise ParseError(lineno, offset + len(text) + 1, "unterminated quoted scalar")
    return text.rstrip()


def _tokenize(text: str) -> _Doc:
    if text.startswith("﻿"):
        text = text[1:]
    raw = text.replace("\r\n", "\n").split("\n")
    doc = _Doc(raw=raw)
    literal_owner = None  # indent of a key that opened a literal block
    for idx, line in enumerate(raw):
        lineno = idx + 1
        stripped = line.lstrip(" ")
        indent = len(line) - len(stripped)
        if literal_owner is not None:
            if not stripped.strip() or indent > literal_owner:
                continue
            literal_owner = None
        if not stripped.strip() or stripped.startswith("#"):
            continue
        if stripped.startswith("\t"):
            raise ParseError(lineno, indent + 1, "tab character in indentation")
        if "\r" in line:
            raise ParseError(lineno, line.index("\r") + 1, "stray carriage return")
        if stripped.rstrip() in ("---", "..."):
            raise ParseError(lineno, indent + 1, "multi-document streams are not supported")
        if stripped[0] in "%!&*{":
            raise ParseError(lineno, indent + 1, f"unsupported construct {stripped[0]!r}")
        if _LITERAL_OPEN_RE.match(stripped):
            literal_owner = indent
        doc.lines.append(_Line(lineno, indent, stripped))
    return doc


def _resolve_scalar(token: str, lineno: int, col: int) -> Any:
    if not token:
        return None
    head = token[0]
    if head == '"':
        if len(token) < 2 or not token.endswith('"'):
            raise ParseError(lineno, col, "malformed double-quoted scalar")
        try:
            return json.loads(token)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, col + exc.pos, f"bad escape in quoted scalar: {exc.msg}") from None
    if head == "'":
        if len(token) < 2 or not token.endswith("'"):
            raise ParseError(lineno, col, "malformed single-quoted scalar")
        body = token[1:-1]
        if re.search(r"(?<!')'(?!')", body.replace("''", "")):
            raise ParseError(lineno, col, "unescaped quote in single-quoted scalar")
        return body.replace("''", "'")
    if head in "&*!{|>@`":
        raise ParseError(lineno, col, f"unsupported construct {head!r}")
    if ": " in token or token.endswith(":"):
        raise ParseError(lineno, col + token.index(":"), "unexpected ':' in plain scalar")
    low = token.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    if low in ("null", "~"):
        return None
    if _INT_RE.match(token):
        return int(token)
    if _FLOAT_RE.match(token):
        return float(token)
    return token


def _split_flow(body: str, lineno: int, col: int) -> list[str]:
    items, buf, quote = [], [], None
    i = 0
    while i < len(body):
        ch = body[i]
        if quote:
            buf.append(ch)
            if ch == "\\" and quote == '"' and i + 1 < len(body):
                buf.append(body[i + 1])
                i += 2
                continue
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
            buf.append(ch)
        elif ch == ",":
            items.append("".join(buf).strip())
            buf = []
        elif ch in "[]{}":
            raise ParseError(lineno, col + i, "nested flow collections are not supported")
        else:
            buf.append(ch)
        i += 1
    tail = "".join(buf).strip()
    if tail or items:
        items.append(tail)
    if any(not it for it in items):
        raise ParseError(lineno, col, "empty item in flow list")
    return items


def _parse_value(rest: str, lineno: int, col: int) -> Any:
    if rest.startswith("["):
        if not rest.endswith("]"):
            raise ParseError(lineno, col + len(rest), "unterminated flow list")
        return [_resolve_scalar(tok, lineno, col) for tok in _split_flow(rest[1:-1], lineno, col + 1)]
    return _resolve_scalar(rest, lineno, col)


class _Parser:
    def __init__(self, doc: _Doc):
        self.doc = doc
        self.lines = doc.lines
        self.pos = 0

    def parse(self) -> dict[str, Any]:
        if not self.lines:
            raise ParseError(1, 1, "empty document")
        first = self.lines[0]
        if first.indent != 0:
            raise ParseError(first.number, 1, "document must start at column 1")
        value = self._block(0, "")
        if self.pos < len(self.lines):
            line = self.lines[self.pos]
            raise ParseError(line.number, line.indent + 1, "unexpected indentation")
        if not isinstance(value, dict):
            raise ParseError(first.number, 1, "top level must be a mapping")
        return value

    def _block(self, indent: int, path: str) -> Any:
        line = self.lines[self.pos]
        if line.text.startswith("-"):
            return self._list(indent)
        return self._mapping(indent, path)

    def _list(self, indent: int, compact: bool = False) -> list[Any]:
        # compact lists sit at their key's indentation and end at the next key
        items = []
        while self.pos < len(self.lines):
            line = self.lines[self.pos]
            if line.indent < indent or (compact and line.indent == indent and not line.text.startswith("-")):
                break
            if line.indent > indent:
                raise ParseError(line.number, line.indent + 1, "unexpected indentation")
            if not line.text.startswith("-"):
                raise ParseError(line.number, line.indent + 1, "expected list item")
            if line.text != "-" and line.text[1] != " ":
                raise ParseError(line.number, line.indent + 2, "expected space after '-'")
            body = _strip_comment(line.text[1:].strip(), line.number, line.indent + 2)
            if not body:
                raise ParseError(line.number, line.indent + 1, "nested block in list is not supported")
            if re.match(r"^[A-Za-z_][A-Za-z0-9_]*:( |$)", body):
                raise ParseError(line.number, line.indent + 3, "mappings inside lists are not supported")
            items.append(_parse_value(body, line.number, line.indent + 3))
            self.pos += 1
        return items

    def _mapping(self, indent: int, path: str) -> dict[str, Any]:
        out: dict[str, Any] = {}
        while self.pos < len(self.lines):
            line = self.lines[self.pos]
            if line.indent < indent:
                break
            if line.indent > indent:
                raise ParseError(line.number, line.indent + 1, "unexpected indentation")
            if line.text.startswith("-"):
                raise ParseError(line.number, line.indent + 1, "list item where a key was expected")
            key, sep, rest = line.text.partition(":")
            if not sep:
                raise ParseError(line.number, line.indent + 1, "expected 'key: value'")
            key = key.rstrip()
            if not _KEY_RE.match(key):
                raise ParseError(line.number, line.indent + 1, f"invalid key {key!r}")
            if rest and not rest.startswith(" "):
                raise ParseError(line.number, line.indent + len(key) + 2, "expected space after ':'")
            if key in out:
                raise ParseError(line.number, line.indent + 1, f"duplicate key {key!r}")
            dotted = f"{path}.{key}" if path else key
            self.doc.positions[dotted] = (line.number, line.indent + 1)
            value_col = line.indent + len(key) + 2 + (len(rest) - len(rest.lstrip()))
            rest = _strip_comment(rest.strip(), line.number, value_col - 1)
            self.pos += 1
            if rest in ("|", "|-"):
                out[key] = self._literal(line, keep_newline=rest == "|")
            elif rest:
                out[key] = _parse_value(rest, line.number, value_col)
            elif self.pos < len(self.lines) and self.lines[self.pos].indent > indent:
                out[key] = self._block(self.lines[self.pos].indent, dotted)
            elif self.pos < len(self.lines) and self.lines[self.pos].indent == indent and self.lines[
                self.pos
            ].text.startswith("- "):
                out[key] = self._list(indent, compact=True)
            else:
                out[key] = None
        return out

    def _literal(self, owner: _Line, keep_newline: bool) -> str:
        # literal blocks are read from raw text so comments and blank lines survive
        raw = self.doc.raw
        start = owner.number  # index of the following raw line
        body: list[str] = []
        block_indent = None
        i = start
        while i < len(raw):
            text = raw[i]
            if text.strip():
                ind = len(text) - len(text.lstrip(" "))
                if ind <= owner.indent:
                    break
                if block_indent is None:
                    block_indent = ind
                elif ind < block_indent:
                    raise ParseError(i + 1, ind + 1, "literal block line is under-indented")
                body.append(text[block_indent:])
            else:
                body.append("")
            i += 1
        while body and body[-1] == "":
            body.pop()
        # drop tokenized lines that belong to the literal block
        while self.pos < len(self.lines) and self.lines[self.pos].number <= i:
            self.pos += 1
        value = "\n".join(body)
        if keep_newline and body:
            value += "\n"
        return value


def load_document(text: str) -> dict[str, Any]:
    """Parse the restricted syntax into nested dicts/lists/scalars."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(1, exc.start + 1, "document is not valid UTF-8") from None
    return _Parser(_tokenize(text)).parse()


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

_TOP_KEYS = {"job_id", "priority", "mode", "classical", "quantum"}
_CLASSICAL_KEYS = {"cpu_cores", "gpu_count", "memory_gb", "walltime_s", "mpi_ranks"}
_QUANTUM_KEYS = {"qubits", "connectivity", "shots", "confidence", "epsilon", "modalities", "depth", "circuit", "fallback"}


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _require_mapping(value: Any, name: str) -> dict[str, Any]:
    if not isinstance(value, dict):
        raise ValidationError(name, "must be a mapping")
    return value


def _check_keys(block: dict[str, Any], allowed: set[str], prefix: str) -> None:
    for key in block:
        if key not in allowed:
            raise ValidationError(f"{prefix}{key}", "unknown key")


def _int_field(block, key, prefix, *, minimum, maximum, default=None):
    name = prefix + key
    if key not in block:
        if default is None:
            raise ValidationError(name, "required")
        return default
    v = block[key]
    if not _is_int(v):
        raise ValidationError(name, f"must be an integer, got {v!r}")
    if v < minimum:
        raise ValidationError(name, f"must be >= {minimum}")
    if v > maximum:
        raise ValidationError(name, f"exceeds cluster maximum {maximum}")
    return v


def _positive_number(block, key, prefix, *, maximum):
    name = prefix + key
    if key not in block:
        raise ValidationError(name, "required")
    v = block[key]
    if not _is_number(v):
        raise ValidationError(name, f"must be a finite number, got {v!r}")
    if v <= 0:
        raise ValidationError(name, "must be > 0")
    if v > maximum:
        raise ValidationError(name, f"exceeds cluster maximum {maximum}")
    return float(v)


def _enum_field(block, key, prefix, choices, default=None):
    name = prefix + key
    if key not in block:
        if default is None:
            raise ValidationError(name, "required")
        return default
    v = block[key]
    if v not in choices:
        raise ValidationError(name, f"must be one of {', '.join(choices)}; got {v!r}")
    return v


def _classical(block: Any, limits: ClusterLimits) -> ClassicalDescriptor:
    block = _require_mapping(block, "classical")
    _check_keys(block, _CLASSICAL_KEYS, "classical.")
    p = "classical."
    return ClassicalDescriptor(
        cpu_cores=_int_field(block, "cpu_cores", p, minimum=1, maximum=limits.max_cpu_cores),
        gpu_count=_int_field(block, "gpu_count", p, minimum=0, maximum=limits.max_gpu_count, default=0),
        memory_gb=_positive_number(block, "memory_gb", p, maximum=limits.max_memory_gb),
        walltime_s=_positive_number(block, "walltime_s", p, maximum=limits.max_walltime_s),
        mpi_ranks=_int_field(block, "mpi_ranks", p, minimum=1, maximum=limits.max_mpi_ranks),
    )


def _quantum(block: Any, limits: ClusterLimits) -> QuantumDescriptor:
    block = _require_mapping(block, "quantum")
    _check_keys(block, _QUANTUM_KEYS, "quantum.")
    p = "quantum."
    has_shots, has_conf = "shots" in block, "confidence" in block
    if has_shots == has_conf:
        raise ValidationError("quantum.shots", "exactly one of shots / confidence must be set")
    shot_budget = confidence = None
    epsilon = DEFAULT_EPSILON
    if has_shots:
        if "epsilon" in block:
            raise ValidationError("quantum.epsilon", "only meaningful together with confidence")
        shot_budget = _int_field(block, "shots", p, minimum=1, maximum=limits.max_shots)
    else:
        confidence = block["confidence"]
        if not _is_number(confidence) or not 0.0 < confidence < 1.0:
            raise ValidationError("quantum.confidence", f"must lie in (0, 1), got {confidence!r}")
        confidence = float(confidence)
        if "epsilon" in block:
            epsilon = block["epsilon"]
            if not _is_number(epsilon) or epsilon <= 0:
                raise ValidationError("quantum.epsilon", f"must be a positive number, got {epsilon!r}")
            epsilon = float(epsilon)
        if shots_from_confidence(confidence, epsilon) > limits.max_shots:
            raise ValidationError("quantum.confidence", f"implied shots exceed cluster maximum {limits.max_shots}")

    modalities = block.get("modalities")
    if modalities is None:
        raise ValidationError("quantum.modalities", "required")
    if isinstance(modalities, str):
        modalities = [modalities]
    if not isinstance(modalities, list) or not modalities:
        raise ValidationError("quantum.modalities", "must be a non-empty list")
    for m in modalities:
        if m not in MODALITY_PREFERENCES:
            raise ValidationError("quantum.modalities", f"unknown modality {m!r}")
    if len(set(modalities)) != len(modalities):
        raise ValidationError("quantum.modalities", "duplicate modality")
    if "best_available" in modalities and modalities[-1] != "best_available":
        raise ValidationError("quantum.modalities", "best_available must be last")

    circuit = block.get("circuit", "")
    if circuit is None:
        circuit = ""
    if not isinstance(circuit, str):
        raise ValidationError("quantum.circuit", "must be a string")

    return QuantumDescriptor(
        qubit_count=_int_field(block, "qubits", p, minimum=1, maximum=limits.max_qubits),
        connectivity=_enum_field(block, "connectivity", p, CONNECTIVITIES),
        modality_preference=tuple(modalities),
        circuit_depth=_int_field(block, "depth", p, minimum=1, maximum=limits.max_depth),
        fallback_policy=_enum_field(block, "fallback", p, FALLBACK_POLICIES),
        shot_budget=shot_budget,
        target_confidence=confidence,
        epsilon=epsilon,
        circuit=circuit,
    )


def descriptor_from_mapping(doc: dict[str, Any], limits: ClusterLimits | None = None) -> HybridWorkloadDescriptor:
    """Validate a parsed document tree and build the descriptor."""
    limits = limits or ClusterLimits()
    doc = _require_mapping(doc, "<document>")
    _check_keys(doc, _TOP_KEYS, "")
    job_id = doc.get("job_id")
    if job_id is None:
        raise ValidationError("job_id", "required")
    if not isinstance(job_id, str) or not job_id:
        raise ValidationError("job_id", "must be a non-empty string")
    if not _JOB_ID_RE.match(job_id):
        raise ValidationError("job_id", "may only contain letters, digits, '_', '.', '-'")
    if "classical" not in doc:
        raise ValidationError("classical", "required")
    classical = _classical(doc["classical"], limits)
    quantum = _quantum(doc["quantum"], limits) if doc.get("quantum") is not None else None
    if "quantum" in doc and doc["quantum"] is None:
        raise ValidationError("quantum", "must be a mapping")
    mode = _enum_field(doc, "mode", "", MODE_HINTS, default="auto")
    if quantum is None and mode != "auto":
        raise ValidationError("mode", "classical-only jobs take no mode hint other than auto")
    priority = _int_field(doc, "priority", "", minimum=0, maximum=1 << 31, default=0)
    return HybridWorkloadDescriptor(job_id=job_id, classical=classical, quantum=quantum, mode_hint=mode, priority=priority)


def parse_hwd(text: str | bytes, limits: ClusterLimits | None = None) -> HybridWorkloadDescriptor:
    """Parse and validate one descriptor document.

    Raises ParseError for syntax problems and ValidationError for semantic ones.
    """
    return descriptor_from_mapping(load_document(text), limits)


def check_unique_ids(descriptors: Iterable[HybridWorkloadDescriptor]) -> None:
    seen: set[str] = set()
    for d in descriptors:
        if d.job_id in seen:
            raise ValidationError("job_id", f"duplicate job_id {d.job_id!r} in submission batch")
        seen.add(d.job_id)


# ---------------------------------------------------------------------------
# Canonical output
# ---------------------------------------------------------------------------


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    return json.dumps(value, ensure_ascii=False)


def serialize_hwd(d: HybridWorkloadDescriptor) -> str:
    """Canonical text for a descriptor; parse_hwd(serialize_hwd(d)) == d."""
    c = d.classical
    out = [
        f"job_id: {_fmt(d.job_id)}",
        f"priority: {d.priority}",
        f"mode: {d.mode_hint}",
        "classical:",
        f"  cpu_cores: {c.cpu_cores}",
        f"  gpu_count: {c.gpu_count}",
        f"  memory_gb: {_fmt(float(c.memory_gb))}",
        f"  walltime_s: {_fmt(float(c.walltime_s))}",
        f"  mpi_ranks: {c.mpi_ranks}",
    ]
    q = d.quantum
    if q is not None:
        out += ["quantum:", f"  qubits: {q.qubit_count}", f"  connectivity: {q.connectivity}"]
        if q.shot_budget is not None:
            out.append(f"  shots: {q.shot_budget}")
        else:
            out.append(f"  confidence: {_fmt(float(q.target_confidence))}")
            out.append(f"  epsilon: {_fmt(float(q.epsilon))}")
        out += [
            f"  modalities: [{', '.join(q.modality_preference)}]",
            f"  depth: {q.circuit_depth}",
            f"  circuit: {_fmt(q.circuit)}",
            f"  fallback: {q.fallback_policy}",
        ]
    return "\n".join(out) + "\n"
