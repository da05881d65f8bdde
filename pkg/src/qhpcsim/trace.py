"""Event trace format and replay comparison.

A trace is plain text.  Header lines start with ``#``: the format line, the
seed, every cost-model constant and one line per registry resource.  Event
lines are tab-separated: ``time_ns``, ``seq``, ``kind``, then ``key=value``
payload fields in a fixed per-kind order.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "FORMAT_VERSION",
    "EVENT_KINDS",
    "FormatError",
    "Record",
    "ReplayResult",
    "Trace",
    "format_record",
    "parse_trace",
    "replay_check",
]

FORMAT_VERSION = "v1"
MAGIC = "#qhpc-trace"

EVENT_KINDS = (
    "sim_start",
    "job_submit",
    "sched_pass",
    "job_start",
    "task_start",
    "task_end",
    "qpu_phase_start",
    "qpu_phase_end",
    "cores_released",
    "cores_reacquired",
    "calib_poll",
    "recalibration",
    "fallback",
    "job_end",
    "sim_end",
)


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class Record:
    time_ns: int
    seq: int
    kind: str
    fields: tuple[tuple[str, str], ...]

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.fields:
            if k == key:
                return v
        return default

    def __getitem__(self, key: str) -> str:
        value = self.get(key)
        if value is None:
            raise KeyError(f"{self.kind} record at seq {self.seq} has no field {key!r}")
        return value


def format_record(time_ns: int, seq: int, kind: str, fields) -> str:
    parts = [str(time_ns), str(seq), kind]
    parts.extend(f"{k}={v}" for k, v in fields)
    return "\t".join(parts)


@dataclass(frozen=True)
class Trace:
    version: str
    header: tuple[tuple[str, ...], ...]  # tab-split header lines without the '#'
    records: tuple[Record, ...]
    event_lines: tuple[str, ...]

    def header_value(self, key: str) -> str | None:
        for parts in self.header:
            if parts[0] == key and len(parts) > 1:
                return parts[1]
        return None

    def constants(self) -> dict[str, str]:
        out = {}
        for parts in self.header:
            if parts[0] == "const":
                k, _, v = parts[1].partition("=")
                out[k] = v
        return out

    def resources(self) -> list[dict[str, str]]:
        out = []
        for parts in self.header:
            if parts[0] == "resource":
                out.append(dict(p.split("=", 1) for p in parts[1:]))
        return out


def parse_trace(text: str) -> Trace:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith(MAGIC + "\t"):
        raise FormatError("missing trace header")
    version = lines[0].split("\t", 1)[1]
    header: list[tuple[str, ...]] = []
    records: list[Record] = []
    event_lines: list[str] = []
    for lineno, line in enumerate(lines[1:], 2):
        if line.startswith("#"):
            if records:
                raise FormatError(f"line {lineno}: header line after events")
            header.append(tuple(line[1:].split("\t")))
            continue
        parts = line.split("\t")
        if len(parts) < 3:
            raise FormatError(f"line {lineno}: expected time, seq and kind")
        try:
            time_ns, seq = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError(f"line {lineno}: time and seq must be integers") from None
        kind = parts[2]
        if kind not in EVENT_KINDS:
            raise FormatError(f"line {lineno}: unknown event kind {kind!r}")
        fields = []
        for p in parts[3:]:
            k, sep, v = p.partition("=")
            if not sep:
                raise FormatError(f"line {lineno}: payload field {p!r} is not key=value")
            fields.append((k, v))
        records.append(Record(time_ns, seq, kind, tuple(fields)))
        event_lines.append(line)
    return Trace(version, tuple(header), tuple(records), tuple(event_lines))


@dataclass(frozen=True)
class ReplayResult:
    equal: bool
    index: int | None = None  # event index, or -1 for the header
    field: str | None = None
    a: str | None = None
    b: str | None = None

    def __bool__(self) -> bool:
        return self.equal


def _first_field_diff(ra: Record, rb: Record) -> tuple[str, str, str]:
    for name, va, vb in (("time_ns", ra.time_ns, rb.time_ns), ("seq", ra.seq, rb.seq), ("kind", ra.kind, rb.kind)):
        if va != vb:
            return name, str(va), str(vb)
    for (ka, va), (kb, vb) in zip(ra.fields, rb.fields):
        if ka != kb:
            return ka, f"{ka}={va}", f"{kb}={vb}"
        if va != vb:
            return ka, va, vb
    if len(ra.fields) != len(rb.fields):
        return "<fields>", str(len(ra.fields)), str(len(rb.fields))
    return "<line>", "", ""


def replay_check(trace_a: str, trace_b: str) -> ReplayResult:
    """Byte comparison of two traces, localized to the first differing event field."""
    if trace_a == trace_b:
        return ReplayResult(True)
    ta, tb = parse_trace(trace_a), parse_trace(trace_b)
    if ta.version != tb.version:
        raise FormatError(f"trace format mismatch: {ta.version} vs {tb.version}")
    for i, (la, lb) in enumerate(zip(ta.event_lines, tb.event_lines)):
        if la != lb:
            name, va, vb = _first_field_diff(ta.records[i], tb.records[i])
            return ReplayResult(False, i, name, va, vb)
    if len(ta.records) != len(tb.records):
        i = min(len(ta.records), len(tb.records))
        return ReplayResult(False, i, "<length>", str(len(ta.records)), str(len(tb.records)))
    for ha, hb in zip(ta.header, tb.header):
        if ha != hb:
            return ReplayResult(False, -1, ha[0], "\t".join(ha), "\t".join(hb))
    return ReplayResult(False, -1, "<header>", str(len(ta.header)), str(len(tb.header)))
