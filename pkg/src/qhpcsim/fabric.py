"""Communication and QPU execution-time cost model.

Links are charged with a linear latency + bandwidth law; no congestion or
contention is modeled.  Shot results travel as packed bitstrings, one per
shot, ``ceil(qubits / 8)`` bytes each.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

__all__ = [
    "DEFAULT_GATE_TIMES",
    "FabricConfig",
    "LinkClass",
    "QrtpPayload",
    "WAN_PRESETS",
    "default_links",
    "feedback_rtt",
    "qpu_exec_time",
    "transfer_time",
]

LINK_NAMES = ("intra_node", "inter_node", "wan")

# Representative gate times per modality (seconds).
DEFAULT_GATE_TIMES = {
    "superconducting": 50e-9,
    "trapped_ion": 10e-6,
    "neutral_atom": 10e-6,
    "photonic": 1e-9,
}
DEFAULT_PER_SHOT_OVERHEAD_S = 1e-3


@dataclass(frozen=True)
class LinkClass:
    name: str
    rtt_s: float
    bandwidth_bytes_per_s: float

    def __post_init__(self):
        if self.name not in LINK_NAMES:
            raise ValueError(f"unknown link class {self.name!r}")
        if not self.rtt_s > 0 or not self.bandwidth_bytes_per_s > 0:
            raise ValueError(f"link {self.name}: rtt and bandwidth must be positive")


def default_links() -> dict[str, LinkClass]:
    return {
        "intra_node": LinkClass("intra_node", 4e-6, 8e9),
        "inter_node": LinkClass("inter_node", 1e-5, 2.5e10),
        "wan": LinkClass("wan", 0.05, 1.25e8),
    }


# Endpoints of the wide-area latency band.
WAN_PRESETS = {
    "wan_10ms": LinkClass("wan", 0.01, 1.25e8),
    "wan_50ms": LinkClass("wan", 0.05, 1.25e8),
    "wan_100ms": LinkClass("wan", 0.1, 1.25e8),
}


@dataclass(frozen=True)
class QrtpPayload:
    shots: int
    qubit_count: int

    @property
    def bytes(self) -> int:
        return self.shots * math.ceil(self.qubit_count / 8)


@dataclass(frozen=True)
class FabricConfig:
    links: dict[str, LinkClass] = field(default_factory=default_links)
    gate_times: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_GATE_TIMES))
    per_shot_overhead_s: float = DEFAULT_PER_SHOT_OVERHEAD_S

    def __post_init__(self):
        missing = set(LINK_NAMES) - set(self.links)
        if missing:
            raise ValueError(f"missing link classes: {sorted(missing)}")
        intra, inter, wan = (self.links[n].rtt_s for n in LINK_NAMES)
        if not intra < inter < wan:
            raise ValueError("link rtts must satisfy intra_node < inter_node < wan")
        if self.per_shot_overhead_s < 0:
            raise ValueError("per_shot_overhead_s must be >= 0")

    def link(self, name: str) -> LinkClass:
        return self.links[name]

    def with_overrides(self, **changes) -> "FabricConfig":
        return replace(self, **changes)

    def header_items(self) -> list[tuple[str, str]]:
        items = []
        for name in LINK_NAMES:
            link = self.links[name]
            items.append((f"{name}.rtt_s", repr(link.rtt_s)))
            items.append((f"{name}.bandwidth_bytes_per_s", repr(link.bandwidth_bytes_per_s)))
        for modality in sorted(self.gate_times):
            items.append((f"gate_time.{modality}", repr(self.gate_times[modality])))
        items.append(("per_shot_overhead_s", repr(self.per_shot_overhead_s)))
        return items


def transfer_time(payload_bytes: int, link: LinkClass) -> float:
    if payload_bytes < 0:
        raise ValueError("payload_bytes must be >= 0")
    return link.rtt_s + payload_bytes / link.bandwidth_bytes_per_s


def qpu_exec_time(
    shots: int,
    circuit_depth: int,
    modality: str,
    config: FabricConfig | None = None,
    *,
    per_shot_overhead_s: float | None = None,
) -> float:
    """Wall time to run ``shots`` repetitions of a depth-``circuit_depth`` circuit."""
    if shots < 1 or circuit_depth < 1:
        raise ValueError("shots and circuit_depth must be >= 1")
    config = config or FabricConfig()
    overhead = config.per_shot_overhead_s if per_shot_overhead_s is None else per_shot_overhead_s
    return shots * circuit_depth * config.gate_times[modality] + overhead * shots


def feedback_rtt(tier: str, payload: QrtpPayload, config: FabricConfig | None = None) -> float:
    """Round trip for returning one batch of shot results to the classical side.

    Co-located (R3) devices use the intra-node link; remote (R4) devices the WAN.
    """
    config = config or FabricConfig()
    if tier == "R3":
        link = config.links["intra_node"]
    elif tier == "R4":
        link = config.links["wan"]
    else:
        raise ValueError(f"tier {tier!r} has no QPU")
    return transfer_time(payload.bytes, link)
