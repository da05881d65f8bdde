"""Compilation-pipeline and GPU-emulation cost models.

Nothing here touches a circuit.  The four compilation stages reduce to a depth
transform, a time estimate and a threshold rule for error mitigation; GPU
emulation is priced by the state-vector ``2**qubits`` law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .connectivity import satisfiable

__all__ = [
    "CapExceeded",
    "CompilationEstimate",
    "InfeasibleTarget",
    "MidwareConfig",
    "compile_estimate",
    "emulation_cost",
]

MITIGATIONS = ("none", "zne", "pec", "cdr")


class InfeasibleTarget(ValueError):
    pass


class CapExceeded(ValueError):
    pass


@dataclass(frozen=True)
class MidwareConfig:
    opt_factor: float = 0.8
    routing_overhead: float = 1.25
    compile_c0_s: float = 0.1
    compile_c1_s: float = 1e-4
    # fidelity >= none_threshold: no mitigation; >= zne_threshold: ZNE; else PEC
    none_threshold: float = 0.999
    zne_threshold: float = 0.99
    zne_multiplier: float = 3.0
    pec_multiplier: float = 10.0
    flops_per_amplitude: float = 16.0
    gpu_flops_effective: float = 1e13
    per_shot_sample_s: float = 1e-6
    emulation_qubit_cap: int = 34

    def header_items(self) -> list[tuple[str, str]]:
        return [(f"midware.{k}", repr(v)) for k, v in vars(self).items()]


@dataclass(frozen=True)
class CompilationEstimate:
    input_depth: int
    optimized_depth: int
    compile_time_s: float
    mitigation: str
    mitigation_shot_multiplier: float

    def effective_shots(self, shots: int) -> int:
        return math.ceil(shots * self.mitigation_shot_multiplier)


def _exact(x: float) -> Fraction:
    # decimal literal of the float, so 0.8 means 4/5 rather than its binary neighbour
    return Fraction(repr(float(x)))


def _ceil_mul(n: int, factor: float) -> int:
    return math.ceil(n * _exact(factor))


def compile_estimate(demand, target, config: MidwareConfig | None = None) -> CompilationEstimate:
    """Estimate what compiling ``demand`` for the QPU profile ``target`` costs."""
    config = config or MidwareConfig()
    if target.qubit_count < demand.qubit_count or not satisfiable(demand.connectivity, target.connectivity):
        raise InfeasibleTarget(
            f"{target.qubit_count}-qubit {target.connectivity} device cannot host "
            f"{demand.qubit_count}-qubit {demand.connectivity} circuit"
        )
    depth = demand.circuit_depth
    optimized = _ceil_mul(depth, config.opt_factor)
    routing = 1.0 if target.connectivity == "all_to_all" else config.routing_overhead
    optimized = min(depth, _ceil_mul(optimized, routing))

    fidelity = target.calibration.two_qubit_fidelity
    if fidelity >= config.none_threshold:
        mitigation, multiplier = "none", 1.0
    elif fidelity >= config.zne_threshold:
        mitigation, multiplier = "zne", config.zne_multiplier
    else:
        mitigation, multiplier = "pec", config.pec_multiplier

    return CompilationEstimate(
        input_depth=depth,
        optimized_depth=optimized,
        compile_time_s=config.compile_c0_s + config.compile_c1_s * depth,
        mitigation=mitigation,
        mitigation_shot_multiplier=multiplier,
    )


def emulation_cost(qubits: int, depth: int, shots: int, config: MidwareConfig | None = None) -> float:
    """Seconds to emulate the circuit on one GPU by state-vector simulation."""
    config = config or MidwareConfig()
    if qubits > config.emulation_qubit_cap:
        raise CapExceeded(f"{qubits} qubits exceeds emulation cap {config.emulation_qubit_cap}")
    if qubits < 1 or depth < 1 or shots < 0:
        raise ValueError("qubits and depth must be >= 1, shots >= 0")
    return (
        config.flops_per_amplitude * depth * 2.0**qubits / config.gpu_flops_effective
        + shots * config.per_shot_sample_s
    )
