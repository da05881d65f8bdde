from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from qhpcsim.fabric import (
    WAN_PRESETS,
    FabricConfig,
    LinkClass,
    QrtpPayload,
    default_links,
    feedback_rtt,
    qpu_exec_time,
    transfer_time,
)


def exact_transfer(nbytes: int, link: LinkClass) -> Fraction:
    return Fraction(link.rtt_s) + Fraction(nbytes) / Fraction(link.bandwidth_bytes_per_s)


def test_defaults():
    links = default_links()
    assert links["intra_node"].rtt_s == 4e-6
    assert links["inter_node"].rtt_s == 1e-5
    assert links["wan"].rtt_s == 0.05
    assert sorted(p.rtt_s for p in WAN_PRESETS.values()) == [0.01, 0.05, 0.1]


def test_payload_bytes():
    assert QrtpPayload(1024, 8).bytes == 1024
    assert QrtpPayload(1024, 9).bytes == 2048
    assert QrtpPayload(0, 100).bytes == 0


def test_single_gate_exec_time():
    assert qpu_exec_time(1, 1, "superconducting", per_shot_overhead_s=0.0) == 5e-8


def test_exec_time_example():
    t = qpu_exec_time(1024, 100, "superconducting")
    assert t == pytest.approx(1024 * 100 * 5e-8 + 1024 * 1e-3, rel=1e-15)
    assert round(t, 3) == 1.029


def test_trapped_ion_ratio():
    ion = qpu_exec_time(500, 20, "trapped_ion", per_shot_overhead_s=0.0)
    sc = qpu_exec_time(500, 20, "superconducting", per_shot_overhead_s=0.0)
    assert ion / sc == pytest.approx(200.0, rel=1e-12)


def test_exec_time_domain():
    with pytest.raises(ValueError):
        qpu_exec_time(0, 1, "photonic")


def test_r3_rtt_example():
    rtt = feedback_rtt("R3", QrtpPayload(1024, 8))
    assert rtt == pytest.approx(4e-6 + 1.28e-7, rel=1e-12)
    assert rtt < 1e-3


def test_r4_rtt_above_millisecond():
    assert feedback_rtt("R4", QrtpPayload(1024, 8)) >= 0.05


def test_empty_payload_on_r3_exact():
    assert feedback_rtt("R3", QrtpPayload(0, 5)) == 4e-6


def test_non_qpu_tier_rejected():
    with pytest.raises(ValueError):
        feedback_rtt("R1", QrtpPayload(1, 1))


def test_link_ordering_enforced():
    links = default_links()
    links["intra_node"] = LinkClass("intra_node", 1.0, 8e9)
    with pytest.raises(ValueError):
        FabricConfig(links=links)


def test_header_items_cover_links_and_gates():
    keys = dict(FabricConfig().header_items())
    assert keys["intra_node.rtt_s"] == "4e-06"
    assert keys["gate_time.trapped_ion"] == "1e-05"
    assert keys["per_shot_overhead_s"] == "0.001"


@given(
    a=st.integers(0, 10**9),
    b=st.integers(0, 10**9),
    rtt=st.floats(1e-7, 1.0),
    bw=st.floats(1e3, 1e11),
)
def test_transfer_monotone(a, b, rtt, bw):
    lo, hi = sorted((a, b))
    link = LinkClass("wan", rtt, bw)
    assert transfer_time(lo, link) <= transfer_time(hi, link)
    assert transfer_time(lo, link) <= transfer_time(lo, LinkClass("wan", rtt * 2, bw))
    assert transfer_time(lo, LinkClass("wan", rtt, bw * 2)) <= transfer_time(lo, link)


@given(shots=st.integers(0, 10**6), qubits=st.integers(1, 1000))
def test_tier_ordering(shots, qubits):
    p = QrtpPayload(shots, qubits)
    assert feedback_rtt("R3", p) < feedback_rtt("R4", p)


@given(nbytes=st.integers(0, 10**6))
def test_sub_millisecond_exact(nbytes):
    link = default_links()["intra_node"]
    assert exact_transfer(nbytes, link) < Fraction(1, 1000)
    assert transfer_time(nbytes, link) < 1e-3
