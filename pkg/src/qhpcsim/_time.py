"""Simulation clock helpers: time is an integer count of nanoseconds."""

NS_PER_S = 1_000_000_000


def to_ns(seconds: float) -> int:
    return round(seconds * NS_PER_S)


def duration_ns(seconds: float) -> int:
    # every task takes at least one tick so the event queue always advances
    return max(1, round(seconds * NS_PER_S))


def to_s(ns: int) -> float:
    return ns / NS_PER_S
