"""Pure-Python kernels: the simulator's event heap and the earliest-fit search.

These are the reference implementations; ``_kernels.pyx`` must agree with
them exactly (all arithmetic is on integers).
"""

from __future__ import annotations

import heapq

BACKEND = "python"


class EventQueue:
    """Min-heap of ``(time_ns, seq, item)``; ``seq`` must be unique."""

    __slots__ = ("_heap",)

    def __init__(self):
        self._heap = []

    def push(self, time_ns: int, seq: int, item) -> None:
        heapq.heappush(self._heap, (time_ns, seq, item))

    def pop(self):
        return heapq.heappop(self._heap)

    def peek_time(self) -> int:
        return self._heap[0][0]

    def __len__(self) -> int:
        return len(self._heap)


def earliest_fit(starts, ends, loads, caps, demand, not_before, duration):
    """Earliest ``s >= not_before`` where ``demand`` fits for ``[s, s + duration)``.

    ``starts``/``ends`` describe n half-open busy intervals; ``loads`` is the
    row-major n x d matrix of what each interval consumes; ``caps`` and
    ``demand`` have length d.  Returns -1 if the demand exceeds capacity.
    """
    d = len(caps)
    n = len(starts)
    for k in range(d):
        if demand[k] > caps[k]:
            return -1
    candidates = sorted({not_before, *(e for e in ends if e > not_before)})
    for s in candidates:
        horizon = s + duration
        checkpoints = [s] + [st for st in starts if s < st < horizon]
        ok = True
        for tau in checkpoints:
            for k in range(d):
                used = 0
                for i in range(n):
                    if starts[i] <= tau < ends[i]:
                        used += loads[i * d + k]
                if used + demand[k] > caps[k]:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return s
    return -1
