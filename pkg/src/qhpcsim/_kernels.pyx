# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: event heap and earliest-fit search.

Semantics mirror ``_kernels_py`` exactly.
"""

from libc.stdint cimport int64_t
from libc.stdlib cimport malloc, realloc, free

BACKEND = "cython"


cdef struct Entry:
    int64_t time
    int64_t seq
    Py_ssize_t slot


cdef inline bint _less(Entry a, Entry b) nogil:
    return a.time < b.time or (a.time == b.time and a.seq < b.seq)


cdef class EventQueue:
    """Min-heap of ``(time_ns, seq, item)``; ``seq`` must be unique."""

    cdef Entry* heap
    cdef Py_ssize_t size
    cdef Py_ssize_t capacity
    cdef list items
    cdef list free_slots

    def __cinit__(self):
        self.capacity = 64
        self.size = 0
        self.heap = <Entry*> malloc(self.capacity * sizeof(Entry))
        if self.heap == NULL:
            raise MemoryError()
        self.items = []
        self.free_slots = []

    def __dealloc__(self):
        if self.heap != NULL:
            free(self.heap)

    def push(self, int64_t time_ns, int64_t seq, item):
        cdef Py_ssize_t slot, i, parent
        cdef Entry e
        cdef Entry* tmp_ptr
        if self.size == self.capacity:
            self.capacity *= 2
            tmp_ptr = <Entry*> realloc(self.heap, self.capacity * sizeof(Entry))
            if tmp_ptr == NULL:
                raise MemoryError()
            self.heap = tmp_ptr
        if self.free_slots:
            slot = self.free_slots.pop()
            self.items[slot] = item
        else:
            slot = len(self.items)
            self.items.append(item)
        e.time = time_ns
        e.seq = seq
        e.slot = slot
        i = self.size
        self.size += 1
        while i > 0:
            parent = (i - 1) >> 1
            if _less(e, self.heap[parent]):
                self.heap[i] = self.heap[parent]
                i = parent
            else:
                break
        self.heap[i] = e

    def pop(self):
        cdef Entry top, last
        cdef Py_ssize_t i, child, n
        if self.size == 0:
            raise IndexError("pop from empty EventQueue")
        top = self.heap[0]
        self.size -= 1
        n = self.size
        if n > 0:
            last = self.heap[n]
            i = 0
            while True:
                child = 2 * i + 1
                if child >= n:
                    break
                if child + 1 < n and _less(self.heap[child + 1], self.heap[child]):
                    child += 1
                if _less(self.heap[child], last):
                    self.heap[i] = self.heap[child]
                    i = child
                else:
                    break
            self.heap[i] = last
        item = self.items[top.slot]
        self.items[top.slot] = None
        self.free_slots.append(top.slot)
        return (top.time, top.seq, item)

    def peek_time(self):
        if self.size == 0:
            raise IndexError("peek on empty EventQueue")
        return self.heap[0].time

    def __len__(self):
        return self.size


def earliest_fit(const int64_t[:] starts, const int64_t[:] ends, const int64_t[:] loads,
                 const int64_t[:] caps, const int64_t[:] demand,
                 int64_t not_before, int64_t duration):
    """Earliest ``s >= not_before`` where ``demand`` fits for ``[s, s + duration)``."""
    cdef Py_ssize_t n = starts.shape[0]
    cdef Py_ssize_t d = caps.shape[0]
    cdef Py_ssize_t i, j, k
    cdef int64_t s, tau, horizon, used
    cdef bint ok
    for k in range(d):
        if demand[k] > caps[k]:
            return -1
    cdef list candidates = sorted({not_before, *[ends[i] for i in range(n) if ends[i] > not_before]})
    for s in candidates:
        horizon = s + duration
        ok = True
        # checkpoint j == -1 stands for s itself
        for j in range(-1, n):
            if j >= 0:
                tau = starts[j]
                if not (s < tau < horizon):
                    continue
            else:
                tau = s
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
