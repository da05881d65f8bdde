"""Compare the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Times the event heap (push then drain) and the earliest-fit search on the
same random inputs for each available backend and checks the results agree.
"""

from __future__ import annotations

import argparse
import random
import timeit

from qhpcsim import _kernels_py, kernels


def backends():
    found = [_kernels_py]
    try:
        from qhpcsim import _kernels
    except ImportError:
        print("compiled extension not built; timing the pure backend only")
    else:
        found.append(_kernels)
    return found


def heap_workload(backend, events):
    q = backend.EventQueue()
    for seq, t in enumerate(events):
        q.push(t, seq, None)
    last = -1
    while len(q):
        t, _, _ = q.pop()
        last = t
    return last


def fit_inputs(seed: int, n_intervals: int, n_queries: int):
    rng = random.Random(seed)
    starts = sorted(rng.randint(0, 10**12) for _ in range(n_intervals))
    intervals = [(s, s + rng.randint(10**9, 10**11), (rng.randint(1, 16), rng.randint(0, 2), rng.randint(1, 64) * 1024))
                 for s in starts]
    caps = (64, 4, 256 * 1024)
    queries = [((rng.randint(1, 64), rng.randint(0, 4), rng.randint(1, 256) * 1024),
                rng.randint(0, 10**12), rng.randint(10**9, 10**11)) for _ in range(n_queries)]
    return intervals, caps, queries


def fit_workload(backend, intervals, caps, queries):
    return [kernels.earliest_fit(intervals, caps, d, nb, dur, backend=backend) for d, nb, dur in queries]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--events", type=int, default=200_000)
    parser.add_argument("--intervals", type=int, default=40)
    parser.add_argument("--queries", type=int, default=200)
    args = parser.parse_args()

    rng = random.Random(1)
    events = [rng.randint(0, 10**12) for _ in range(args.events)]
    intervals, caps, queries = fit_inputs(2, args.intervals, args.queries)

    rows = []
    results = {}
    for b in backends():
        heap_s = min(timeit.repeat(lambda: heap_workload(b, events), number=1, repeat=args.repeat))
        fit_s = min(timeit.repeat(lambda: fit_workload(b, intervals, caps, queries), number=1, repeat=args.repeat))
        results[b.BACKEND] = (heap_workload(b, events), fit_workload(b, intervals, caps, queries))
        rows.append((b.BACKEND, heap_s, fit_s))

    if len({repr(r) for r in results.values()}) != 1:
        raise SystemExit("backends disagree")
    base = rows[0]
    print(f"{'backend':<8} {'heap (s)':>10} {'fit (s)':>10} {'heap x':>8} {'fit x':>8}")
    for name, heap_s, fit_s in rows:
        print(f"{name:<8} {heap_s:>10.4f} {fit_s:>10.4f} {base[1] / heap_s:>8.1f} {base[2] / fit_s:>8.1f}")
    print(f"{args.events} heap events; {args.queries} earliest-fit queries over {args.intervals} intervals")


if __name__ == "__main__":
    main()
