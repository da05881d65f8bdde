"""Kernel backend selection.

The compiled extension is used when it was built and ``QHPC_SIM_PURE`` is
unset; otherwise the pure-Python reference kernels are used.  Both backends
produce identical results, so traces do not depend on which one is active.
"""

from __future__ import annotations

import os
from array import array

from . import _kernels_py

if os.environ.get("QHPC_SIM_PURE", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
EventQueue = _impl.EventQueue


def compiled_available() -> bool:
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return False
    return True


def earliest_fit(intervals, caps, demand, not_before: int, duration: int, *, backend=None) -> int:
    """Earliest start for ``demand`` given busy ``intervals`` of ``(start, end, loads)``."""
    impl = backend or _impl
    starts = array("q", [iv[0] for iv in intervals])
    ends = array("q", [iv[1] for iv in intervals])
    loads = array("q", [x for iv in intervals for x in iv[2]])
    return impl.earliest_fit(starts, ends, loads, array("q", caps), array("q", demand), not_before, duration)
