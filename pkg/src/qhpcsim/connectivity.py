"""Which hardware coupling classes can host which requested circuit topologies.

The relation is a partial order (linear < ring < grid < all_to_all and
linear < heavy_hex < grid) written out as a table so no graph embedding is
ever computed:

=============  ==============================================
hardware       satisfiable requests
=============  ==============================================
linear         linear
ring           linear, ring
heavy_hex      linear, heavy_hex
grid           linear, ring, heavy_hex, grid
all_to_all     everything
=============  ==============================================
"""

from __future__ import annotations

SATISFIES: dict[str, frozenset[str]] = {
    "linear": frozenset({"linear"}),
    "ring": frozenset({"linear", "ring"}),
    "heavy_hex": frozenset({"linear", "heavy_hex"}),
    "grid": frozenset({"linear", "ring", "heavy_hex", "grid"}),
    "all_to_all": frozenset({"linear", "ring", "heavy_hex", "grid", "all_to_all"}),
}


def satisfiable(request: str, hardware: str) -> bool:
    try:
        return request in SATISFIES[hardware]
    except KeyError:
        raise ValueError(f"unknown connectivity class {hardware!r}") from None
