"""Hot numeric kernels.

Two lanes are provided:

* a numba ``@njit`` lane (default when numba imports cleanly), and
* a pure numpy/scipy fallback, selected by setting ``FPPLAB_NO_NUMBA=1``.

Both lanes expose the same functions with identical semantics; the walk
kernels share one source (jitted or not) and therefore produce bit-identical
trajectories, while shortest paths fall back to scipy's csgraph Dijkstra.
"""

import os

try:
    import numba  # noqa: F401

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - CI always has numba
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("FPPLAB_NO_NUMBA", "0").lower() not in (
    "1",
    "true",
    "yes",
)

from .dijkstra import dijkstra  # noqa: E402
from .walks import (  # noqa: E402
    occupation_estimate,
    occupation_samples_at,
    positions_at_time,
)

__all__ = [
    "USE_NUMBA",
    "dijkstra",
    "occupation_estimate",
    "occupation_samples_at",
    "positions_at_time",
]
