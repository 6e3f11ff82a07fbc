"""Deterministic query workloads."""

from __future__ import annotations

import math

from ..errors import ParameterError
from ..queries import AttributeQuery, PointQuery, RangeQuery

KINDS = ("points", "ranges", "attributes")


def ranges_at(N: int, selectivity: float) -> list[RangeQuery]:
    """Every range of length ``ceil(selectivity * N)``."""
    if not 0 < selectivity <= 1:
        raise ParameterError(f"selectivity must be in (0, 1], got {selectivity}")
    length = max(1, math.ceil(selectivity * N - 1e-9))
    return [RangeQuery(a, a + length - 1) for a in range(1, N - length + 2)]


def gen_workload(kind: str, N: int | None = None, selectivity: float | None = None,
                 k: int | None = None) -> list:
    if kind == "points":
        if not N or N < 1:
            raise ParameterError("points workload needs a domain size")
        return [PointQuery(a) for a in range(1, N + 1)]
    if kind == "ranges":
        if not N or N < 1 or selectivity is None:
            raise ParameterError("ranges workload needs a domain size and selectivity")
        return ranges_at(N, selectivity)
    if kind == "attributes":
        if not k or k < 1:
            raise ParameterError("attributes workload needs k >= 1")
        return [AttributeQuery(i, bit) for i in range(k) for bit in (1, 0)]
    raise ParameterError(f"unknown workload kind {kind!r}; choose from {KINDS}")
