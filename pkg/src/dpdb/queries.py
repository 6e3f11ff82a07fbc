"""Query predicates for the three supported query types."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .crypto_store import Record
from .errors import ParameterError


@dataclass(frozen=True)
class RangeQuery:
    lo: int
    hi: int
    kind = "range"

    def __post_init__(self):
        if self.lo > self.hi:
            raise ParameterError(f"empty range [{self.lo}, {self.hi}]")

    def matches(self, record: Record) -> bool:
        return record.key is not None and self.lo <= record.key <= self.hi


@dataclass(frozen=True)
class PointQuery:
    point: int
    kind = "point"

    def matches(self, record: Record) -> bool:
        return record.key == self.point


@dataclass(frozen=True)
class AttributeQuery:
    """Records whose attribute ``column`` (0-based) equals ``bit``."""

    column: int
    bit: int
    kind = "attribute"

    def __post_init__(self):
        if self.bit not in (0, 1) or self.column < 0:
            raise ParameterError(f"bad attribute query (column={self.column}, bit={self.bit})")

    def matches(self, record: Record) -> bool:
        return record.attrs is not None and record.attrs[self.column] == self.bit


Query = Union[RangeQuery, PointQuery, AttributeQuery]


def plaintext_filter(records, query: Query) -> list[Record]:
    """Linear-scan oracle over the plaintext database."""
    return [r for r in records if not r.is_dummy and query.matches(r)]
