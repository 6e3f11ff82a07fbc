"""DP ORAM: records live once in an ORAM; per-query-type sanitized indexes
tell the client how many ORAM reads each query must make.

The server sees the query, the noisy count ``c`` and ``c`` root-to-leaf
paths. The client reads the true matches through its local index and pads
with reads of random addresses whose results it discards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dp
from .crypto_store import DEFAULT_PAYLOAD_BYTES, DUMMY, LeakageTrace, Record, decode_record, encode_record
from .dp import Mechanism, PrivacyBudget
from .errors import CapacityError, ParameterError
from .oram import PathOram, oram_init
from .queries import AttributeQuery, PointQuery, Query, RangeQuery
from .sanitizers import as_histogram, build_attribute_index, build_point_histogram, build_range_tree

QUERY_TYPES = ("range", "point", "attribute")


class LocalIndex:
    """Client-side plaintext map from search keys to ORAM addresses."""

    def __init__(self, capacity: int, columns: int = 0):
        self.keys = np.full(capacity, -1, dtype=np.int64)
        self.attrs = np.zeros((capacity, columns), dtype=np.int8)
        self.has_attrs = np.zeros(capacity, dtype=bool)
        self.live = np.zeros(capacity, dtype=bool)
        self.allocated = 0

    @property
    def n(self) -> int:
        return int(self.live.sum())

    def put(self, addr: int, record: Record) -> None:
        self.keys[addr] = -1 if record.key is None else record.key
        # attribute bits are only indexed when attribute queries are enabled
        if record.attrs is not None and self.attrs.shape[1]:
            self.attrs[addr] = record.attrs
            self.has_attrs[addr] = True
        else:
            self.has_attrs[addr] = False
        self.live[addr] = True
        self.allocated = max(self.allocated, addr + 1)

    def drop(self, addr: int) -> None:
        self.live[addr] = False
        self.keys[addr] = -1
        self.has_attrs[addr] = False

    def lookup(self, q: Query) -> np.ndarray:
        if isinstance(q, RangeQuery):
            hit = (self.keys >= q.lo) & (self.keys <= q.hi)
        elif isinstance(q, PointQuery):
            hit = self.keys == q.point
        else:
            hit = self.has_attrs & (self.attrs[:, q.column] == q.bit)
        return np.flatnonzero(hit & self.live)


@dataclass
class QueryReport:
    query: Query
    count: int
    matches: int
    accesses: int
    incident: bool = False


@dataclass
class DpOramSystem:
    oram: PathOram
    local: LocalIndex
    sanitized: dict
    budget: PrivacyBudget
    domain: int | None
    columns: int
    rng: np.random.Generator
    payload_bytes: int
    extra_per_record: float = 0.0
    trace: LeakageTrace = field(default_factory=LeakageTrace)
    incidents: list[QueryReport] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.local.n

    @property
    def storage(self) -> int:
        """Logical record slots held by the ORAM (independent of query types)."""
        return self.oram.capacity

    @property
    def path_length(self) -> int:
        return self.oram.height + 1

    def _validate(self, q: Query) -> None:
        if q.kind not in self.sanitized:
            raise ParameterError(f"query type {q.kind!r} is not enabled")
        if isinstance(q, RangeQuery) and not 1 <= q.lo <= q.hi <= self.domain:
            raise ParameterError(f"range [{q.lo}, {q.hi}] outside [1, {self.domain}]")
        if isinstance(q, PointQuery) and not 1 <= q.point <= self.domain:
            raise ParameterError(f"point {q.point} outside [1, {self.domain}]")
        if isinstance(q, AttributeQuery) and not (0 <= q.column < self.columns and q.bit in (0, 1)):
            raise ParameterError(f"attribute query {q} outside {self.columns} columns")

    def server_count(self, q: Query) -> int:
        """What the server computes from the sanitized index for ``q``."""
        self._validate(q)
        c = self.sanitized[q.kind].answer(q)
        return c + math.ceil(self.extra_per_record * self.n)

    def execute(self, q: Query, count: int) -> tuple[list[Record], QueryReport]:
        """Read the true matches plus ``count - matches`` padding addresses."""
        addrs = self.local.lookup(q)
        m = len(addrs)
        accesses = max(count, m)
        pool = max(1, self.local.allocated)
        pad = self.rng.integers(0, pool, size=accesses - m)
        order = np.concatenate([addrs, pad]).astype(np.int64)
        is_real = np.concatenate([np.ones(m, bool), np.zeros(accesses - m, bool)])
        perm = self.rng.permutation(accesses)
        start = len(self.oram.leaves_read)
        out = []
        for addr, real in zip(order[perm], is_real[perm]):
            blob = self.oram.read(int(addr))
            if real:
                out.append(decode_record(blob))
        report = QueryReport(q, count, m, accesses, incident=count < m)
        if report.incident:
            self.incidents.append(report)
        self.trace.record(self.oram.leaves_read[start:], {"type": q.kind, "c": count})
        return out, report

    def query(self, q: Query) -> list[Record]:
        return self.execute(q, self.server_count(q))[0]

    def write_record(self, addr: int, record: Record) -> None:
        if addr >= self.oram.capacity:
            raise CapacityError(f"ORAM capacity {self.oram.capacity} exhausted")
        self.oram.write(addr, encode_record(record, self.payload_bytes))
        self.local.put(addr, record)

    def erase(self, addr: int) -> None:
        self.oram.write(addr, encode_record(DUMMY, self.payload_bytes))
        self.local.drop(addr)


def sanitize(records, types, eps_per_type: dict, beta: float, rng, domain: int | None,
             columns: int, k_h: int = 16, mechanism=Mechanism.LAPLACE) -> dict:
    """Build one sanitized index per query type from search keys only."""
    out = {}
    for t in types:
        if t == "range":
            hist = as_histogram([r.key for r in records], domain)
            out[t] = build_range_tree(hist, k_h, eps_per_type[t], beta, rng, mechanism)
        elif t == "point":
            hist = as_histogram([r.key for r in records], domain)
            out[t] = build_point_histogram(hist, eps_per_type[t], beta, rng, mechanism)
        elif t == "attribute":
            keys = np.asarray([r.attrs for r in records], dtype=np.int64).reshape(len(records), columns)
            out[t] = build_attribute_index(keys, eps_per_type[t], beta, rng, mechanism, k=columns)
        else:
            raise ParameterError(f"unknown query type {t!r}")
    return out


def split_budget(eps: float, types, shares: dict | None = None) -> dict:
    if shares:
        return {t: float(shares[t]) for t in types}
    return {t: eps / len(types) for t in types}


def dporam_setup(records, types=("range", "point", "attribute"), eps: float = 0.1,
                 beta: float = 2.0 ** -20, rng=None, domain: int | None = None,
                 columns: int | None = None, eps_per_type: dict | None = None, k_h: int = 16,
                 bucket_size: int = 4, capacity: int | None = None,
                 payload_bytes: int = DEFAULT_PAYLOAD_BYTES, mechanism=Mechanism.LAPLACE,
                 extra_per_record: float = 0.0) -> DpOramSystem:
    types = tuple(dict.fromkeys(types))
    if not types:
        raise ParameterError("enable at least one query type")
    for t in types:
        if t not in QUERY_TYPES:
            raise ParameterError(f"unknown query type {t!r}")
    records = list(records)
    if ("range" in types or "point" in types) and (domain is None or domain < 1):
        raise ParameterError("range/point queries need a domain size")
    if "attribute" in types:
        if columns is None:
            columns = len(records[0].attrs) if records else 0
        if columns < 1 or any(r.attrs is None or len(r.attrs) != columns for r in records):
            raise ParameterError("attribute queries need equal-length attribute vectors")
    columns = columns or 0
    rng = dp.make_rng(rng)
    shares = split_budget(eps, types, eps_per_type)
    budget = PrivacyBudget(sum(shares.values()) if eps_per_type else eps)
    for t in types:
        budget = budget.charge(f"{t}-index", shares[t])

    n = len(records)
    capacity = max(1, n if capacity is None else capacity)
    if capacity < n:
        raise ParameterError("ORAM capacity below record count")
    # header bytes of the record encoding ride inside each ORAM block
    block = len(encode_record(DUMMY, payload_bytes))
    oram = oram_init("path", capacity, block, rng, bucket_size=bucket_size)
    system = DpOramSystem(
        oram=oram,
        local=LocalIndex(capacity, columns),
        sanitized={},
        budget=budget,
        domain=domain,
        columns=columns,
        rng=rng,
        payload_bytes=payload_bytes,
        extra_per_record=extra_per_record,
    )
    for addr, r in enumerate(records):
        system.write_record(addr, r)
    system.sanitized = sanitize(records, types, shares, beta, rng, domain, columns, k_h, mechanism)
    return system


def dporam_query(system: DpOramSystem, q: Query) -> list[Record]:
    return system.query(q)
