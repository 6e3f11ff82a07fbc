"""Dynamic data over DP ORAM.

Updates are buffered locally; every ``u`` updates form a batch whose delta
(per-bin histogram change, per-column change of ones, record-count change)
becomes the next leaf of a binary counter tree. Each dyadic node of that
tree carries fresh noise once it is complete, and the current sanitized
index is the static one plus the noisy prefix sum over batches ``1..t``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import dp
from .crypto_store import DEFAULT_PAYLOAD_BYTES, DUMMY, Record, encode_record
from .dp import Mechanism, PrivacyBudget
from .dporam import DpOramSystem, dporam_setup
from .errors import CapacityError, ParameterError, UnsupportedOperationError
from .queries import Query
from .sanitizers import NoisyTree, build_range_tree
from .tree import KaryLayout


class UpdateKind(str, enum.Enum):
    ADD = "add"
    DELETE = "delete"
    MODIFY = "modify"


@dataclass(frozen=True)
class Update:
    kind: UpdateKind
    record_id: int | None = None
    key: int | None = None
    attrs: tuple[int, ...] | None = None
    payload: bytes = b""
    old_key: int | None = None

    @classmethod
    def add(cls, key=None, attrs=None, payload=b"", record_id=None) -> "Update":
        return cls(UpdateKind.ADD, record_id, key, None if attrs is None else tuple(attrs), payload)

    @classmethod
    def delete(cls, record_id: int) -> "Update":
        return cls(UpdateKind.DELETE, record_id)

    @classmethod
    def modify(cls, record_id: int, key=None, attrs=None, payload=b"") -> "Update":
        return cls(UpdateKind.MODIFY, record_id, key, None if attrs is None else tuple(attrs), payload)


def _apply(old: Record, upd: Update) -> Record:
    return Record(
        upd.payload or old.payload,
        old.key if upd.key is None else upd.key,
        old.attrs if upd.attrs is None else upd.attrs,
        old.rid,
    )


def parse_update(line: str) -> Update:
    """One JSON line ``{op, record_id?, old_key?, new_key?, attrs?, payload?}``."""
    try:
        obj = json.loads(line)
        kind = UpdateKind(obj["op"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ParameterError(f"malformed update line: {line!r}") from exc
    payload = obj.get("payload", "")
    return Update(
        kind=kind,
        record_id=obj.get("record_id"),
        key=obj.get("new_key"),
        attrs=None if obj.get("attrs") is None else tuple(obj["attrs"]),
        payload=payload.encode() if isinstance(payload, str) else bytes(payload),
        old_key=obj.get("old_key"),
    )


def read_updates(text: str) -> list[Update]:
    return [parse_update(line) for line in text.splitlines() if line.strip()]


def prefix_nodes(t: int) -> list[tuple[int, int]]:
    """Dyadic nodes ``(level, index)`` whose batch ranges tile ``[1, t]``."""
    nodes, pos = [], 0
    for level in range(max(t, 1).bit_length() - 1, -1, -1):
        if t >> level & 1:
            nodes.append((level, pos >> level))
            pos += 1 << level
    return nodes


def node_batches(level: int, index: int) -> tuple[int, int]:
    return index * (1 << level) + 1, (index + 1) * (1 << level)


class CounterTree:
    """Binary counter over batch deltas with noise on every completed node.

    ``release`` maps a node's true delta to its noisy released value; it is
    called exactly once per node, when the node's last batch arrives.
    """

    def __init__(self, horizon: int, release: Callable):
        if horizon < 1:
            raise ParameterError("horizon must be >= 1")
        self.horizon = horizon
        self.levels = math.ceil(math.log2(horizon)) + 1
        self.release = release
        self.true: dict[tuple[int, int], object] = {}
        self.noisy: dict[tuple[int, int], object] = {}
        self.t = 0

    def append(self, delta) -> list[tuple[int, int]]:
        if self.t >= self.horizon:
            raise CapacityError(f"update horizon of {self.horizon} batches exhausted")
        self.t += 1
        self.true[(0, self.t - 1)] = delta
        completed = [(0, self.t - 1)]
        level = 1
        while self.t % (1 << level) == 0:
            idx = self.t // (1 << level) - 1
            self.true[(level, idx)] = self.true[(level - 1, 2 * idx)] + self.true[(level - 1, 2 * idx + 1)]
            completed.append((level, idx))
            level += 1
        for node in completed:
            self.noisy[node] = self.release(self.true[node])
        return completed

    def prefix(self, t: int | None = None) -> list[tuple[int, int]]:
        return prefix_nodes(self.t if t is None else t)

    def nodes_containing(self, batch: int) -> list[tuple[int, int]]:
        """Noisy nodes a batch contributes to (so far)."""
        return [n for n in self.noisy if node_batches(*n)[0] <= batch <= node_batches(*n)[1]]


@dataclass(frozen=True)
class DynamicHistogram:
    """Point index after ``t`` batches: static release plus noisy deltas."""

    static: object
    deltas: tuple[np.ndarray, ...]
    node_offset: float

    kind = "point"

    def values(self) -> np.ndarray:
        total = self.static.released.astype(float)
        for d in self.deltas:
            total = total + d + self.node_offset
        return total

    def answer(self, q) -> int:
        return int(math.ceil(self.values()[q.point - 1] - 1e-9))


@dataclass(frozen=True)
class DynamicRangeIndex:
    static: NoisyTree
    deltas: tuple[NoisyTree, ...]

    kind = "range"

    def answer(self, q) -> int:
        total = 0.0
        for tree in (self.static,) + self.deltas:
            total += sum(tree.values[lv][i] for lv, i in tree.layout.cover(q.lo, q.hi))
        return int(math.ceil(total - 1e-9))


@dataclass(frozen=True)
class DynamicAttributeIndex:
    static: object
    deltas: tuple[np.ndarray, ...]
    node_offset: float
    n_change: int

    kind = "attribute"

    def answer(self, q) -> int:
        if q.bit:
            total = self.static.released_ones[q.column] + sum(d[q.column] + self.node_offset for d in self.deltas)
        else:
            total = (self.static.released_zeros[q.column] + self.n_change
                     + sum(self.node_offset - d[q.column] for d in self.deltas))
        return int(math.ceil(total - 1e-9))


@dataclass
class DynamicDpOram:
    base: DpOramSystem
    u: int
    horizon: int
    eps_update: float
    beta: float
    mechanism: Mechanism
    k_h: int
    hide_n: bool = False
    eps_count: float = 0.0
    buffer: list[Update] = field(default_factory=list)
    addr_of: dict[int, int] = field(default_factory=dict)
    current: dict[int, Record] = field(default_factory=dict)
    n0: int = 0
    next_free: int = 0
    padding: int = 0
    trees: dict = field(default_factory=dict)
    static: dict = field(default_factory=dict)
    stored: dict[int, Record] = field(default_factory=dict)

    @property
    def t(self) -> int:
        return next(iter(self.trees.values())).t if self.trees else 0

    @property
    def n(self) -> int:
        """Records in the flushed database."""
        return self.base.n

    @property
    def storage(self) -> int:
        return self.base.n + self.padding

    def _counter_levels(self) -> int:
        return math.ceil(math.log2(self.horizon)) + 1

    def _setup_trees(self, rng) -> None:
        levels = self._counter_levels()
        node_total = 2 * self.horizon - 1
        eps_u = self.eps_update
        mech = self.mechanism
        for kind, index in self.base.sanitized.items():
            self.static[kind] = index
            if kind == "point":
                scale = 2 * levels / eps_u
                off = dp.solve_min_offset(node_total * self.base.domain, scale, self.beta).mu
                self._point_offset = off
                self.trees[kind] = CounterTree(
                    self.horizon, lambda d, s=scale: d + dp.draw_noise(rng, s, d.shape, mech))
            elif kind == "range":
                layout = KaryLayout(self.base.domain, self.k_h)
                node_eps = eps_u / (2 * levels)
                scale = layout.levels / node_eps
                off = dp.solve_min_offset(node_total * layout.node_count, scale, self.beta).mu
                self.trees[kind] = CounterTree(
                    self.horizon,
                    lambda d, e=node_eps, o=off: build_range_tree(d, self.k_h, e, self.beta, rng, mech, offset=o))
            else:
                k = self.base.columns
                scale = k * levels / eps_u
                off = dp.solve_min_offset(2 * k * node_total, scale, self.beta).mu
                self._attr_offset = off
                self.trees[kind] = CounterTree(
                    self.horizon, lambda d, s=scale: d + dp.draw_noise(rng, s, d.shape, mech))
        if self.hide_n:
            scale = levels / self.eps_count
            self._count_offset = dp.solve_min_offset(node_total, scale, self.beta).mu
            self.count_tree = CounterTree(
                self.horizon, lambda d, s=scale: d + float(dp.draw_noise(rng, s, (), mech)))

    # -- updates -------------------------------------------------------------

    def _check(self, upd: Update) -> None:
        types = self.base.sanitized
        needs_key = "range" in types or "point" in types
        if upd.kind in (UpdateKind.DELETE, UpdateKind.MODIFY):
            if upd.record_id not in self.current:
                raise ParameterError(f"update references unknown record {upd.record_id}")
            if upd.old_key is not None and self.current[upd.record_id].key != upd.old_key:
                raise ParameterError(f"old_key {upd.old_key} does not match record {upd.record_id}")
        if upd.kind is UpdateKind.ADD and upd.record_id in self.current:
            raise ParameterError(f"record {upd.record_id} already exists")
        if upd.kind is not UpdateKind.DELETE:
            key = upd.key if upd.key is not None or upd.kind is UpdateKind.ADD else self.current[upd.record_id].key
            if needs_key and (key is None or not 1 <= key <= self.base.domain):
                raise ParameterError(f"key {key} outside [1, {self.base.domain}]")
            attrs = upd.attrs
            if attrs is None and upd.kind is UpdateKind.MODIFY:
                attrs = self.current[upd.record_id].attrs
            if "attribute" in types and (attrs is None or len(attrs) != self.base.columns
                                         or any(b not in (0, 1) for b in attrs)):
                raise ParameterError("attribute vector missing or malformed")

    def _resolve(self, upd: Update) -> Update:
        if upd.kind is UpdateKind.ADD and upd.record_id is None:
            rid = max(self.current, default=-1) + 1
            return Update(upd.kind, rid, upd.key, upd.attrs, upd.payload)
        return upd

    def _record_after(self, upd: Update) -> Record:
        if upd.kind is UpdateKind.ADD:
            return Record(upd.payload, upd.key, upd.attrs, upd.record_id)
        return _apply(self.current[upd.record_id], upd)

    def push_update(self, upd: Update) -> str:
        upd = self._resolve(upd)
        self._check(upd)
        if upd.kind is UpdateKind.DELETE:
            del self.current[upd.record_id]
        else:
            self.current[upd.record_id] = self._record_after(upd)
        self.buffer.append(upd)
        if len(self.buffer) >= self.u:
            self.flush_batch()
            return "flushed"
        return "buffered"

    def _deltas(self, batch: list[tuple[Record | None, Record | None]]) -> dict:
        out = {}
        for kind in self.trees:
            if kind in ("point", "range"):
                d = np.zeros(self.base.domain)
                for old, new in batch:
                    if old is not None:
                        d[old.key - 1] -= 1
                    if new is not None:
                        d[new.key - 1] += 1
            else:
                d = np.zeros(self.base.columns)
                for old, new in batch:
                    if old is not None:
                        d -= np.asarray(old.attrs)
                    if new is not None:
                        d += np.asarray(new.attrs)
            out[kind] = d
        return out

    def flush_batch(self) -> None:
        """Apply buffered updates to the ORAM and rebuild every sanitized index."""
        if not self.buffer:
            return
        batch: list[tuple[Record | None, Record | None]] = []
        for upd in self.buffer:
            if upd.kind is UpdateKind.ADD:
                if self.next_free >= self.base.oram.capacity:
                    raise CapacityError(f"ORAM capacity {self.base.oram.capacity} exhausted")
                addr = self.next_free
                self.next_free += 1
                old, new = None, Record(upd.payload, upd.key, upd.attrs, upd.record_id)
                self.addr_of[upd.record_id] = addr
            elif upd.kind is UpdateKind.DELETE:
                addr = self.addr_of.pop(upd.record_id)
                old, new = self.stored.pop(addr), None
            else:
                addr = self.addr_of[upd.record_id]
                old = self.stored[addr]
                new = _apply(old, upd)
            if new is None:
                self.base.erase(addr)
            else:
                self.base.write_record(addr, new)
                self.stored[addr] = new
            batch.append((old, new))
        self.buffer.clear()
        for kind, d in self._deltas(batch).items():
            self.trees[kind].append(d)
        if self.hide_n:
            change = sum((new is not None) - (old is not None) for old, new in batch)
            self.count_tree.append(float(change))
        self._rebuild()

    def _rebuild(self) -> None:
        for kind, tree in self.trees.items():
            nodes = tree.prefix()
            deltas = tuple(tree.noisy[n] for n in nodes)
            if kind == "point":
                idx = DynamicHistogram(self.static[kind], deltas, self._point_offset)
            elif kind == "range":
                idx = DynamicRangeIndex(self.static[kind], deltas)
            else:
                idx = DynamicAttributeIndex(self.static[kind], deltas, self._attr_offset, self.base.n - self.n0)
            self.base.sanitized[kind] = idx
        if self.hide_n:
            target = self.release_record_count()
            self._pad_to(target)

    def _pad_to(self, target: int) -> None:
        need = target - self.base.n - self.padding
        dummy = encode_record(DUMMY, self.base.payload_bytes)
        for _ in range(max(0, need)):
            if self.next_free >= self.base.oram.capacity:
                raise CapacityError("no spare ORAM capacity left for count padding")
            self.base.oram.write(self.next_free, dummy)
            self.base.local.allocated = max(self.base.local.allocated, self.next_free + 1)
            self.next_free += 1
            self.padding += 1

    # -- reads ---------------------------------------------------------------

    def release_record_count(self) -> int:
        """Noisy overcount of the flushed record count."""
        if not self.hide_n:
            raise UnsupportedOperationError("record counter is disabled (hide_n=False)")
        tree = self.count_tree
        total = self.n0 + sum(tree.noisy[n] + self._count_offset for n in tree.prefix())
        return int(math.ceil(total - 1e-9))

    def query(self, q: Query) -> list[Record]:
        answer, _ = self.base.execute(q, self.base.server_count(q))
        pending = {}
        for upd in self.buffer:
            pending[upd.record_id] = self.current.get(upd.record_id)
        out = [r for r in answer if r.rid not in pending]
        out.extend(r for r in pending.values() if r is not None and q.matches(r))
        return out

    def snapshot(self) -> list[Record]:
        """Client view of the logical database (flushed plus buffered)."""
        return list(self.current.values())


def make_dynamic(system, u: int = 64, horizon: int = 1024, eps_update: float = 0.1,
                 beta: float = 2.0 ** -20, rng=None, k_h: int = 16,
                 mechanism=Mechanism.LAPLACE, hide_n: bool = False,
                 eps_count: float = 0.0, records=None) -> DynamicDpOram:
    """Attach the update machinery to a DP ORAM system built by :func:`dporam_setup`."""
    if not isinstance(system, DpOramSystem):
        raise UnsupportedOperationError(
            f"{type(system).__name__} cannot be updated in place; only DP ORAM supports dynamic data"
        )
    if u < 1:
        raise ParameterError("batch size u must be >= 1")
    if hide_n and not eps_count > 0:
        raise ParameterError("hide_n needs a positive eps_count")
    types = tuple(system.sanitized)
    budget = PrivacyBudget(system.budget.total + eps_update * len(types) + (eps_count if hide_n else 0.0),
                           system.budget.ledger)
    for t in types:
        budget = budget.charge(f"{t}-updates", eps_update)
    if hide_n:
        budget = budget.charge("record-count", eps_count)
    system.budget = budget
    dyn = DynamicDpOram(system, u, horizon, eps_update, beta, Mechanism(mechanism), k_h, hide_n, eps_count)
    recs = list(records) if records is not None else []
    for addr, r in enumerate(recs):
        dyn.addr_of[r.rid] = addr
        dyn.current[r.rid] = r
        dyn.stored[addr] = r
    dyn.n0 = system.n
    dyn.next_free = system.local.allocated
    dyn._setup_trees(dp.make_rng(rng) if rng is not None else system.rng)
    return dyn


def dynamic_setup(records, types=("range", "point", "attribute"), eps: float = 0.1,
                  eps_update: float = 0.1, beta: float = 2.0 ** -20, rng=None,
                  domain: int | None = None, columns: int | None = None, u: int = 64,
                  horizon: int = 1024, headroom: float = 2.0, k_h: int = 16,
                  mechanism=Mechanism.LAPLACE, hide_n: bool = False, eps_count: float = 0.0,
                  payload_bytes: int = DEFAULT_PAYLOAD_BYTES, bucket_size: int = 4) -> DynamicDpOram:
    records = list(records)
    capacity = max(1, math.ceil(headroom * len(records)), len(records) + u)
    if hide_n:
        # count padding is at most the prefix node offsets plus noise, w.h.p.
        levels = math.ceil(math.log2(horizon)) + 1
        off = dp.solve_min_offset(2 * horizon - 1, levels / eps_count, beta).mu
        capacity += math.ceil(2 * levels * off)
    system = dporam_setup(records, types, eps, beta, rng, domain, columns, k_h=k_h,
                          bucket_size=bucket_size, capacity=capacity,
                          payload_bytes=payload_bytes, mechanism=mechanism)
    return make_dynamic(system, u, horizon, eps_update, beta, None, k_h, mechanism,
                        hide_n, eps_count, records)
