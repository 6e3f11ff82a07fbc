"""Bucketized storage for range queries in the atomic model.

A noisy cumulative histogram from an unbiased k-ary tree fixes ``b`` bucket
borders holding about ``ceil(n / b)`` records each. Every bucket is padded
with encrypted dummies to the same capacity ``ceil(n / b) + mu_b``, and a
range query fetches every bucket its interval touches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dp
from .crypto_store import DUMMY, MockCipher, Record, ServerStore, server_fetch, DEFAULT_PAYLOAD_BYTES
from .dp import Mechanism, PrivacyBudget
from .errors import BucketOverflowError, ParameterError, UnsupportedOperationError
from .sanitizers import as_histogram, build_range_tree, cumulative_from_tree

DEFAULT_ARITY = 16


def default_bucket_count(N: int) -> int:
    return max(1, min(N, round(4 * math.log2(N)))) if N > 1 else 1


@dataclass(frozen=True)
class BucketPlan:
    """Bucket ``j`` covers keys ``borders[j] + 1 .. borders[j + 1]``."""

    borders: tuple[int, ...]
    capacity: int
    base: int
    mu_b: int

    @property
    def b(self) -> int:
        return len(self.borders) - 1

    @property
    def ranges(self) -> list[tuple[int, int]]:
        return [(self.borders[j] + 1, self.borders[j + 1]) for j in range(self.b)]

    @property
    def storage(self) -> int:
        return self.b * self.capacity

    def touched(self, lo: int, hi: int) -> list[int]:
        """Buckets whose interval intersects ``[lo, hi]``."""
        first = int(np.searchsorted(self.borders, lo, side="left")) - 1
        last = int(np.searchsorted(self.borders, hi, side="left")) - 1
        return list(range(first, last + 1))


def place_borders(cdf: np.ndarray, n: int, b: int) -> tuple[int, ...]:
    """Smallest position reaching each multiple of ``ceil(n / b)``, kept strictly increasing."""
    N = len(cdf)
    per = math.ceil(n / b)
    borders = [0]
    for j in range(1, b):
        pos = int(np.searchsorted(cdf, j * per, side="left")) + 1
        pos = max(pos, borders[-1] + 1)
        borders.append(min(pos, N - (b - j)))
    borders.append(N)
    return tuple(borders)


def plan_buckets(hist, b: int, k_b: int, eps: float, beta: float, rng,
                 mechanism=Mechanism.LAPLACE) -> BucketPlan:
    """Noisy border placement and padded capacity; consumes ``eps``."""
    hist = np.asarray(hist, dtype=np.int64)
    N, n = len(hist), int(hist.sum())
    if N < 2:
        raise ParameterError("range storage needs N >= 2")
    if not 1 <= b <= N:
        raise ParameterError(f"bucket count must be in [1, {N}], got {b}")
    tree = build_range_tree(hist, k_b, eps, beta, rng, mechanism, offset=0.0)
    borders = place_borders(cumulative_from_tree(tree), n, b)
    mu_b = int(dp.solve_bucket_offset(n, b, k_b, N, eps, beta).mu)
    base = math.ceil(n / b)
    plan = BucketPlan(borders, base + mu_b, base, mu_b)
    cum = np.concatenate([[0], np.cumsum(hist)])
    loads = [int(cum[hi] - cum[lo - 1]) for lo, hi in plan.ranges]
    worst = max(loads)
    if worst > plan.capacity:
        raise BucketOverflowError(
            f"bucket {loads.index(worst)} holds {worst} records, capacity {plan.capacity}"
        )
    return plan


@dataclass
class RangeClientIndex:
    plan: BucketPlan
    offsets: tuple[int, ...]
    cipher: MockCipher
    domain: int
    n: int
    budget: PrivacyBudget

    @property
    def storage(self) -> int:
        return self.plan.storage

    @property
    def storage_efficiency(self) -> float:
        return self.storage / self.n if self.n else math.inf

    def fetch_indices(self, lo: int, hi: int) -> list[int]:
        if not 1 <= lo <= hi <= self.domain:
            raise ParameterError(f"range [{lo}, {hi}] outside [1, {self.domain}]")
        cap = self.plan.capacity
        out: list[int] = []
        for j in self.plan.touched(lo, hi):
            out.extend(range(self.offsets[j], self.offsets[j] + cap))
        return out

    def communication(self, lo: int, hi: int) -> int:
        return len(self.plan.touched(lo, hi)) * self.plan.capacity

    def push_update(self, *_):
        raise UnsupportedOperationError(
            "atomic range storage cannot absorb updates without a full private rebuild"
        )


def range_setup(records: list[Record], N: int, b: int | None = None, k_b: int = DEFAULT_ARITY,
                eps: float = 0.1, beta: float = 2.0 ** -20, rng=None, mechanism=Mechanism.LAPLACE,
                payload_bytes: int = DEFAULT_PAYLOAD_BYTES,
                budget: PrivacyBudget | None = None) -> tuple[RangeClientIndex, ServerStore]:
    rng = dp.make_rng(rng)
    b = default_bucket_count(N) if b is None else b
    budget = (budget or PrivacyBudget(eps)).charge("range-tree", eps)
    cipher = MockCipher.generate(rng, payload_bytes)
    keys = [r.key for r in records]
    plan = plan_buckets(as_histogram(keys, N), b, k_b, eps, beta, rng, mechanism)

    members: list[list[Record]] = [[] for _ in range(plan.b)]
    for r in records:
        members[plan.touched(r.key, r.key)[0]].append(r)
    ds1, offsets = [], []
    for bucket in members:
        offsets.append(len(ds1))
        slots = bucket + [DUMMY] * (plan.capacity - len(bucket))
        # position inside a bucket must depend only on the permutation, not payloads
        for i in rng.permutation(len(slots)):
            ds1.append(cipher.encrypt(slots[i], rng))
    ds2 = {"offsets": tuple(offsets), "capacity": plan.capacity}
    index = RangeClientIndex(plan, tuple(offsets), cipher, N, len(records), budget)
    return index, ServerStore(ds1, ds2)


def range_query(index: RangeClientIndex, store: ServerStore, lo: int, hi: int) -> list[Record]:
    indices = index.fetch_indices(lo, hi)
    cts = server_fetch(store, indices, {"type": "range", "lo": lo, "hi": hi})
    out = []
    for ct in cts:
        r = index.cipher.decrypt(ct)
        if not r.is_dummy and lo <= r.key <= hi:
            out.append(r)
    return out
