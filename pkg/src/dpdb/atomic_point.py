"""Point-query storage in the atomic model.

The plain variant pads every domain bin to a noisy overcount of its size.
The hashed variant first spends part of the budget to find light bins,
packs them into fewer buckets with two-choice hashing, and pads the merged
groups with the rest of the budget.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from . import dp
from .crypto_store import DUMMY, DEFAULT_PAYLOAD_BYTES, MockCipher, Record, ServerStore, server_fetch
from .dp import Mechanism, PrivacyBudget
from .errors import ParameterError, UnsupportedOperationError
from .sanitizers import as_histogram, build_point_histogram


def default_threshold(eps: float) -> float:
    return 10 * math.sqrt(2) / eps


def default_bucket_total(light_bins: int) -> int:
    return math.ceil(20 * math.sqrt(light_bins))


def two_choice_hash(item: int, seed: bytes, buckets: int) -> int:
    digest = hashlib.blake2b(item.to_bytes(8, "big"), key=seed, digest_size=8).digest()
    return int.from_bytes(digest, "big") % buckets


def two_choice_assign(items, buckets: int, seeds: tuple[bytes, bytes]) -> tuple[dict[int, int], np.ndarray]:
    """Place each item in the less loaded of its two hashed buckets (ties go to the first)."""
    load = np.zeros(buckets, dtype=np.int64)
    placement = {}
    for item in items:
        c1 = two_choice_hash(item, seeds[0], buckets)
        c2 = two_choice_hash(item, seeds[1], buckets)
        choice = c2 if load[c2] < load[c1] else c1
        placement[item] = choice
        load[choice] += 1
    return placement, load


@dataclass(frozen=True)
class HashingParams:
    theta: float
    light_bins: int
    bucket_total: int
    split: tuple[float, float]


@dataclass(frozen=True)
class PointGroups:
    """Mapping of domain bins onto padded slot groups."""

    group_of: np.ndarray  # bin (0-based) -> group id
    sizes: np.ndarray  # padded length per group
    true_sizes: np.ndarray
    hashing: HashingParams | None = None

    @property
    def storage(self) -> int:
        return int(self.sizes.sum())


def plan_plain(hist, eps: float, beta: float, rng, mechanism=Mechanism.LAPLACE) -> PointGroups:
    hist = np.asarray(hist, dtype=np.int64)
    released = build_point_histogram(hist, eps, beta, rng, mechanism).released
    return PointGroups(np.arange(len(hist)), released, hist)


def plan_hashed(hist, eps: float, beta: float, rng, theta: float | None = None,
                bucket_total: int | None = None, split: float = 0.5,
                mechanism=Mechanism.LAPLACE) -> PointGroups:
    hist = np.asarray(hist, dtype=np.int64)
    N = len(hist)
    if not 0 < split < 1:
        raise ParameterError(f"budget split must be in (0, 1), got {split}")
    eps_classify, eps_pad = eps * split, eps * (1 - split)
    theta = default_threshold(eps) if theta is None else float(theta)
    if theta < 0:
        raise ParameterError("threshold must be non-negative")
    rng = dp.make_rng(rng)
    noisy = hist + dp.draw_noise(rng, 1.0 / eps_classify, hist.shape, mechanism)
    light = np.flatnonzero(noisy < theta)
    heavy = np.flatnonzero(noisy >= theta)
    n_light = len(light)
    if bucket_total is None:
        bucket_total = default_bucket_total(n_light)
    bucket_total = min(int(bucket_total), n_light)
    if n_light and bucket_total < 1:
        raise ParameterError("need at least one bucket for light bins")
    seeds = (rng.bytes(16), rng.bytes(16))
    group_of = np.empty(N, dtype=np.int64)
    group_of[heavy] = np.arange(len(heavy))
    if n_light:
        placement, _ = two_choice_assign(light.tolist(), bucket_total, seeds)
        for item, bucket in placement.items():
            group_of[item] = len(heavy) + bucket
    groups = len(heavy) + bucket_total
    merged = np.bincount(group_of, weights=hist, minlength=groups).astype(np.int64)
    released = build_point_histogram(merged, eps_pad, beta, rng, mechanism).released
    params = HashingParams(theta, n_light, bucket_total, (eps_classify, eps_pad))
    return PointGroups(group_of, released, merged, params)


@dataclass
class PointClientIndex:
    variant: str
    groups: PointGroups
    offsets: np.ndarray
    cipher: MockCipher
    domain: int
    n: int
    budget: PrivacyBudget

    @property
    def storage(self) -> int:
        return self.groups.storage

    @property
    def storage_efficiency(self) -> float:
        return self.storage / self.n if self.n else math.inf

    def group(self, point: int) -> int:
        if not 1 <= point <= self.domain:
            raise ParameterError(f"point {point} outside [1, {self.domain}]")
        return int(self.groups.group_of[point - 1])

    def fetch_indices(self, point: int) -> list[int]:
        g = self.group(point)
        start = int(self.offsets[g])
        return list(range(start, start + int(self.groups.sizes[g])))

    def communication(self, point: int) -> int:
        return int(self.groups.sizes[self.group(point)])

    def push_update(self, *_):
        raise UnsupportedOperationError(
            "atomic point storage cannot absorb updates without a full private rebuild"
        )


def _materialize(records, groups: PointGroups, cipher: MockCipher, rng) -> tuple[list, np.ndarray]:
    members: list[list[Record]] = [[] for _ in range(len(groups.sizes))]
    for r in records:
        members[groups.group_of[r.key - 1]].append(r)
    ds1, offsets = [], []
    for g, bucket in enumerate(members):
        offsets.append(len(ds1))
        slots = bucket + [DUMMY] * (int(groups.sizes[g]) - len(bucket))
        for i in rng.permutation(len(slots)):
            ds1.append(cipher.encrypt(slots[i], rng))
    return ds1, np.asarray(offsets, dtype=np.int64)


def _keys(records, N: int):
    if N < 1:
        raise ParameterError("domain size must be >= 1")
    return as_histogram([r.key for r in records], N)


def point_setup_plain(records, N: int, eps: float = 0.1, beta: float = 2.0 ** -20, rng=None,
                      mechanism=Mechanism.LAPLACE, payload_bytes: int = DEFAULT_PAYLOAD_BYTES,
                      budget: PrivacyBudget | None = None) -> tuple[PointClientIndex, ServerStore]:
    rng = dp.make_rng(rng)
    budget = (budget or PrivacyBudget(eps)).charge("point-histogram", eps)
    cipher = MockCipher.generate(rng, payload_bytes)
    groups = plan_plain(_keys(records, N), eps, beta, rng, mechanism)
    ds1, offsets = _materialize(records, groups, cipher, rng)
    index = PointClientIndex("plain", groups, offsets, cipher, N, len(records), budget)
    return index, ServerStore(ds1, {"group_sizes": tuple(int(s) for s in groups.sizes)})


def point_setup_hashed(records, N: int, eps: float = 0.1, beta: float = 2.0 ** -20,
                       theta: float | None = None, bucket_total: int | None = None, rng=None,
                       split: float = 0.5, mechanism=Mechanism.LAPLACE,
                       payload_bytes: int = DEFAULT_PAYLOAD_BYTES,
                       budget: PrivacyBudget | None = None) -> tuple[PointClientIndex, ServerStore]:
    rng = dp.make_rng(rng)
    budget = (budget or PrivacyBudget(eps)).charge("point-classify", eps * split)
    budget = budget.charge("point-histogram", eps * (1 - split))
    cipher = MockCipher.generate(rng, payload_bytes)
    groups = plan_hashed(_keys(records, N), eps, beta, rng, theta, bucket_total, split, mechanism)
    ds1, offsets = _materialize(records, groups, cipher, rng)
    index = PointClientIndex("hashed", groups, offsets, cipher, N, len(records), budget)
    return index, ServerStore(ds1, {"group_sizes": tuple(int(s) for s in groups.sizes)})


def point_query(index: PointClientIndex, store: ServerStore, point: int) -> list[Record]:
    cts = server_fetch(store, index.fetch_indices(point), {"type": "point", "point": point})
    out = []
    for ct in cts:
        r = index.cipher.decrypt(ct)
        if not r.is_dummy and r.key == point:
            out.append(r)
    return out
