"""Walk through an atomic range store: setup, one query, what the server saw.

Run: python3 demos/range_store_walkthrough.py
"""

import numpy as np

from dpdb import Record, range_query, range_setup

rng = np.random.default_rng(7)
N = 256
keys = np.clip(rng.normal(128, 30, size=2000).round().astype(int), 1, N)
records = [Record(payload=f"patient-{i}".encode(), key=int(k), rid=i) for i, k in enumerate(keys)]

index, store = range_setup(records, N, eps=1.0, rng=rng)
plan = index.plan
print(f"{len(records)} records in {plan.b} buckets of capacity {plan.capacity} "
      f"(base {plan.base} + padding {plan.mu_b})")
print(f"server stores n' = {store.size} ciphertexts, storage efficiency {index.storage_efficiency:.2f}")
print("bucket borders:", plan.borders[:8], "...")

lo, hi = 100, 140
answer = range_query(index, store, lo, hi)
truth = sum(lo <= r.key <= hi for r in records)
last = store.trace.queries[-1]
print(f"\nrange [{lo}, {hi}]: {len(answer)} matches (plaintext count {truth})")
print(f"server returned m' = {last.m_prime} ciphertexts from buckets {plan.touched(lo, hi)}")
print(f"communication efficiency m'/m = {last.m_prime / max(1, truth):.2f}")
