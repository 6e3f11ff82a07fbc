"""DP ORAM with all three query types; compare noisy counts with true matches.

Run: python3 demos/dp_oram_walkthrough.py
"""

import numpy as np

from dpdb import AttributeQuery, PointQuery, RangeQuery, Record, dporam_setup

rng = np.random.default_rng(11)
N, k, n = 64, 4, 600
keys = rng.integers(1, N + 1, size=n)
bits = rng.integers(0, 2, size=(n, k))
records = [Record(f"row-{i}".encode(), int(keys[i]), tuple(int(b) for b in bits[i]), i) for i in range(n)]

system = dporam_setup(records, ("range", "point", "attribute"), eps=1.0, rng=rng, domain=N, columns=k)
print(f"ORAM: {system.oram.bucket_count} buckets of {system.oram.Z} slots, path length {system.path_length}")
print("budget ledger:", [(c.label, round(c.epsilon, 3)) for c in system.budget.ledger])

for q in (RangeQuery(10, 30), PointQuery(5), AttributeQuery(2, 1)):
    answer, rep = system.execute(q, system.server_count(q))
    print(f"{q}: true {rep.matches}, noisy count c = {rep.count}, ORAM reads {rep.accesses}, "
          f"answer size {len(answer)}")

print(f"physical bucket reads so far: {system.oram.server.bucket_reads}, incidents: {len(system.incidents)}")
