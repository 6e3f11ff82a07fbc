"""Stream updates into a DP ORAM and watch the counter tree grow.

Run: python3 demos/dynamic_updates.py
"""

import numpy as np

from dpdb import PointQuery, Record, Update, dynamic_setup

rng = np.random.default_rng(3)
N = 32
records = [Record(f"r{i}".encode(), int(rng.integers(1, N + 1)), rid=i) for i in range(100)]
dyn = dynamic_setup(records, types=("point",), eps=2.0, eps_update=2.0, rng=rng, domain=N, u=4, horizon=16)

next_id = 100
for step in range(24):
    if step % 3 == 2:
        status = dyn.push_update(Update.delete(int(rng.choice(list(dyn.current)))))
    else:
        status = dyn.push_update(Update.add(key=int(rng.integers(1, N + 1)), payload=b"new", record_id=next_id))
        next_id += 1
    if status == "flushed":
        nodes = dyn.trees["point"].prefix()
        print(f"batch {dyn.t:2d}: prefix uses {len(nodes)} noisy node(s) {nodes}")

q = PointQuery(7)
got = dyn.query(q)
truth = sum(r.key == 7 for r in dyn.snapshot())
print(f"\npoint 7: {len(got)} records returned, {truth} expected; noisy count {dyn.base.server_count(q)}")
