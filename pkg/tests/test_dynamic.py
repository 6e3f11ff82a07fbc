import math

import numpy as np
import pytest

from conftest import make_records, random_records
from dpdb.atomic_point import point_setup_plain
from dpdb.atomic_range import range_setup
from dpdb.dp import Mechanism
from dpdb.dporam import dporam_setup
from dpdb.dynamic import (
    CounterTree,
    Update,
    UpdateKind,
    dynamic_setup,
    make_dynamic,
    node_batches,
    parse_update,
    prefix_nodes,
    read_updates,
)
from dpdb.errors import CapacityError, ParameterError, UnsupportedOperationError
from dpdb.queries import AttributeQuery, PointQuery, RangeQuery, plaintext_filter

BETA = 2.0 ** -20
NONE = Mechanism.NONE


def rids(records):
    return sorted(r.rid for r in records)


def spans(nodes):
    return [node_batches(*n) for n in nodes]


def test_prefix_decomposition():
    assert spans(prefix_nodes(1)) == [(1, 1)]
    assert spans(prefix_nodes(6)) == [(1, 4), (5, 6)]
    for t in range(1, 300):
        nodes = prefix_nodes(t)
        assert len(nodes) <= math.ceil(math.log2(t)) + 1
        covered = [x for lo, hi in spans(nodes) for x in range(lo, hi + 1)]
        assert covered == list(range(1, t + 1))


def test_counter_tree_nodes_per_batch():
    tree = CounterTree(64, lambda d: d)
    for t in range(1, 65):
        tree.append(np.array([t]))
        assert sum(tree.noisy[n][0] for n in tree.prefix()) == t * (t + 1) // 2
    for batch in range(1, 65):
        assert len(tree.nodes_containing(batch)) <= math.ceil(math.log2(64)) + 1
    with pytest.raises(CapacityError):
        tree.append(np.array([0]))


def test_release_called_once_per_node():
    calls = []
    tree = CounterTree(8, lambda d: calls.append(1) or d)
    for _ in range(8):
        tree.append(np.zeros(2))
    assert len(calls) == 15


def small_system(rng, n=20, N=8, k=2, eps=1.0, horizon=64, **kw):
    recs = random_records(rng, n, N, k=k)
    kw.setdefault("mechanism", NONE)
    return recs, dynamic_setup(recs, eps=eps, eps_update=eps, rng=rng, domain=N, u=4, horizon=horizon, **kw)


def test_push_threshold(rng):
    _, dyn = small_system(rng)
    outcomes = [dyn.push_update(Update.add(key=1, attrs=(0, 1))) for _ in range(4)]
    assert outcomes == ["buffered"] * 3 + ["flushed"]
    assert dyn.t == 1 and not dyn.buffer


def test_modify_deltas(rng):
    recs, dyn = small_system(rng)
    rid = recs[0].rid
    dyn.push_update(Update.modify(rid, attrs=tuple(1 - b for b in recs[0].attrs)))
    for _ in range(3):
        dyn.push_update(Update.modify(rid, payload=b"p"))
    # no key change: every point delta is zero
    assert not np.any(dyn.trees["point"].true[(0, 0)])
    old = dyn.current[rid].key
    new = old % 8 + 1
    for _ in range(3):
        dyn.push_update(Update.modify(rid, payload=b"q"))
    dyn.push_update(Update.modify(rid, key=new))
    delta = dyn.trees["point"].true[(0, 1)]
    assert delta[old - 1] == -1 and delta[new - 1] == 1 and np.count_nonzero(delta) == 2


def test_noise_off_rebuild_is_exact_plus_offsets(rng):
    recs, dyn = small_system(rng)
    for i in range(8):
        dyn.push_update(Update.add(key=(i % 8) + 1, attrs=(1, 0)))
    hist = np.bincount([r.key - 1 for r in dyn.snapshot()], minlength=8)
    idx = dyn.base.sanitized["point"]
    extra = math.ceil(idx.static.offset) + len(prefix_nodes(dyn.t)) * idx.node_offset
    assert np.allclose(idx.values() - extra, hist)


def test_buffered_overlay(rng):
    recs, dyn = small_system(rng)
    new = Update.add(key=3, attrs=(1, 1), record_id=1000)
    dyn.push_update(new)
    assert 1000 in rids(dyn.query(PointQuery(3)))
    victim = next(r for r in recs if r.key is not None)
    dyn.push_update(Update.delete(victim.rid))
    assert victim.rid not in rids(dyn.query(PointQuery(victim.key)))


def test_random_replay(rng):
    recs, dyn = small_system(rng, n=30, N=16, k=2, eps=20.0, horizon=32, mechanism=Mechanism.LAPLACE)
    oracle = {r.rid: r for r in recs}
    for step in range(150):
        if rng.random() < 0.5:
            op = rng.integers(3) if oracle else 0
            if op == 0:
                upd = Update.add(key=int(rng.integers(1, 17)), attrs=tuple(rng.integers(0, 2, 2)))
            elif op == 1:
                upd = Update.delete(int(rng.choice(list(oracle))))
            else:
                upd = Update.modify(int(rng.choice(list(oracle))), key=int(rng.integers(1, 17)))
            dyn.push_update(upd)
            oracle = {r.rid: r for r in dyn.snapshot()}
        a, b = sorted(int(x) for x in rng.integers(1, 17, size=2))
        for q in (RangeQuery(a, b), PointQuery(a), AttributeQuery(int(rng.integers(2)), int(rng.integers(2)))):
            assert rids(dyn.query(q)) == rids(plaintext_filter(oracle.values(), q))
    assert not dyn.base.incidents


def test_record_counter(rng):
    recs, dyn = small_system(rng, hide_n=True, eps_count=1.0)
    assert dyn.release_record_count() >= len(recs)
    for i in range(12):
        dyn.push_update(Update.add(key=2, attrs=(0, 0)))
    nodes = prefix_nodes(dyn.t)
    assert dyn.release_record_count() == math.ceil(len(recs) + 12 + len(nodes) * dyn._count_offset - 1e-9)
    assert dyn.storage >= dyn.release_record_count()


def test_record_counter_disabled(rng):
    _, dyn = small_system(rng)
    with pytest.raises(UnsupportedOperationError):
        dyn.release_record_count()


def test_atomic_stores_refuse_dynamics(rng):
    recs = random_records(rng, 10, 8)
    for setup in (range_setup, point_setup_plain):
        index, _ = setup(recs, 8, eps=1.0, rng=rng)
        with pytest.raises(UnsupportedOperationError):
            make_dynamic(index)


def test_malformed_updates(rng):
    _, dyn = small_system(rng)
    with pytest.raises(ParameterError):
        dyn.push_update(Update.delete(999))
    with pytest.raises(ParameterError):
        dyn.push_update(Update.add(key=99, attrs=(0, 0)))
    with pytest.raises(ParameterError):
        dyn.push_update(Update.add(key=1, attrs=(0,)))
    with pytest.raises(ParameterError):
        parse_update('{"op": "upsert"}')
    with pytest.raises(ParameterError):
        parse_update("not json")


def test_capacity_exhaustion(rng):
    recs = random_records(rng, 4, 8)
    sys = dporam_setup(recs, ("point",), 1.0, BETA, rng, domain=8, capacity=5)
    dyn = make_dynamic(sys, u=1, horizon=16, eps_update=1.0, records=recs)
    dyn.push_update(Update.add(key=1))
    with pytest.raises(CapacityError):
        dyn.push_update(Update.add(key=1))


def test_jsonl_updates():
    ups = read_updates('{"op": "add", "new_key": 3, "payload": "x"}\n\n'
                       '{"op": "modify", "record_id": 2, "old_key": 1, "new_key": 4}\n'
                       '{"op": "delete", "record_id": 5}\n')
    assert [u.kind for u in ups] == [UpdateKind.ADD, UpdateKind.MODIFY, UpdateKind.DELETE]
    assert ups[0].key == 3 and ups[0].payload == b"x"
    assert ups[1].old_key == 1 and ups[1].key == 4


def test_hide_n_padding_grows_slowly(rng):
    recs = random_records(rng, 50, 8)
    dyn = dynamic_setup(recs, ("point",), 1.0, 1.0, BETA, rng, domain=8, u=1, horizon=64,
                        hide_n=True, eps_count=1.0, mechanism=NONE)
    pads = []
    for t in range(1, 65):
        dyn.push_update(Update.add(key=1))
        pads.append(dyn.padding)
    # padding tracks the number of prefix nodes (at most log2(t) + 1 offsets)
    assert max(pads) <= (math.log2(64) + 1) * dyn._count_offset + 1
