import numpy as np
import pytest
from scipy import stats

from dpdb.errors import OramOverflowError, ParameterError
from dpdb.oram import LinearOram, Op, PathOram, linear_oram_access, oram_access, oram_init


def test_init_shape():
    o = oram_init("path", 8, 16, 0)
    assert o.bucket_count == 15 and o.slot_count == 60 and o.height == 3
    assert oram_init("path", 1, 16, 0).bucket_count == 1
    assert oram_init("path", 9, 16, 0).height == 4
    with pytest.raises(ParameterError):
        oram_init("tree", 8, 16, 0)
    with pytest.raises(ParameterError):
        oram_init("path", 0, 16, 0)


def test_read_before_write_is_empty():
    for engine in ("path", "linear"):
        o = oram_init(engine, 8, 16, 0)
        assert oram_access(o, Op.READ, 5) == b"\x00" * 16


def test_init_is_deterministic():
    a, b = oram_init("path", 32, 16, 9), oram_init("path", 32, 16, 9)
    assert [c.to_bytes() for c in a.server.buckets] == [c.to_bytes() for c in b.server.buckets]


def test_round_trip_both_engines():
    for engine in ("path", "linear"):
        o = oram_init(engine, 16, 8, 1)
        assert oram_access(o, "write", 3, b"abc") == b"\x00" * 8
        assert oram_access(o, "read", 3) == b"abc".ljust(8, b"\x00")
        assert oram_access(o, "write", 3, b"xyz") == b"abc".ljust(8, b"\x00")
        assert o.read(3) == b"xyz".ljust(8, b"\x00")


def test_access_validation():
    o = oram_init("path", 4, 4, 0)
    with pytest.raises(ParameterError):
        o.read(4)
    with pytest.raises(ParameterError):
        o.write(0, b"too long")
    with pytest.raises(ParameterError):
        o.access(Op.WRITE, 0)


def test_every_access_touches_one_path(rng):
    o = PathOram(64, 8, rng)
    for _ in range(10_000):
        before = len(o.server.touched)
        o.access(Op.WRITE if rng.random() < 0.5 else Op.READ, int(rng.integers(64)), b"v")
        (ids,) = o.server.touched[before:]
        assert len(ids) == o.height + 1
        assert ids[-1] == 0 and ids[0] >= o.leaf_count - 1
        assert all((c - 1) // 2 == p for c, p in zip(ids, ids[1:]))


def test_path_invariant(rng):
    o = PathOram(32, 8, rng)
    for step in range(400):
        o.write(int(rng.integers(32)), bytes([step % 256]))
        where = o.block_locations()
        for addr, bucket in where.items():
            assert bucket in o.path(int(o.position[addr]))
        assert not set(where) & set(o.stash)


def test_engines_agree_on_random_programs(rng):
    for _ in range(30):
        cap = int(rng.integers(1, 64))
        p, lin = PathOram(cap, 4, rng), LinearOram(cap, 4, rng)
        for _ in range(int(rng.integers(1, 200))):
            addr = int(rng.integers(cap))
            if rng.random() < 0.5:
                data = rng.bytes(4)
                assert oram_access(p, Op.WRITE, addr, data) == linear_oram_access(lin, Op.WRITE, addr, data)
            else:
                assert oram_access(p, Op.READ, addr) == linear_oram_access(lin, Op.READ, addr)


def test_linear_engine_touches_everything(rng):
    o = LinearOram(10, 4, rng)
    o.read(3)
    o.read(7)
    assert o.server.touched == [(0,), (0,)]
    assert o.slot_count == 10


def test_leaf_sequences_indistinguishable():
    passes = 0
    for run in range(10):
        rng = np.random.default_rng(run)
        a, b = PathOram(64, 4, rng), PathOram(64, 4, rng)
        for i in range(640):
            a.read(1)
            b.read(i % 64)
        table = np.array([np.bincount(a.leaves_read, minlength=64), np.bincount(b.leaves_read, minlength=64)])
        passes += stats.chi2_contingency(table)[1] > 0.01
    assert passes >= 8


def test_stash_overflow_raised(rng):
    o = PathOram(64, 4, rng, bucket_size=1, stash_limit=2)
    with pytest.raises(OramOverflowError):
        for i in range(2000):
            o.write(i % 64, b"x")


def test_server_counters(rng):
    o = PathOram(16, 4, rng)
    for i in range(10):
        o.read(i)
    assert o.server.bucket_reads == o.server.bucket_writes == 10 * (o.height + 1)
