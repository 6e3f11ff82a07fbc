"""Oblivious RAM engines.

:class:`PathOram` is the production engine: a binary tree of buckets holding
``Z`` encrypted slots each, a client-side position map and stash, and one
root-to-leaf path read and rewritten per access. :class:`LinearOram` touches
every slot on every access and serves as a correctness oracle.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

from .crypto_store import Ciphertext, MockCipher
from .dp import make_rng
from .errors import OramOverflowError, ParameterError

_ADDR = struct.Struct(">q")
DUMMY_ADDR = -1


class Op(str, enum.Enum):
    READ = "read"
    WRITE = "write"


@dataclass
class OramServer:
    """Untrusted memory: a flat array of buckets plus what the server saw."""

    buckets: list[Ciphertext]
    touched: list[tuple[int, ...]] = field(default_factory=list)
    bucket_reads: int = 0
    bucket_writes: int = 0

    def read(self, ids) -> list[Ciphertext]:
        ids = tuple(ids)
        self.touched.append(ids)
        self.bucket_reads += len(ids)
        return [self.buckets[i] for i in ids]

    def write(self, ids, contents) -> None:
        for i, slots in zip(ids, contents):
            self.buckets[i] = slots
        self.bucket_writes += len(ids)


class _Engine:
    def __init__(self, capacity: int, payload_bytes: int, rng, cipher: MockCipher | None):
        if capacity < 1:
            raise ParameterError(f"ORAM capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.payload_bytes = int(payload_bytes)
        self.rng = make_rng(rng)
        self.cipher = cipher or MockCipher.generate(self.rng, payload_bytes)
        self.empty = b"\x00" * self.payload_bytes
        self.slot_bytes = _ADDR.size + self.payload_bytes
        self.accesses = 0

    def _seal(self, slots: list[tuple[int, bytes]]) -> Ciphertext:
        """Encrypt a group of slots under one fresh nonce."""
        return self.cipher.encrypt_bytes(b"".join(_ADDR.pack(a) + p for a, p in slots), self.rng)

    def _open(self, ct: Ciphertext) -> list[tuple[int, bytes]]:
        blob = self.cipher.decrypt_bytes(ct)
        w, head = self.slot_bytes, _ADDR.size
        return [
            (_ADDR.unpack_from(blob, off)[0], blob[off + head: off + w])
            for off in range(0, len(blob), w)
        ]

    def _check(self, op, addr: int, data) -> tuple[Op, bytes | None]:
        op = Op(op)
        if not 0 <= addr < self.capacity:
            raise ParameterError(f"address {addr} outside [0, {self.capacity})")
        if op is Op.WRITE:
            if data is None:
                raise ParameterError("write needs data")
            if len(data) > self.payload_bytes:
                raise ParameterError(f"payload longer than {self.payload_bytes} bytes")
            data = bytes(data).ljust(self.payload_bytes, b"\x00")
        return op, data

    def read(self, addr: int) -> bytes:
        return self.access(Op.READ, addr)

    def write(self, addr: int, data: bytes) -> bytes:
        return self.access(Op.WRITE, addr, data)


class PathOram(_Engine):
    """Path ORAM with ``Z`` slots per bucket (default 4).

    Each bucket is stored as one ciphertext over its ``Z`` fixed-size slots,
    so rewriting a path re-randomizes every slot on it.
    """

    def __init__(self, capacity: int, payload_bytes: int, rng=None, bucket_size: int = 4,
                 stash_limit: int = 256, cipher: MockCipher | None = None):
        super().__init__(capacity, payload_bytes, rng, cipher)
        self.Z = int(bucket_size)
        self.stash_limit = int(stash_limit)
        self.height = max(0, (self.capacity - 1).bit_length())
        self.leaf_count = 1 << self.height
        self.position = self.rng.integers(0, self.leaf_count, size=self.capacity)
        self.stash: dict[int, bytes] = {}
        self.max_stash = 0
        self.leaves_read: list[int] = []
        empty_bucket = [(DUMMY_ADDR, self.empty)] * self.Z
        self.server = OramServer([self._seal(empty_bucket) for _ in range(2 * self.leaf_count - 1)])

    @property
    def bucket_count(self) -> int:
        return len(self.server.buckets)

    @property
    def slot_count(self) -> int:
        return self.bucket_count * self.Z

    def path(self, leaf: int) -> list[int]:
        """Bucket ids from the leaf up to the root."""
        node = leaf + self.leaf_count - 1
        ids = [node]
        while node:
            node = (node - 1) // 2
            ids.append(node)
        return ids

    def access(self, op, addr: int, data: bytes | None = None) -> bytes:
        op, data = self._check(op, addr, data)
        leaf = int(self.position[addr])
        self.position[addr] = self.rng.integers(0, self.leaf_count)
        self.leaves_read.append(leaf)
        ids = self.path(leaf)
        for ct in self.server.read(ids):
            for a, payload in self._open(ct):
                if a != DUMMY_ADDR:
                    self.stash[a] = payload
        result = self.stash.get(addr, self.empty)
        if op is Op.WRITE:
            self.stash[addr] = data
        self.server.write(ids, self._evict(leaf, ids))
        self.max_stash = max(self.max_stash, len(self.stash))
        self.accesses += 1
        if len(self.stash) > self.stash_limit:
            raise OramOverflowError(f"stash holds {len(self.stash)} blocks (limit {self.stash_limit})")
        return result

    def _evict(self, leaf: int, ids: list[int]) -> list[Ciphertext]:
        # ids[j] sits at depth height - j; a block may go no deeper than its common depth with `leaf`
        by_depth: list[list[int]] = [[] for _ in range(self.height + 1)]
        for a in self.stash:
            by_depth[self.height - (int(self.position[a]) ^ leaf).bit_length()].append(a)
        out = []
        carry: list[int] = []
        for j in range(len(ids)):
            carry.extend(by_depth[self.height - j])
            chosen, carry = carry[: self.Z], carry[self.Z:]
            slots = [(a, self.stash.pop(a)) for a in chosen]
            slots.extend([(DUMMY_ADDR, self.empty)] * (self.Z - len(slots)))
            out.append(self._seal(slots))
        return out

    def block_locations(self) -> dict[int, int]:
        """Test hook: decrypt the whole tree and map each live address to its bucket."""
        where = {}
        for i, ct in enumerate(self.server.buckets):
            for a, _ in self._open(ct):
                if a != DUMMY_ADDR:
                    where[a] = i
        return where


class LinearOram(_Engine):
    """Trivially oblivious engine: the whole memory is read and rewritten per access.

    Memory is kept as a single ciphertext over all ``capacity`` slots.
    """

    def __init__(self, capacity: int, payload_bytes: int, rng=None, cipher: MockCipher | None = None, **_):
        super().__init__(capacity, payload_bytes, rng, cipher)
        self.server = OramServer([self._seal([(a, self.empty) for a in range(self.capacity)])])

    @property
    def slot_count(self) -> int:
        return self.capacity

    def access(self, op, addr: int, data: bytes | None = None) -> bytes:
        op, data = self._check(op, addr, data)
        (ct,) = self.server.read([0])
        memory = bytearray(self.cipher.decrypt_bytes(ct))
        start = addr * self.slot_bytes + _ADDR.size
        result = bytes(memory[start: start + self.payload_bytes])
        if op is Op.WRITE:
            memory[start: start + self.payload_bytes] = data
        self.server.write([0], [self.cipher.encrypt_bytes(bytes(memory), self.rng)])
        self.accesses += 1
        return result


ENGINES = {"path": PathOram, "linear": LinearOram}


def oram_init(engine: str, capacity: int, payload_bytes: int, rng=None, **kwargs):
    try:
        cls = ENGINES[engine]
    except KeyError:
        raise ParameterError(f"unknown ORAM engine {engine!r}") from None
    return cls(capacity, payload_bytes, rng, **kwargs)


def oram_access(oram, op, addr: int, data: bytes | None = None) -> bytes:
    return oram.access(op, addr, data)


def linear_oram_access(oram: LinearOram, op, addr: int, data: bytes | None = None) -> bytes:
    return oram.access(op, addr, data)
