"""Atomic storage model: fixed-length records, mock randomized encryption,
the server data structure ``(ds1, ds2)`` and its leakage recorder.

The cipher is a stand-in for a semantically secure scheme: a keyed SHAKE
keystream under a fresh nonce, authenticated with keyed BLAKE2b. It is not
meant to be strong, only to be randomized and length-hiding so real and
dummy records look alike.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError, ProtocolError

DEFAULT_PAYLOAD_BYTES = 64
NONCE_BYTES = 16
TAG_BYTES = 16

# kind, record id, ordered key (-1 when absent), attribute bit mask, bit count
_HEADER = struct.Struct(">BqqQB")


class RecordKind(enum.IntEnum):
    DUMMY = 0
    REAL = 1


@dataclass(frozen=True)
class Record:
    """One stored row.

    ``key`` is the ordered search key in ``[1, N]`` used by range and point
    queries; ``attrs`` is the binary attribute vector used by attribute
    queries. Either may be ``None`` when the corresponding index is unused.
    """

    payload: bytes = b""
    key: int | None = None
    attrs: tuple[int, ...] | None = None
    rid: int = 0
    kind: RecordKind = RecordKind.REAL

    @property
    def is_dummy(self) -> bool:
        return self.kind is RecordKind.DUMMY


DUMMY = Record(kind=RecordKind.DUMMY)


def pad_payload(payload: bytes, size: int) -> bytes:
    if len(payload) > size:
        return payload[:size]
    return payload + b"\x00" * (size - len(payload))


def encode_record(record: Record, payload_bytes: int = DEFAULT_PAYLOAD_BYTES) -> bytes:
    if record.is_dummy:
        return b"\x00" * (_HEADER.size + payload_bytes)
    attrs = record.attrs
    if attrs is not None and len(attrs) > 64:
        raise ParameterError("attribute vectors are limited to 64 bits")
    mask = 0
    for i, bit in enumerate(attrs or ()):
        if bit:
            mask |= 1 << i
    header = _HEADER.pack(
        int(record.kind),
        record.rid,
        -1 if record.key is None else int(record.key),
        mask,
        0xFF if attrs is None else len(attrs),
    )
    return header + pad_payload(record.payload, payload_bytes)


def decode_record(blob: bytes) -> Record:
    kind, rid, key, mask, nbits = _HEADER.unpack_from(blob)
    if kind == RecordKind.DUMMY:
        return DUMMY
    attrs = None if nbits == 0xFF else tuple((mask >> i) & 1 for i in range(nbits))
    return Record(
        payload=blob[_HEADER.size:],
        key=None if key == -1 else key,
        attrs=attrs,
        rid=rid,
        kind=RecordKind(kind),
    )


@dataclass(frozen=True, slots=True)
class Ciphertext:
    nonce: bytes
    body: bytes
    tag: bytes

    def __len__(self) -> int:
        return len(self.nonce) + len(self.body) + len(self.tag)

    def to_bytes(self) -> bytes:
        return self.nonce + self.body + self.tag


def _xor(data: bytes, stream: bytes) -> bytes:
    n = len(data)
    return (int.from_bytes(data, "big") ^ int.from_bytes(stream, "big")).to_bytes(n, "big")


class MockCipher:
    """Randomized authenticated encryption of fixed-length records."""

    def __init__(self, key: bytes, payload_bytes: int = DEFAULT_PAYLOAD_BYTES):
        if len(key) < 16:
            raise ParameterError("cipher key must be at least 16 bytes")
        self.key = bytes(key)
        self._mac_key = hashlib.blake2b(b"mac" + self.key, digest_size=32).digest()
        self.payload_bytes = payload_bytes
        self._pool_rng = None
        self._pool = b""
        self._pool_pos = 0

    @classmethod
    def generate(cls, rng: np.random.Generator, payload_bytes: int = DEFAULT_PAYLOAD_BYTES) -> "MockCipher":
        return cls(rng.bytes(32), payload_bytes)

    @property
    def plaintext_bytes(self) -> int:
        return _HEADER.size + self.payload_bytes

    @property
    def ciphertext_bytes(self) -> int:
        return NONCE_BYTES + self.plaintext_bytes + TAG_BYTES

    def _tag(self, nonce: bytes, body: bytes) -> bytes:
        return hashlib.blake2b(nonce + body, key=self._mac_key, digest_size=TAG_BYTES).digest()

    def _nonce(self, rng: np.random.Generator) -> bytes:
        # nonces are drawn from the caller's generator in chunks (one call per nonce is slow)
        if rng is not self._pool_rng or self._pool_pos >= len(self._pool):
            self._pool_rng, self._pool, self._pool_pos = rng, rng.bytes(NONCE_BYTES * 256), 0
        start = self._pool_pos
        self._pool_pos += NONCE_BYTES
        return self._pool[start:self._pool_pos]

    def encrypt_bytes(self, plaintext: bytes, rng: np.random.Generator) -> Ciphertext:
        nonce = self._nonce(rng)
        body = _xor(plaintext, hashlib.shake_128(self.key + nonce).digest(len(plaintext)))
        return Ciphertext(nonce, body, self._tag(nonce, body))

    def decrypt_bytes(self, ct: Ciphertext) -> bytes:
        if self._tag(ct.nonce, ct.body) != ct.tag:
            raise ProtocolError("ciphertext failed authentication")
        return _xor(ct.body, hashlib.shake_128(self.key + ct.nonce).digest(len(ct.body)))

    def encrypt(self, record: Record, rng: np.random.Generator) -> Ciphertext:
        return self.encrypt_bytes(encode_record(record, self.payload_bytes), rng)

    def decrypt(self, ct: Ciphertext) -> Record:
        return decode_record(self.decrypt_bytes(ct))


def encrypt(cipher: MockCipher, record: Record, rng: np.random.Generator) -> Ciphertext:
    return cipher.encrypt(record, rng)


def decrypt(cipher: MockCipher, ct: Ciphertext) -> Record:
    return cipher.decrypt(ct)


@dataclass
class QueryTrace:
    query_id: int
    indices: tuple[int, ...]
    m_prime: int
    meta: dict = field(default_factory=dict)


@dataclass
class LeakageTrace:
    """What the honest-but-curious server observes, one entry per query.

    ``indices`` is the access pattern; ``m_prime`` is the communication
    volume in records.
    """

    queries: list[QueryTrace] = field(default_factory=list)

    def record(self, indices: Sequence[int], meta: dict | None = None, m_prime: int | None = None) -> QueryTrace:
        indices = tuple(int(i) for i in indices)
        entry = QueryTrace(
            query_id=len(self.queries),
            indices=indices,
            m_prime=len(indices) if m_prime is None else int(m_prime),
            meta=dict(meta or {}),
        )
        self.queries.append(entry)
        return entry

    def extend(self, other: "LeakageTrace") -> "LeakageTrace":
        out = LeakageTrace()
        for q in self.queries + other.queries:
            out.record(q.indices, q.meta, q.m_prime)
        return out

    @property
    def total_communication(self) -> int:
        return sum(q.m_prime for q in self.queries)

    def to_jsonl(self) -> str:
        lines = [
            json.dumps({"query_id": q.query_id, "indices": list(q.indices), "m_prime": q.m_prime})
            for q in self.queries
        ]
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_jsonl(cls, text: str) -> "LeakageTrace":
        trace = cls()
        for line in text.splitlines():
            if line.strip():
                obj = json.loads(line)
                trace.record(obj["indices"], m_prime=obj["m_prime"])
        return trace


def trace_report(trace: LeakageTrace) -> tuple[list[tuple[int, ...]], list[int]]:
    """Per-query access pattern and communication volume."""
    return [q.indices for q in trace.queries], [q.m_prime for q in trace.queries]


@dataclass
class ServerStore:
    """Server state: encrypted records ``ds1`` plus key-only metadata ``ds2``."""

    ds1: list[Ciphertext]
    ds2: dict = field(default_factory=dict)
    trace: LeakageTrace = field(default_factory=LeakageTrace)

    @property
    def size(self) -> int:
        return len(self.ds1)


def server_fetch(store: ServerStore, indices: Iterable[int], meta: dict | None = None) -> list[Ciphertext]:
    indices = [int(i) for i in indices]
    n = len(store.ds1)
    bad = [i for i in indices if not 0 <= i < n]
    if bad:
        raise ProtocolError(f"indices {bad[:5]} outside ds1 of length {n}")
    store.trace.record(indices, meta)
    return [store.ds1[i] for i in indices]
