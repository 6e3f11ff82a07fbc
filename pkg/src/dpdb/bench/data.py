"""Loading databases from CSV and generating synthetic ones."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ..crypto_store import DEFAULT_PAYLOAD_BYTES, Record, pad_payload
from ..errors import ParameterError

BINNINGS = ("identity", "equal-width", "quantile")


@dataclass
class Database:
    records: list[Record]
    domain: int
    columns: int = 0

    @property
    def n(self) -> int:
        return len(self.records)

    def histogram(self) -> np.ndarray:
        keys = np.array([r.key for r in self.records], dtype=np.int64)
        return np.bincount(keys - 1, minlength=self.domain) if keys.size else np.zeros(self.domain, np.int64)


def discretize(values: np.ndarray, domain: int, binning: str = "identity") -> np.ndarray:
    """Map raw numeric values to keys in ``[1, domain]``."""
    values = np.asarray(values, dtype=float)
    if binning == "identity":
        if values.size and (np.any(values != np.round(values)) or values.min() < 1 or values.max() > domain):
            bad = np.flatnonzero((values != np.round(values)) | (values < 1) | (values > domain))
            raise ParameterError(f"keys outside [1, {domain}] at rows {[int(i) + 1 for i in bad[:10]]}")
        return values.astype(np.int64)
    if not values.size:
        return values.astype(np.int64)
    if binning == "equal-width":
        lo, hi = values.min(), values.max()
        if hi == lo:
            return np.ones(len(values), dtype=np.int64)
        keys = np.floor((values - lo) / (hi - lo) * domain).astype(np.int64) + 1
        return np.minimum(keys, domain)
    if binning == "quantile":
        ranks = np.argsort(np.argsort(values, kind="stable"), kind="stable")
        return (ranks * domain // len(values)).astype(np.int64) + 1
    raise ParameterError(f"unknown binning {binning!r}; choose from {BINNINGS}")


def _bit(text: str) -> int:
    t = text.strip().lower()
    if t in ("1", "true", "yes"):
        return 1
    if t in ("0", "false", "no"):
        return 0
    raise ValueError(text)


def ingest_csv(path, key_col: str | None, domain: int, binning: str = "identity",
               attr_cols=None, payload_bytes: int = DEFAULT_PAYLOAD_BYTES) -> Database:
    """Read a headed CSV into fixed-length records.

    The payload of each record is its serialized row, truncated or padded to
    ``payload_bytes``.
    """
    if domain < 1:
        raise ParameterError("domain must be >= 1")
    attr_cols = list(attr_cols or [])
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        rows = list(reader)
    if rows or fields:
        for col in ([key_col] if key_col else []) + attr_cols:
            if col not in fields:
                raise ParameterError(f"column {col!r} not in CSV header {fields}")
    raw, attrs, bad = [], [], []
    for i, row in enumerate(rows, start=1):
        try:
            if key_col:
                v = float(row[key_col])
                if not math.isfinite(v):
                    raise ValueError(v)
                raw.append(v)
            attrs.append(tuple(_bit(row[c]) for c in attr_cols) if attr_cols else None)
        except (ValueError, TypeError):
            bad.append(i)
    if bad:
        raise ParameterError(f"unparsable rows: {bad[:20]}")
    keys = discretize(np.array(raw), domain, binning) if key_col else [None] * len(rows)
    records = [
        Record(
            payload=pad_payload(",".join(row[f] or "" for f in fields).encode(), payload_bytes),
            key=None if k is None else int(k),
            attrs=a,
            rid=i,
        )
        for i, (row, k, a) in enumerate(zip(rows, keys, attrs))
    ]
    return Database(records, domain, len(attr_cols))


def synthetic_database(n: int, domain: int, rng, columns: int = 0, distribution: str = "uniform",
                       zipf_a: float = 1.5, payload_bytes: int = 16) -> Database:
    if distribution == "uniform":
        keys = rng.integers(1, domain + 1, size=n)
    elif distribution == "zipf":
        keys = np.minimum(rng.zipf(zipf_a, size=n), domain)
    else:
        raise ParameterError(f"unknown distribution {distribution!r}")
    bits = rng.integers(0, 2, size=(n, columns)) if columns else None
    records = [
        Record(
            payload=int(i).to_bytes(8, "big").ljust(payload_bytes, b"\x00"),
            key=int(keys[i]),
            attrs=None if bits is None else tuple(int(b) for b in bits[i]),
            rid=i,
        )
        for i in range(n)
    ]
    return Database(records, domain, columns)
