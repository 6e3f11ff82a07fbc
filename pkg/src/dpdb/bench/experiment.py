"""Experiment orchestration and efficiency reporting.

Storage efficiency is ``n' / n`` (stored over real records). Communication
efficiency per query is ``m' / m`` (returned over matching records); queries
with ``m = 0`` are reported separately by their absolute ``m'``.

Two execution modes exist. ``full`` runs the real protocols (encryption,
server fetches, ORAM paths). ``counts`` evaluates only the noisy count
channel that determines ``n'`` and ``m'``, which is what the efficiency
numbers depend on; it makes paper-scale sweeps affordable.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from ..atomic_point import plan_hashed, plan_plain, point_query, point_setup_hashed, point_setup_plain
from ..atomic_range import default_bucket_count, plan_buckets, range_query, range_setup
from ..dp import Mechanism
from ..dporam import dporam_setup, sanitize, split_budget
from ..errors import DPStoreError, ParameterError
from ..queries import AttributeQuery, PointQuery, RangeQuery
from .data import Database, ingest_csv, synthetic_database
from .workload import gen_workload

SYSTEMS = ("atomic-range", "atomic-point-plain", "atomic-point-hashed", "dp-oram")
MODES = ("full", "counts")
SEED_ENV = "DPDB_SEED"
_ALLOWED = {
    "atomic-range": {"ranges"},
    "atomic-point-plain": {"points"},
    "atomic-point-hashed": {"points"},
    "dp-oram": {"ranges", "points", "attributes"},
}
_QUERY_TYPE = {"ranges": "range", "points": "point", "attributes": "attribute"}


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


@dataclass
class ExperimentConfig:
    system: str
    epsilon: float = 0.1
    beta: float = 2.0 ** -20
    seed: int = field(default_factory=_default_seed)
    N: int = 1024
    n: int = 10_000
    k: int = 0
    data: str = "uniform"
    csv: str = ""
    key_col: str = ""
    attr_cols: tuple[str, ...] = ()
    binning: str = "identity"
    b: int = 0
    k_b: int = 16
    k_h: int = 16
    theta: float = -1.0
    N_b: int = 0
    split: float = 0.5
    Z: int = 4
    u: int = 64
    workload: tuple[str, ...] = ("ranges",)
    selectivities: tuple[float, ...] = (0.05, 0.1, 0.2, 0.4, 0.8)
    trials: int = 1
    mode: str = "full"
    mechanism: str = "laplace"

    def validate(self) -> "ExperimentConfig":
        if self.system not in SYSTEMS:
            raise ParameterError(f"unknown system {self.system!r}; choose from {SYSTEMS}")
        if self.mode not in MODES:
            raise ParameterError(f"unknown mode {self.mode!r}; choose from {MODES}")
        Mechanism(self.mechanism)
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ParameterError("epsilon must be positive")
        if not 0 < self.beta <= 1:
            raise ParameterError("beta must be in (0, 1]")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if self.N < 1 or (self.system == "atomic-range" and self.N < 2):
            raise ParameterError("domain size too small for this system")
        if not self.workload:
            raise ParameterError("empty workload")
        bad = set(self.workload) - _ALLOWED[self.system]
        if bad:
            raise ParameterError(f"{self.system} cannot answer {sorted(bad)} workloads")
        if "attributes" in self.workload and self.k < 1 and not self.attr_cols:
            raise ParameterError("attribute workload needs k >= 1")
        if self.system == "atomic-range" and self.b and not 1 <= self.b <= self.N:
            raise ParameterError("bucket count must be in [1, N]")
        return self

    @property
    def buckets(self) -> int:
        return self.b or default_bucket_count(self.N)


def _coerce(f: dataclasses.Field, raw: str):
    text = raw.strip()
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if kind.startswith("tuple"):
        parts = [p.strip() for p in text.split(",") if p.strip()]
        return tuple(float(p) for p in parts) if "float" in kind else tuple(parts)
    if kind == "int":
        return int(float(text)) if "e" not in text.lower() else int(float(text))
    if kind == "float":
        if "^" in text:
            base, exp = text.split("^")
            return float(base) ** float(exp)
        return float(text)
    return text


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` comments, comma-separated lists)."""
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in fields:
            raise ParameterError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(fields[key], raw)
        except ValueError as exc:
            raise ParameterError(f"config line {lineno}: bad value for {key}: {raw!r}") from exc
    if "system" not in values:
        raise ParameterError("config must set 'system'")
    return ExperimentConfig(**values).validate()


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


@dataclass
class EfficiencyReport:
    config: dict
    n: int
    trials: int
    storage: dict
    communication: list[dict]
    sum_m_prime: int
    l_comm_total: int
    physical_bucket_reads: int
    incidents: int
    mismatches: int
    runtime: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("runtime")
        return d

    def to_json(self) -> str:
        """Deterministic JSON (wall-clock runtime is left out on purpose)."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["workload", "selectivity", "mean_a", "std_a", "queries", "zero_result_queries"])
        for row in self.communication:
            w.writerow([row["workload"], row["selectivity"], repr(row["mean_a"]), repr(row["std_a"]),
                        row["queries"], row["zero_result_queries"]])
        return out.getvalue()

    def mean_a(self, workload: str, selectivity: float | None = None) -> float:
        for row in self.communication:
            if row["workload"] == workload and (selectivity is None or math.isclose(row["selectivity"], selectivity)):
                return row["mean_a"]
        raise KeyError((workload, selectivity))


def load_database(cfg: ExperimentConfig) -> Database:
    if cfg.csv:
        return ingest_csv(cfg.csv, cfg.key_col or None, cfg.N, cfg.binning, cfg.attr_cols)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xDA7A]))
    return synthetic_database(cfg.n, cfg.N, rng, cfg.k, cfg.data)


def build_workload(cfg: ExperimentConfig, columns: int) -> list[tuple[str, float, object]]:
    out = []
    for kind in cfg.workload:
        if kind == "ranges":
            for s in cfg.selectivities:
                out.extend((kind, float(s), q) for q in gen_workload(kind, cfg.N, s))
        elif kind == "points":
            out.extend((kind, 0.0, q) for q in gen_workload(kind, cfg.N))
        else:
            out.extend((kind, 0.0, q) for q in gen_workload(kind, k=columns))
    return out


def true_counts(db: Database, queries) -> np.ndarray:
    cum = np.concatenate([[0], np.cumsum(db.histogram())])
    ones = (np.array([r.attrs for r in db.records], dtype=np.int64).reshape(db.n, db.columns).sum(axis=0)
            if db.columns else np.zeros(0, np.int64))
    out = []
    for _, _, q in queries:
        if isinstance(q, RangeQuery):
            out.append(cum[q.hi] - cum[q.lo - 1])
        elif isinstance(q, PointQuery):
            out.append(cum[q.point] - cum[q.point - 1])
        else:
            out.append(ones[q.column] if q.bit else db.n - ones[q.column])
    return np.asarray(out, dtype=np.int64)


@dataclass
class _Trial:
    storage: int
    m_prime: np.ndarray
    l_comm: int
    physical: int = 0
    incidents: int = 0
    mismatches: int = 0


def _types(cfg: ExperimentConfig) -> tuple[str, ...]:
    return tuple(_QUERY_TYPE[k] for k in cfg.workload)


def _run_counts(cfg: ExperimentConfig, db: Database, queries, m: np.ndarray, rng) -> _Trial:
    hist = db.histogram()
    mech = Mechanism(cfg.mechanism)
    if cfg.system == "atomic-range":
        plan = plan_buckets(hist, cfg.buckets, cfg.k_b, cfg.epsilon, cfg.beta, rng, mech)
        mp = [len(plan.touched(q.lo, q.hi)) * plan.capacity for _, _, q in queries]
        storage = plan.storage
    elif cfg.system.startswith("atomic-point"):
        if cfg.system == "atomic-point-plain":
            groups = plan_plain(hist, cfg.epsilon, cfg.beta, rng, mech)
        else:
            groups = plan_hashed(hist, cfg.epsilon, cfg.beta, rng, None if cfg.theta < 0 else cfg.theta,
                                 cfg.N_b or None, cfg.split, mech)
        mp = [int(groups.sizes[groups.group_of[q.point - 1]]) for _, _, q in queries]
        storage = groups.storage
    else:
        types = _types(cfg)
        idx = sanitize(db.records, types, split_budget(cfg.epsilon, types), cfg.beta, rng,
                       cfg.N, db.columns, cfg.k_h, mech)
        mp = [idx[q.kind].answer(q) for _, _, q in queries]
        storage = db.n
    mp = np.asarray(mp, dtype=np.int64)
    incidents = int(np.sum(mp < m))
    if cfg.system == "dp-oram":
        mp = np.maximum(mp, m)
    return _Trial(storage, mp, int(mp.sum()), incidents=incidents)


def _run_full(cfg: ExperimentConfig, db: Database, queries, m: np.ndarray, rng) -> _Trial:
    mech = Mechanism(cfg.mechanism)
    recs = db.records
    mp, mismatches = [], 0
    if cfg.system == "dp-oram":
        system = dporam_setup(recs, _types(cfg), cfg.epsilon, cfg.beta, rng, cfg.N, db.columns or None,
                              k_h=cfg.k_h, bucket_size=cfg.Z, mechanism=mech)
        trace = system.trace
        reads0 = system.oram.server.bucket_reads
        for (_, _, q), expect in zip(queries, m):
            got = system.query(q)
            mismatches += len(got) != expect or not all(q.matches(r) for r in got)
            mp.append(trace.queries[-1].m_prime)
        physical = system.oram.server.bucket_reads - reads0
        return _Trial(system.storage, np.asarray(mp), trace.total_communication, physical,
                      len(system.incidents), mismatches)
    if cfg.system == "atomic-range":
        index, store = range_setup(recs, cfg.N, cfg.buckets, cfg.k_b, cfg.epsilon, cfg.beta, rng, mech)
        answer = lambda q: range_query(index, store, q.lo, q.hi)  # noqa: E731
    elif cfg.system == "atomic-point-plain":
        index, store = point_setup_plain(recs, cfg.N, cfg.epsilon, cfg.beta, rng, mech)
        answer = lambda q: point_query(index, store, q.point)  # noqa: E731
    else:
        index, store = point_setup_hashed(recs, cfg.N, cfg.epsilon, cfg.beta,
                                          None if cfg.theta < 0 else cfg.theta, cfg.N_b or None, rng,
                                          cfg.split, mech)
        answer = lambda q: point_query(index, store, q.point)  # noqa: E731
    for (_, _, q), expect in zip(queries, m):
        got = answer(q)
        mismatches += len(got) != expect or not all(q.matches(r) for r in got)
        mp.append(store.trace.queries[-1].m_prime)
    return _Trial(index.storage, np.asarray(mp), store.trace.total_communication, mismatches=mismatches)


def run_experiment(cfg: ExperimentConfig) -> EfficiencyReport:
    """Run ``cfg.trials`` independent setups over one database and workload."""
    cfg.validate()
    started = time.perf_counter()
    db = load_database(cfg)
    queries = build_workload(cfg, db.columns)
    m = true_counts(db, queries)
    runner = _run_full if cfg.mode == "full" else _run_counts
    trials = []
    for i, child in enumerate(np.random.SeedSequence(cfg.seed).spawn(cfg.trials)):
        try:
            trials.append(runner(cfg, db, queries, m, np.random.default_rng(child)))
        except DPStoreError as exc:
            raise type(exc)(f"trial {i}: {exc}") from exc

    labels = list(dict.fromkeys((kind, s) for kind, s, _ in queries))
    kinds = np.array([f"{kind}@{s}" for kind, s, _ in queries])
    positive = m > 0
    rows = []
    for kind, s in labels:
        sel = kinds == f"{kind}@{s}"
        nz, zero = sel & positive, sel & ~positive
        per_trial = [float(np.mean(t.m_prime[nz] / m[nz])) for t in trials] if nz.any() else []
        zero_abs = [float(np.mean(t.m_prime[zero])) for t in trials] if zero.any() else []
        rows.append({
            "workload": kind,
            "selectivity": s,
            "queries": int(sel.sum()),
            "zero_result_queries": int(zero.sum()),
            "mean_a": float(np.mean(per_trial)) if per_trial else None,
            "std_a": float(np.std(per_trial)) if per_trial else None,
            "mean_m_prime_zero_result": float(np.mean(zero_abs)) if zero_abs else None,
        })
    storage = np.array([t.storage for t in trials], dtype=float)
    report = EfficiencyReport(
        config=dataclasses.asdict(cfg),
        n=db.n,
        trials=cfg.trials,
        storage={
            "mean_n_prime": float(storage.mean()),
            "a": float(storage.mean() / db.n) if db.n else None,
            "std_a": float((storage / db.n).std()) if db.n else None,
        },
        communication=rows,
        sum_m_prime=int(sum(int(t.m_prime.sum()) for t in trials)),
        l_comm_total=int(sum(t.l_comm for t in trials)),
        physical_bucket_reads=int(sum(t.physical for t in trials)),
        incidents=int(sum(t.incidents for t in trials)),
        mismatches=int(sum(t.mismatches for t in trials)),
    )
    report.runtime = time.perf_counter() - started
    return report
