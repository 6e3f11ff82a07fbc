import json
import math

import numpy as np
import pytest

from dpdb.atomic_range import default_bucket_count
from dpdb.bench import ExperimentConfig, gen_workload, ingest_csv, parse_config, run_experiment
from dpdb.bench.cli import main
from dpdb.bench.data import discretize
from dpdb.dp import solve_bucket_offset
from dpdb.errors import ParameterError
from dpdb.queries import AttributeQuery, PointQuery, RangeQuery


def test_workloads():
    ranges = gen_workload("ranges", 10, 0.5)
    assert len(ranges) == 6 and all(q.hi - q.lo + 1 == 5 for q in ranges)
    assert gen_workload("points", 4) == [PointQuery(a) for a in range(1, 5)]
    attrs = gen_workload("attributes", k=4)
    assert len(attrs) == 8 and AttributeQuery(3, 0) in attrs
    assert gen_workload("ranges", 7, 1.0) == [RangeQuery(1, 7)]
    with pytest.raises(ParameterError):
        gen_workload("ranges", 10, 0.0)
    with pytest.raises(ParameterError):
        gen_workload("cubes", 10)


def test_ingest_small(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("k,name\n1,a\n2,b\n2,c\n")
    db = ingest_csv(p, "k", 4)
    assert db.histogram().tolist() == [1, 2, 0, 0]
    assert all(len(r.payload) == 64 for r in db.records)


def test_ingest_empty_file_then_setup(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    db = ingest_csv(p, None, 8)
    assert db.n == 0
    from dpdb.atomic_range import range_setup
    index, store = range_setup(db.records, 8, b=2, eps=1.0, rng=0)
    assert store.size == 2 * index.plan.mu_b


def test_ingest_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("k\n1\nx\n3\n\n")
    with pytest.raises(ParameterError, match=r"\[2"):
        ingest_csv(p, "k", 4)
    q = tmp_path / "out.csv"
    q.write_text("k\n1\n9\n")
    with pytest.raises(ParameterError):
        ingest_csv(q, "k", 4)
    with pytest.raises(ParameterError):
        ingest_csv(q, "nope", 4)


def test_ingest_attributes(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("x,a1,a2\n5,1,0\n6,0,1\n")
    db = ingest_csv(p, None, 1, attr_cols=["a1", "a2"])
    assert db.columns == 2 and [r.attrs for r in db.records] == [(1, 0), (0, 1)]


def test_equal_width_binning_spans_range(rng):
    values = rng.lognormal(10, 1, size=5000)
    keys = discretize(values, 7578, "equal-width")
    assert keys.min() == 1 and keys.max() == 7578
    q = discretize(values, 100, "quantile")
    assert q.min() == 1 and q.max() == 100


def test_parse_config():
    cfg = parse_config("""
        # comment
        system = dp-oram
        epsilon = 0.5
        beta = 2^-10
        N = 64
        n = 200
        k = 2
        workload = ranges, points, attributes
        selectivities = 0.1, 0.5
        trials = 2
    """)
    assert cfg.beta == 2.0 ** -10 and cfg.workload == ("ranges", "points", "attributes")
    assert cfg.selectivities == (0.1, 0.5) and cfg.trials == 2
    with pytest.raises(ParameterError):
        parse_config("epsilon = 1")
    with pytest.raises(ParameterError):
        parse_config("system = atomic-range\nfoo = 1")
    with pytest.raises(ParameterError):
        parse_config("system = atomic-range\nworkload = points")
    with pytest.raises(ParameterError):
        parse_config("system = atomic-range\nepsilon = -1")


def test_seed_from_env(monkeypatch):
    monkeypatch.setenv("DPDB_SEED", "77")
    assert ExperimentConfig(system="dp-oram").seed == 77


def test_noise_off_full_domain_comm():
    cfg = ExperimentConfig(system="atomic-range", N=64, n=500, mechanism="none", selectivities=(1.0,))
    rep = run_experiment(cfg)
    b = default_bucket_count(64)
    cap = math.ceil(500 / b) + solve_bucket_offset(500, b, 16, 64, 0.1, 2.0 ** -20).mu
    assert rep.mean_a("ranges", 1.0) == b * cap / 500
    assert rep.mismatches == 0


def test_dporam_points_cost_more_than_ranges():
    # paper-like density: many records per range, few per bin
    cfg = ExperimentConfig(system="dp-oram", N=1024, n=10_000, epsilon=0.1, workload=("ranges", "points"),
                           selectivities=(0.1, 0.2, 0.4, 0.8), mode="counts", trials=3)
    rep = run_experiment(cfg)
    for s in (0.1, 0.2, 0.4, 0.8):
        assert rep.mean_a("points") > rep.mean_a("ranges", s)


def test_full_run_consistency_and_determinism():
    cfg = ExperimentConfig(system="dp-oram", N=16, n=60, k=2, epsilon=5.0,
                           workload=("ranges", "points", "attributes"), selectivities=(0.25,))
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a.to_json() == b.to_json() and a.to_csv() == b.to_csv()
    assert a.sum_m_prime == a.l_comm_total and a.mismatches == 0
    assert a.physical_bucket_reads > 0
    for row in a.communication:
        assert row["mean_a"] is None or row["mean_a"] >= 1


def test_zero_result_queries_reported_separately():
    cfg = ExperimentConfig(system="atomic-point-plain", N=64, n=3, epsilon=1.0, workload=("points",))
    rep = run_experiment(cfg)
    (row,) = rep.communication
    assert row["zero_result_queries"] >= 61 and row["mean_m_prime_zero_result"] > 0


def test_errors_carry_trial_context():
    cfg = ExperimentConfig(system="atomic-range", N=64, n=10, b=64, beta=1.0, epsilon=0.01)
    with pytest.raises(Exception, match="trial"):
        run_experiment(cfg)


def test_cli(tmp_path, capsys):
    conf = tmp_path / "c.txt"
    conf.write_text("system = atomic-point-hashed\nN = 32\nn = 100\nepsilon = 1\nworkload = points\n")
    assert main(["run", "--config", str(conf), "--csv-out", str(tmp_path / "o.csv")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n"] == 100 and report["communication"][0]["workload"] == "points"
    assert (tmp_path / "o.csv").read_text().startswith("workload,selectivity")
    assert main(["workload", "--kind", "ranges", "--selectivity", "0.5", "--domain", "10"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "range 1 5"
    data = tmp_path / "d.csv"
    data.write_text("k\n1\n2\n2\n")
    assert main(["ingest", "--csv", str(data), "--key-col", "k", "--domain", "4"]) == 0
    assert json.loads(capsys.readouterr().out)["histogram"] == [1, 2, 0, 0]
    assert main(["run", "--config", str(tmp_path / "missing.txt")]) != 0
    assert "FileNotFoundError" in capsys.readouterr().err
    bad = tmp_path / "bad.txt"
    bad.write_text("system = nope\n")
    assert main(["run", "--config", str(bad)]) == 1
    assert capsys.readouterr().err.startswith("ParameterError:")
