import numpy as np
import pytest

from extremeclust import io
from extremeclust.cli import main

SUMMARY_FILES = ("similarity.csv", "partition.csv", "marginals.csv", "return_levels.csv", "posterior_J.csv")


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["simulate", "--study", "3", "--seed", "7", "--out", str(out)]) == 0
    return out


def test_simulate_reproducible(dataset, tmp_path):
    main(["simulate", "--study", "3", "--seed", "7", "--out", str(tmp_path)])
    for f in ("series.csv", "distances.csv", "adjacency.csv", "counts.csv", "truth.csv", "locations.csv"):
        assert (tmp_path / f).read_bytes() == (dataset / f).read_bytes()
    truth = (dataset / "truth.csv").read_text().splitlines()
    assert truth[0] == "site_id,true_cluster" and len(truth) == 21


def test_check_ok(dataset, capsys):
    assert main(["check", "--config", str(dataset / "config.ini")]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def _copy(dataset, tmp_path):
    for f in dataset.iterdir():
        (tmp_path / f.name).write_bytes(f.read_bytes())
    return tmp_path / "config.ini"


def test_check_asymmetric_distance(dataset, tmp_path, capsys):
    cfg = _copy(dataset, tmp_path)
    d = io.read_matrix(tmp_path / "distances.csv")
    d[2, 5] += 0.01
    io.write_matrix(tmp_path / "distances.csv", d)
    assert main(["check", "--config", str(cfg)]) == 1
    assert "not symmetric at (3,6)" in capsys.readouterr().out


def test_check_unknown_adjacency(dataset, tmp_path, capsys):
    cfg = _copy(dataset, tmp_path)
    with open(tmp_path / "adjacency.csv", "a") as fh:
        fh.write("3,25\n")
    assert main(["check", "--config", str(cfg)]) == 1
    assert "(3,25) references an unknown site" in capsys.readouterr().out


def test_missing_file_one_line_error(dataset, tmp_path, capsys):
    cfg = _copy(dataset, tmp_path)
    (tmp_path / "series.csv").unlink()
    assert main(["sample", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("extremeclust: error:") and err.count("\n") == 1


def test_malformed_config(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("this is not ini\n")
    assert main(["check", "--config", str(p)]) == 2
    assert "error" in capsys.readouterr().err


def test_sample_and_summarize(dataset, tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    args = ["sample", "--config", str(dataset / "config.ini"), "--iterations", "3000", "--burn-in", "1000"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    for f in SUMMARY_FILES + ("trace.csv",):
        assert (out1 / f).read_bytes() == (out2 / f).read_bytes(), f
    out3 = tmp_path / "r3"
    assert main(["summarize", "--trace", str(out1 / "trace.csv"), "--out", str(out3)]) == 0
    for f in SUMMARY_FILES:
        assert (out3 / f).read_bytes() == (out1 / f).read_bytes(), f
    # schemas
    assert (out1 / "partition.csv").read_text().splitlines()[0] == "site_id,cluster"
    assert (out1 / "marginals.csv").read_text().splitlines()[0] == "site_id,psi_med,psi_lo,psi_hi,nu_med,nu_lo,nu_hi,psi_mean,nu_mean"
    assert (out1 / "return_levels.csv").read_text().splitlines()[0] == "site_id,tau,median,lo,hi"
    assert (out1 / "posterior_J.csv").read_text().splitlines()[0] == "J,probability"
    S = io.read_matrix(out1 / "similarity.csv")
    assert S.shape == (20, 20) and np.allclose(S, S.T) and np.all(np.diag(S) == 1)
    pj = np.loadtxt(out1 / "posterior_J.csv", delimiter=",", skiprows=1, ndmin=2)
    assert pj[:, 1].sum() == pytest.approx(1.0)


def test_preprocess_outputs(dataset, tmp_path):
    assert main(["preprocess", "--config", str(dataset / "config.ini"), "--out", str(tmp_path)]) == 0
    c = io.read_counts(tmp_path / "counts.csv")
    assert c.pairs.shape == (100, 2)
    assert (tmp_path / "thresholds.csv").read_text().splitlines()[0] == "site_id,threshold"


def test_raw_series_pipeline(tmp_path, rng):
    """Daily data with dates, weekly declustering, empirical thresholds and Voronoi adjacency."""
    K, days = 6, 7 * 300
    pts = rng.random((K, 2))
    io.write_locations(tmp_path / "locations.csv", [f"s{k}" for k in range(K)], pts)
    rows = []
    import datetime
    start = datetime.date(2000, 1, 1)
    for k in range(K):
        for t in range(days):
            v = "" if rng.random() < 0.02 else repr(float(rng.exponential(1.0)))
            rows.append([f"s{k}", (start + datetime.timedelta(t)).isoformat(), v])
    io.write_rows(tmp_path / "series.csv", ["site_id", "time", "value"], rows)
    (tmp_path / "c.ini").write_text(
        "[data]\nseries = series.csv\nlocations = locations.csv\n"
        "[preprocess]\nperiod_length = 7\nthreshold_prob = 0.8\ndep_threshold = 0.9\n"
        "[sampler]\niterations = 2000\nburn_in = 1000\nthin = 10\nseed = 1\ninitial_clusters = 2\n"
        "[returns]\nperiods_per_year = 52\ntaus = 10, 50\n")
    assert main(["check", "--config", str(tmp_path / "c.ini")]) == 0
    assert main(["sample", "--config", str(tmp_path / "c.ini"), "--out", str(tmp_path / "res")]) == 0
    rl = (tmp_path / "res" / "return_levels.csv").read_text().splitlines()
    assert len(rl) == 1 + K * 2


def test_multiple_chains(dataset, tmp_path, monkeypatch):
    cfg = _copy(dataset, tmp_path)
    text = cfg.read_text().replace("[sampler]", "[sampler]\nchains = 2")
    cfg.write_text(text)
    monkeypatch.setenv("EXTREMECLUST_THREADS", "2")
    assert main(["sample", "--config", str(cfg), "--iterations", "2000", "--burn-in", "1000",
                 "--out", str(tmp_path / "res")]) == 0
    assert (tmp_path / "res" / "trace_chain2.csv").exists()
