import numpy as np
import pytest

from extremeclust import io
from extremeclust.preprocess import RawSeries
from extremeclust.rjmcmc import ChainConfig, run_chain
from extremeclust.trace import HEADER, TraceStore


def test_trace_round_trip(study3, tmp_path):
    tr = run_chain(study3.data, study3.counts, ChainConfig(2000, 1000, 10, seed=1), trace_path=tmp_path / "t.csv")
    back = TraceStore.read_csv(tmp_path / "t.csv")
    assert len(back) == len(tr)
    for name in ("iters", "logpost", "gamma0", "beta", "hyper"):
        assert getattr(back, name) == getattr(tr, name)
    for name in ("labels", "sigma", "xi", "epsilon", "centres"):
        assert all(np.array_equal(a, b) for a, b in zip(getattr(back, name), getattr(tr, name)))
    back.write_csv(tmp_path / "u.csv")
    assert (tmp_path / "u.csv").read_bytes() == (tmp_path / "t.csv").read_bytes()
    header = (tmp_path / "t.csv").read_text().splitlines()[0]
    assert header == ",".join(HEADER)


def test_trace_read_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="bad header"):
        TraceStore.read_csv(p)
    p.write_text(",".join(HEADER) + "\n")
    with pytest.raises(ValueError, match="no samples"):
        TraceStore.read_csv(p)


def test_trace_not_left_behind_on_error(study3, tmp_path, monkeypatch):
    from extremeclust import rjmcmc

    def boom(self, move):
        raise KeyboardInterrupt
    monkeypatch.setattr(rjmcmc.Sampler, "step", boom)
    with pytest.raises(KeyboardInterrupt):
        run_chain(study3.data, study3.counts, ChainConfig(100), trace_path=tmp_path / "t.csv")
    assert not (tmp_path / "t.csv").exists()


def test_series_round_trip_with_dates(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("site_id,time,value\nA,2020-01-02,1.5\nA,2020-01-01,\nB,2020-01-01,3\n")
    s = io.read_series(p)
    assert [x.site_id for x in s] == ["A", "B"]
    assert s[0].times.tolist() == [737425, 737426] and np.isnan(s[0].values[0])
    p.write_text("site_id,time,value\nA,1,x\n")
    with pytest.raises(ValueError, match=":2: bad value"):
        io.read_series(p)
    p.write_text("site,time,value\n")
    with pytest.raises(ValueError, match="header"):
        io.read_series(p)


def test_other_formats_round_trip(tmp_path, study3):
    d = study3.data
    io.write_matrix(tmp_path / "d.csv", d.distances)
    assert np.array_equal(io.read_matrix(tmp_path / "d.csv"), d.distances)
    io.write_adjacency(tmp_path / "a.csv", d.adjacency)
    assert sorted(io.read_adjacency(tmp_path / "a.csv")) == list(d.adjacency)
    io.write_counts(tmp_path / "c.csv", study3.counts)
    c = io.read_counts(tmp_path / "c.csv")
    assert np.array_equal(c.pairs, study3.counts.pairs) and np.array_equal(c.P, study3.counts.P)
    io.write_locations(tmp_path / "l.csv", d.site_ids, d.locations)
    ids, xy = io.read_locations(tmp_path / "l.csv")
    assert ids == list(d.site_ids) and np.array_equal(xy, d.locations)


def test_config_errors(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[data]\nseries = s.csv\n")
    with pytest.raises(ValueError, match="distances or locations"):
        io.load_config(p)
    p.write_text("[data]\nseries = s.csv\ndistances = d.csv\n[bogus]\n")
    with pytest.raises(ValueError, match="unknown section"):
        io.load_config(p)
    with pytest.raises(FileNotFoundError):
        io.load_config(tmp_path / "none.ini")
