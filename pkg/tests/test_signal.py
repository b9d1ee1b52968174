import numpy as np
import pytest

from scatmoments import TimeSeries, deseasonalize, load_csv, segment, write_csv


def test_load_csv_reads_named_column(tmp_path):
    p = tmp_path / "prices.csv"
    p.write_text("time,price\n0,1.0\n1,1.5\n2,1.25\n")
    ts = load_csv(p, "price")
    assert ts.n_blocks == 1
    np.testing.assert_array_equal(ts.samples, [1.0, 1.5, 1.25])


def test_load_csv_reads_indexed_column(tmp_path):
    p = tmp_path / "two.csv"
    p.write_text("a,b\n1,10\n2,20\n")
    np.testing.assert_array_equal(load_csv(p, 1).samples, [10.0, 20.0])


def test_load_csv_nan_names_row(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x\n1.0\n2.0\nNaN\n4.0\n")
    with pytest.raises(ValueError, match="row 4"):
        load_csv(p)


def test_load_csv_non_numeric_names_row(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x\n1.0\noops\n")
    with pytest.raises(ValueError, match="row 3"):
        load_csv(p)


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "nope.csv")


def test_load_csv_too_short(tmp_path):
    p = tmp_path / "one.csv"
    p.write_text("x\n3.14\n")
    with pytest.raises(ValueError, match="fewer than 2"):
        load_csv(p)


def test_load_csv_unknown_column(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("x\n1\n2\n")
    with pytest.raises(ValueError, match="no column named"):
        load_csv(p, "y")


def test_csv_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(0)
    vals = rng.normal(size=64) * 10.0 ** rng.integers(-8, 8, size=64)
    p = tmp_path / "r.csv"
    write_csv(p, vals, header=["v"])
    back = load_csv(p, "v")
    np.testing.assert_array_equal(back.samples, vals)


def test_write_csv_multi_block(tmp_path):
    ts = TimeSeries(np.arange(10.0), n_blocks=2, block_len=5)
    p = tmp_path / "m.csv"
    write_csv(p, ts)
    col0 = load_csv(p, 0)
    col1 = load_csv(p, 1)
    np.testing.assert_array_equal(col0.samples, np.arange(5.0))
    np.testing.assert_array_equal(col1.samples, np.arange(5.0, 10.0))


def test_segment_divides_evenly():
    ts = TimeSeries(np.arange(10.0))
    out = segment(ts, 5)
    assert out.n_blocks == 2 and out.block_len == 5 and out.dropped == 0


def test_segment_drops_remainder():
    ts = TimeSeries(np.arange(11.0))
    out = segment(ts, 5)
    assert out.n_blocks == 2 and out.dropped == 1
    np.testing.assert_array_equal(out.samples, np.arange(10.0))


def test_segment_too_long_errors():
    with pytest.raises(ValueError, match="exceeds"):
        segment(TimeSeries(np.arange(4.0)), 5)


def test_segment_flatten_is_prefix():
    rng = np.random.default_rng(3)
    x = rng.normal(size=103)
    out = segment(TimeSeries(x), 25)
    np.testing.assert_array_equal(out.samples, x[:100])


def test_timeseries_invariants():
    with pytest.raises(ValueError):
        TimeSeries(np.array([1.0]))
    with pytest.raises(ValueError):
        TimeSeries(np.array([1.0, np.inf]))
    with pytest.raises(ValueError):
        TimeSeries(np.arange(10.0), n_blocks=3, block_len=3)


def test_deseasonalize_recovers_profile():
    # Increments built with a known phase-2 variance profile [1, 4]; the
    # normalized output must have unit variance in both phases.
    rng = np.random.default_rng(42)
    n_periods = 10_000
    incr = rng.normal(size=2 * n_periods) * np.tile([1.0, 2.0], n_periods)
    ts = TimeSeries(np.concatenate([[0.0], np.cumsum(incr)]))
    out, profile = deseasonalize(ts, 2)
    assert profile.variance_by_phase[1] / profile.variance_by_phase[0] == pytest.approx(
        4.0, rel=0.1
    )
    r = np.diff(out.samples)
    v0 = np.mean(r[0::2] ** 2)
    v1 = np.mean(r[1::2] ** 2)
    assert v0 == pytest.approx(1.0, rel=0.05)
    assert v1 == pytest.approx(1.0, rel=0.05)


def test_deseasonalize_flat_profile_keeps_shape():
    rng = np.random.default_rng(1)
    incr = rng.normal(size=4000)
    ts = TimeSeries(np.concatenate([[0.0], np.cumsum(incr)]))
    out, profile = deseasonalize(ts, 4)
    # Per-phase rescaling only: each output increment is proportional to
    # the input increment with a phase-constant factor close to 1.
    # Re-integration accumulates a few ulps; allow for that.
    ratios = np.diff(out.samples) / incr
    for phase in range(4):
        vals = ratios[phase::4]
        assert np.ptp(vals) < 1e-9


def test_deseasonalize_constant_errors():
    ts = TimeSeries(np.ones(100))
    with pytest.raises(ValueError, match="zero empirical variance"):
        deseasonalize(ts, 4)


def test_deseasonalize_idempotent():
    rng = np.random.default_rng(5)
    incr = rng.normal(size=6000) * np.tile([0.5, 1.0, 3.0], 2000)
    ts = TimeSeries(np.concatenate([[0.0], np.cumsum(incr)]))
    once, _ = deseasonalize(ts, 3)
    twice, _ = deseasonalize(once, 3)
    r1, r2 = np.diff(once.samples), np.diff(twice.samples)
    assert np.linalg.norm(r1 - r2) / np.linalg.norm(r1) < 1e-6


def test_deseasonalize_needs_two_periods():
    with pytest.raises(ValueError, match="two whole periods"):
        deseasonalize(TimeSeries(np.arange(5.0)), 4)
