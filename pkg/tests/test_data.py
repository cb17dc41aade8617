from datetime import datetime, timedelta
import io

import numpy as np
import pytest

from ergan import data
from ergan.data import DataError


def day_rows(hid, day, values, skip=()):
    start = datetime.fromisoformat(day)
    return [(hid, start + timedelta(hours=h), v) for h, v in enumerate(values) if h not in skip]


# -- parse_readings -----------------------------------------------------------

def test_parse_single_row():
    r = data.parse_readings(b"household_id,timestamp,kwh\nh1,2017-01-01T00:00:00,1.5\n")
    assert r == [data.Reading("h1", datetime(2017, 1, 1, 0), 1.5)]


def test_parse_negative_names_line():
    src = b"household_id,timestamp,kwh\nh1,2017-01-01T00:00:00,1.0\nh1,2017-01-01T01:00:00,-2.0\n"
    with pytest.raises(DataError, match="negative consumption at line 3"):
        data.parse_readings(src)


def test_parse_keeps_order_over_two_days():
    rows = day_rows("h1", "2017-01-01", range(24)) + day_rows("h1", "2017-01-02", range(24, 48))
    out = data.parse_readings(data.readings_csv(rows))
    assert len(out) == 48
    assert [r.kwh for r in out] == list(map(float, range(48)))


@pytest.mark.parametrize("line,msg", [
    ("h1,yesterday,1.0", "line 2: bad timestamp"),
    ("h1,2017-01-01T00:00:00,abc", "line 2: unparseable"),
    ("h1,2017-01-01T00:30:00,1.0", "hour boundary"),
    ("h1,2017-01-01T00:00:00+02:00,1.0", "timezone"),
    ("h1,2017-01-01T00:00:00", "expected 3 fields"),
    ("h1,2017-01-01T00:00:00,nan", "non-finite"),
])
def test_parse_malformed(line, msg):
    with pytest.raises(DataError, match=msg):
        data.parse_readings(("household_id,timestamp,kwh\n" + line + "\n").encode())


def test_parse_empty_and_bad_header():
    with pytest.raises(data.EmptyInputError):
        data.parse_readings(b"")
    with pytest.raises(DataError, match="header"):
        data.parse_readings(b"a,b,c\n")


def test_parse_accepts_stream_and_path(tmp_path):
    raw = data.readings_csv(day_rows("h", "2020-05-05", range(24)))
    p = tmp_path / "r.csv"
    p.write_bytes(raw)
    assert data.parse_readings(io.BytesIO(raw)) == data.parse_readings(p) == data.parse_readings(raw)


# -- segment_daily ------------------------------------------------------------

def test_segment_complete_day():
    seg = data.segment_daily(data.parse_readings(data.readings_csv(
        day_rows("h1", "2017-01-01", range(24)))))
    assert len(seg.days) == 1 and seg.dropped_days == 0
    sid, vec = seg.days[0]
    assert sid == "h1_2017-01-01"
    np.testing.assert_array_equal(vec, np.arange(24.0))


def test_segment_missing_hour_drops_day():
    rows = day_rows("h1", "2017-01-01", range(24), skip={13})
    seg = data.segment_daily(data.parse_readings(data.readings_csv(rows)))
    assert seg.days == [] and seg.dropped_days == 1 and seg.dropped_readings == 23


def test_segment_conservation_with_gaps():
    rows = (day_rows("a", "2017-01-01", range(24)) + day_rows("a", "2017-01-02", range(24))
            + day_rows("a", "2017-01-03", range(24), skip={0, 5})
            + day_rows("b", "2017-01-01", range(24), skip={23}))
    seg = data.segment_daily(data.parse_readings(data.readings_csv(rows)))
    assert len(seg.days) == 2
    assert len(seg.days) * 24 + seg.dropped_readings == len(rows)
    assert seg.dropped_days == 2


def test_segment_duplicate_is_error():
    rows = day_rows("h1", "2017-01-01", range(24))
    with pytest.raises(DataError, match="duplicate"):
        data.segment_daily(data.parse_readings(data.readings_csv(rows + rows[:1])))


# -- normalize ----------------------------------------------------------------

def test_normalize_arithmetic():
    p = data.normalize(np.arange(2, 50, 2))
    np.testing.assert_allclose(p.values, np.arange(24) / 23, rtol=0, atol=1e-15)


def test_normalize_constant_rejected():
    with pytest.raises(data.ConstantProfileError):
        data.normalize([5.0] * 24)


def test_normalize_endpoints():
    raw = np.full(24, 1.0)
    raw[3], raw[19] = 0.2, 3.2
    v = data.normalize(raw).values
    assert v[3] == 0.0 and v[19] == 1.0
    assert v.min() == 0.0 and v.max() == 1.0


def test_normalize_min_max_exact_on_random_days():
    rng = np.random.default_rng(3)
    for _ in range(200):
        v = data.normalize(rng.gamma(2.0, 0.7, 24)).values
        assert v.min() == 0.0 and v.max() == 1.0


def test_build_dataset_drops_constant_days(caplog):
    days = [("a", np.arange(24.0)), ("b", np.full(24, 2.0))]
    ds, dropped = data.build_dataset(days)
    assert len(ds) == 1 and dropped == 1
    assert "dropping constant profile b" in caplog.text


# -- split --------------------------------------------------------------------

def test_split_sizes_and_disjoint():
    ds = data.fixture_generate([("dual_peak", 10, 0.05)], seed=0)
    tr, va = data.split(ds, 0.7, 42)
    assert (len(tr), len(va)) == (7, 3)
    assert set(tr.source_ids).isdisjoint(va.source_ids)
    assert set(tr.source_ids) | set(va.source_ids) == set(ds.source_ids)


def test_split_deterministic_and_seed_sensitive():
    ds = data.fixture_generate([("dual_peak", 10, 0.05)], seed=0)
    a = data.split(ds, 0.7, 42)
    b = data.split(ds, 0.7, 42)
    assert a[0].source_ids == b[0].source_ids
    assert data.split(ds, 0.7, 1)[0].source_ids != data.split(ds, 0.7, 2)[0].source_ids


def test_split_rejects_bad_fraction():
    ds = data.fixture_generate([("dual_peak", 4, 0.0)])
    for frac in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            data.split(ds, frac, 0)


# -- fixtures -----------------------------------------------------------------

def test_fixture_evening_peak_argmax_in_window():
    ds = data.fixture_generate([("evening_peak", 100, 0.05)], seed=7)
    assert len(ds) == 100
    window = data.ARCHETYPES["evening_peak"].peak_hours
    assert all(int(np.argmax(row)) in window for row in ds.values)


def test_fixture_zero_noise_is_base():
    ds = data.fixture_generate([("morning_peak", 5, 0.0)], seed=1)
    base = data.ARCHETYPES["morning_peak"].base
    for row in ds.values:
        np.testing.assert_array_equal(row, base)


def test_fixture_counts_and_purity():
    recipe = [("morning_peak", 50, 0.05), ("flat_night", 50, 0.05)]
    ds = data.fixture_generate(recipe, seed=11)
    assert ds.N == 100
    assert sum(s.startswith("morning_peak") for s in ds.source_ids) == 50
    again = data.fixture_generate(recipe, seed=11)
    assert ds.values.tobytes() == again.values.tobytes()


def test_fixture_errors():
    with pytest.raises(ValueError):
        data.fixture_generate([])
    with pytest.raises(ValueError):
        data.fixture_generate([("nope", 3, 0.1)])
    with pytest.raises(ValueError):
        data.fixture_generate([("dual_peak", 0, 0.1)])


def test_archetype_peaks_match_their_windows():
    for a in data.ARCHETYPES.values():
        assert int(np.argmax(a.base)) in a.peak_hours


# -- dataset files ------------------------------------------------------------

def test_dataset_roundtrip_nine_digits(tmp_path):
    ds = data.fixture_generate([("midday_peak", 6, 0.1)], seed=2)
    path = tmp_path / "d.csv"
    data.write_dataset(ds, path)
    header = path.read_text().splitlines()[0]
    assert header == "source_id," + ",".join(f"h{t:02d}" for t in range(24))
    back = data.read_dataset(path)
    assert back.source_ids == ds.source_ids
    np.testing.assert_allclose(back.values, ds.values, rtol=1e-8, atol=1e-9)


def test_read_dataset_rejects_short_rows(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text(",".join(data.DATASET_HEADER) + "\nx,0.5,0.5\n")
    with pytest.raises(DataError, match="line 2"):
        data.read_dataset(path)


def test_dataset_values_immutable():
    ds = data.fixture_generate([("dual_peak", 2, 0.0)])
    with pytest.raises(ValueError):
        ds.values[0, 0] = 0.3
    with pytest.raises(DataError):
        data.Dataset(np.full((1, 24), 1.5))


def test_profiles_to_readings_roundtrip():
    ds = data.fixture_generate([("dual_peak", 5, 0.1)], seed=4)
    seg = data.segment_daily(data.parse_readings(data.profiles_to_readings(ds, households=2)))
    assert seg.dropped_days == 0
    back, dropped = data.build_dataset(seg.days)
    assert dropped == 0 and [s[:2] for s in back.source_ids] == ["h0", "h0", "h0", "h1", "h1"]
    # households are emitted in first-appearance order, then by date
    order = [0, 2, 4, 1, 3]
    np.testing.assert_allclose(back.values, ds.values[order], rtol=0, atol=1e-5)
