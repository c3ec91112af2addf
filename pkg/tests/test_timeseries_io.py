from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from valvest import (
    GapMap,
    PlantDataset,
    SampledSeries,
    SchemaError,
    TimebaseError,
    TooShort,
    UnitError,
    parse_dataset,
    parse_rfc3339,
    resample_average,
    resample_dataset,
    serialize_dataset,
)
from valvest.timeseries_io import format_rfc3339

START = datetime(2024, 1, 1, tzinfo=timezone.utc)


def tiny_dataset(n=16, n_lt=1, n_mt=2, seed=0, missing=None):
    rng = np.random.default_rng(seed)
    ids = tuple(f"LT{i + 1}" for i in range(n_lt)) + tuple(f"MT{i + 1}" for i in range(n_mt))
    n_v = n_lt + n_mt
    miss = {
        "P_rec": np.zeros(n, bool),
        "f_comp": np.zeros(n, bool),
        "h_gc": np.zeros(n, bool),
        "P_e": np.zeros((n, n_v), bool),
        "lambda": np.zeros((n, n_v), bool),
    }
    if missing:
        for key, idx in missing.items():
            miss[key][idx] = True
    arrays = {
        "P_e": rng.uniform(10, 30, (n, n_v)),
        "lambda": rng.uniform(0, 1, (n, n_v)),
        "P_rec": rng.uniform(34, 38, n),
        "f_comp": rng.uniform(0.2, 0.9, n),
        "h_gc": rng.uniform(2.5e5, 2.8e5, n),
    }
    for key, mask in miss.items():
        arrays[key][mask] = np.nan
    return PlantDataset(
        start=START,
        dt_seconds=60.0,
        evap_ids=ids,
        n_lt=n_lt,
        n_mt=n_mt,
        p_e=arrays["P_e"],
        lam=arrays["lambda"],
        p_rec=arrays["P_rec"],
        f_comp=arrays["f_comp"],
        h_gc=arrays["h_gc"],
        missing=miss,
    )


def rows_to_csv(rows, header="timestamp,p_rec_bar,f_comp,h_gc_jkg,p_e_MT1_bar,lambda_MT1"):
    return header + "\n" + "\n".join(rows) + "\n"


def test_rfc3339_parsing_variants():
    t = parse_rfc3339("2024-03-05T12:30:00Z")
    assert t == datetime(2024, 3, 5, 12, 30, tzinfo=timezone.utc)
    assert parse_rfc3339("2024-03-05T13:30:00+01:00") == t
    assert parse_rfc3339("2024-03-05T12:30:00") == t  # naive treated as UTC
    assert format_rfc3339(t) == "2024-03-05T12:30:00Z"
    assert parse_rfc3339(format_rfc3339(t)) == t
    with pytest.raises(TimebaseError):
        parse_rfc3339("yesterday at noon")


def test_serialize_parse_round_trip_bits():
    ds = tiny_dataset(missing={"P_rec": 3, "lambda": (5, 1)})
    text = serialize_dataset(ds)
    back = parse_dataset(text)
    assert back.evap_ids == ds.evap_ids
    assert (back.n_lt, back.n_mt) == (ds.n_lt, ds.n_mt)
    assert back.start == ds.start and back.dt_seconds == ds.dt_seconds
    for name in ("p_e", "lam", "p_rec", "f_comp", "h_gc"):
        a, b = getattr(ds, name), getattr(back, name)
        assert np.array_equal(a, b, equal_nan=True), name
    for key in ds.missing:
        assert np.array_equal(ds.missing[key], back.missing[key]), key
    assert serialize_dataset(back) == text


def test_parse_accepts_bytes():
    ds = tiny_dataset(n=4)
    assert len(parse_dataset(serialize_dataset(ds).encode("utf-8"))) == 4


def test_evaporators_sorted_lt_first():
    header = "timestamp,p_rec_bar,f_comp,h_gc_jkg,p_e_MT2_bar,lambda_MT2,p_e_LT1_bar,lambda_LT1,p_e_MT10_bar,lambda_MT10"
    rows = [
        f"2024-01-01T00:{k:02d}:00Z,36.0,0.5,2.6e5,27.0,0.4,13.0,0.5,28.0,0.6"
        for k in range(3)
    ]
    ds = parse_dataset(rows_to_csv(rows, header))
    assert ds.evap_ids == ("LT1", "MT2", "MT10")
    assert (ds.n_lt, ds.n_mt) == (1, 2)


def test_jitter_snapping_and_gap_slots():
    base = "36.0,0.5,2.6e5,27.0,0.4"
    rows = [
        f"2024-01-01T00:00:00Z,{base}",
        f"2024-01-01T00:01:00Z,{base}",
        f"2024-01-01T00:02:00Z,{base}",
        f"2024-01-01T00:03:10Z,36.5,0.5,2.6e5,27.0,0.4",  # +10 s jitter, snaps to slot 3
        f"2024-01-01T00:04:20Z,{base}",                    # +20 s: off grid, dropped
        f"2024-01-01T00:05:00Z,{base}",
    ]
    ds = parse_dataset(rows_to_csv(rows))
    assert ds.dt_seconds == 60.0
    assert len(ds) == 6
    assert ds.p_rec[3] == 36.5
    assert ds.missing["P_rec"][4] and ds.missing["lambda"][4, 0]
    assert not ds.missing["P_rec"][3]


def test_duplicate_slot_keeps_first():
    base = "36.0,0.5,2.6e5,27.0,0.4"
    rows = [
        f"2024-01-01T00:00:00Z,{base}",
        f"2024-01-01T00:01:00Z,{base}",
        "2024-01-01T00:01:01Z,99.0,0.5,2.6e5,27.0,0.4",
        f"2024-01-01T00:02:00Z,{base}",
    ]
    with pytest.warns(UserWarning, match="duplicate"):
        ds = parse_dataset(rows_to_csv(rows))
    assert ds.p_rec[1] == 36.0


def test_empty_cells_become_missing():
    rows = [
        "2024-01-01T00:00:00Z,36.0,0.5,2.6e5,27.0,0.4",
        "2024-01-01T00:01:00Z,,0.5,2.6e5,27.0,",
        "2024-01-01T00:02:00Z,36.0,0.5,2.6e5,27.0,0.4",
    ]
    ds = parse_dataset(rows_to_csv(rows))
    assert ds.missing["P_rec"][1] and ds.missing["lambda"][1, 0]
    assert not ds.missing["f_comp"][1]
    assert np.isnan(ds.p_rec[1])


def test_unit_conversions():
    header = "timestamp,p_rec_bar,f_comp,h_gc_kj,p_e_A_bar,lam_A"
    rows = [
        f"2024-01-01T00:0{k}:00Z,36.0,0.5,265.0,27.0,{40.0 + k}" for k in range(3)
    ]
    schema = {
        "channels": {
            "P_rec": {"column": "p_rec_bar", "unit": "bar"},
            "f_comp": {"column": "f_comp", "unit": "fraction"},
            "h_gc": {"column": "h_gc_kj", "unit": "kJ/kg"},
        },
        "evaporators": [
            {"id": "A", "group": "MT", "p_e_column": "p_e_A_bar",
             "lambda_column": "lam_A", "lambda_unit": "percent"},
        ],
    }
    ds = parse_dataset(rows_to_csv(rows, header), schema)
    assert ds.h_gc[0] == 265.0e3
    assert ds.lam[0, 0] == 0.40
    assert ds.lam[2, 0] == pytest.approx(0.42)


def test_unit_errors():
    rows = ["2024-01-01T00:00:00Z,36.0,0.5,2.6e5,27.0,1.4",
            "2024-01-01T00:01:00Z,36.0,0.5,2.6e5,27.0,0.4"]
    with pytest.raises(UnitError, match="lambda"):
        parse_dataset(rows_to_csv(rows))
    rows = ["2024-01-01T00:00:00Z,36.0,0.5,2.6e5,27.0,abc",
            "2024-01-01T00:01:00Z,36.0,0.5,2.6e5,27.0,0.4"]
    with pytest.raises(UnitError, match="non-numeric"):
        parse_dataset(rows_to_csv(rows))
    schema = {"channels": {"P_rec": {"column": "p_rec_bar", "unit": "furlong"},
                           "f_comp": {"column": "f_comp", "unit": "fraction"},
                           "h_gc": {"column": "h_gc_jkg", "unit": "J/kg"}}}
    rows = ["2024-01-01T00:00:00Z,36.0,0.5,2.6e5,27.0,0.4",
            "2024-01-01T00:01:00Z,36.0,0.5,2.6e5,27.0,0.4"]
    with pytest.raises(UnitError, match="unknown unit"):
        parse_dataset(rows_to_csv(rows), schema)


def test_schema_errors():
    with pytest.raises(SchemaError, match="timestamp"):
        parse_dataset("when,what\n1,2\n")
    with pytest.raises(SchemaError, match="evaporator"):
        parse_dataset("timestamp,p_rec_bar,f_comp,h_gc_jkg\n2024-01-01T00:00:00Z,36,0.5,2.6e5\n"
                      "2024-01-01T00:01:00Z,36,0.5,2.6e5\n")
    schema = {"channels": {"P_rec": {"column": "nope", "unit": "bar"},
                           "f_comp": {"column": "f_comp", "unit": "fraction"},
                           "h_gc": {"column": "h_gc_jkg", "unit": "J/kg"}}}
    ds = tiny_dataset(n=3)
    with pytest.raises(SchemaError, match="nope"):
        parse_dataset(serialize_dataset(ds), schema)


def test_timebase_errors():
    base = "36.0,0.5,2.6e5,27.0,0.4"
    rows = [f"2024-01-01T00:01:00Z,{base}", f"2024-01-01T00:00:00Z,{base}"]
    with pytest.raises(TimebaseError, match="increasing"):
        parse_dataset(rows_to_csv(rows))
    with pytest.raises(TooShort):
        parse_dataset(rows_to_csv([f"2024-01-01T00:00:00Z,{base}"]))


def test_receiver_pressure_warning():
    rows = ["2024-01-01T00:00:00Z,26.0,0.5,2.6e5,27.0,0.4",
            "2024-01-01T00:01:00Z,36.0,0.5,2.6e5,27.0,0.4"]
    with pytest.warns(UserWarning, match="P_rec <= P_e"):
        parse_dataset(rows_to_csv(rows))


def test_sampled_series_basics():
    s = SampledSeries(START, 60.0, np.array([1.0, np.nan, 3.0, 4.0]),
                      np.array([False, False, False, True]))
    # NaN coerced to missing regardless of the mask handed in
    assert s.missing.tolist() == [False, True, False, True]
    assert s.present_segments() == [(0, 1), (2, 3)]
    with pytest.raises(TooShort):
        SampledSeries(START, 60.0, np.array([1.0, np.nan]), np.zeros(2, bool))
    with pytest.raises(ValueError):
        SampledSeries(START, -1.0, np.array([1.0, 2.0]), np.zeros(2, bool))


def test_resample_average_rules():
    vals = np.arange(1.0, 14.0)  # 13 samples, trailing partial window dropped
    miss = np.zeros(13, bool)
    miss[[3, 4]] = True   # window 1: 2 of 3 missing -> missing
    miss[7] = True        # window 2: 1 of 3 missing -> mean of the rest
    s = SampledSeries(START, 60.0, vals, miss)
    r = resample_average(s, 3)
    assert r.dt_seconds == 180.0
    assert len(r) == 4
    assert r.values[0] == pytest.approx(2.0)
    assert r.missing[1] and np.isnan(r.values[1])
    assert r.values[2] == pytest.approx((7.0 + 9.0) / 2)
    assert r.values[3] == pytest.approx(11.0)

    assert resample_average(s, 1) is s
    with pytest.raises(ValueError):
        resample_average(s, 0)
    with pytest.raises(ValueError):
        resample_average(s, 2.5)
    with pytest.raises(TooShort):
        resample_average(s, 14)


def test_resample_dataset_consistency():
    ds = tiny_dataset(n=20, missing={"P_e": (4, 1), "h_gc": 11})
    out = resample_dataset(ds, 4)
    assert out.dt_seconds == 240.0 and len(out) == 5
    assert out.evap_ids == ds.evap_ids
    col = resample_average(ds.channel("P_e[MT1]"), 4)
    assert np.array_equal(out.p_e[:, 1], col.values, equal_nan=True)
    assert np.array_equal(out.missing["P_e"][:, 1], col.missing)
    assert resample_dataset(ds, 1) is ds


def test_gap_map_and_complete_rows():
    ds = tiny_dataset(n=12, missing={"P_rec": slice(2, 5), "lambda": (8, 2)})
    gm = ds.gap_map()
    assert isinstance(gm, GapMap)
    assert gm.channels["P_rec"] == [(2, 5)]
    assert gm.channels["lambda[MT2]"] == [(8, 9)]
    assert gm.channels["f_comp"] == []
    assert gm.complete_row_segments() == [(0, 2), (5, 8), (9, 12)]
    mask = ds.complete_rows()
    assert mask.sum() == 8
    assert not mask[3] and not mask[8]


def test_channel_accessor_and_names():
    ds = tiny_dataset(n=6)
    names = ds.channel_names()
    assert names[:3] == ["P_rec", "f_comp", "h_gc"]
    assert "lambda[LT1]" in names and "P_e[MT2]" in names
    s = ds.channel("P_e[MT2]")
    assert np.array_equal(s.values, ds.p_e[:, 2])
    with pytest.raises(KeyError):
        ds.channel("compressor_rpm")


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(3, 40))
def test_round_trip_property(seed, n):
    rng = np.random.default_rng(seed)
    miss = {}
    if n > 4:
        miss = {"f_comp": int(rng.integers(0, n)), "P_e": (int(rng.integers(0, n)), 0)}
    ds = tiny_dataset(n=n, seed=seed, missing=miss)
    back = parse_dataset(serialize_dataset(ds))
    assert np.array_equal(back.lam, ds.lam, equal_nan=True)
    assert np.array_equal(back.p_rec, ds.p_rec, equal_nan=True)
    assert serialize_dataset(back) == serialize_dataset(ds)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(1, 6))
def test_resample_preserves_grand_mean(seed, m):
    rng = np.random.default_rng(seed)
    n = m * int(rng.integers(2, 9))
    vals = rng.normal(size=n)
    s = SampledSeries(START, 60.0, vals, np.zeros(n, bool))
    r = resample_average(s, m)
    assert np.mean(r.values) == pytest.approx(np.mean(vals), rel=1e-12, abs=1e-12)
