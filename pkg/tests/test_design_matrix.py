import math
from datetime import datetime, timezone

import numpy as np
import pytest

from valvest import (
    DegenerateColumn,
    InsufficientRows,
    RegressionProblem,
    SystemConstants,
    VALVE_UNIT_SCALE,
    ZeroVariance,
    build_problem,
    bypass_massflow,
    colinearity_report,
    compressor_massflow,
    gas_quality,
    make_problem_builder,
    mt_suction_pressure,
    parse_dataset,
    regressor_matrix,
    saturation_props,
)

from test_timeseries_io import tiny_dataset

START = datetime(2024, 1, 1, tzinfo=timezone.utc)


def test_valve_unit_scale():
    assert VALVE_UNIT_SCALE == math.sqrt(10.0) * 1e-6


def test_regressor_formula_by_hand(prop_table):
    ds = tiny_dataset(n=40, n_lt=1, n_mt=2, seed=3)
    x = regressor_matrix(ds, prop_table)
    rho_l = saturation_props(prop_table, ds.p_rec)[0]
    for t in (0, 17, 39):
        for j in range(3):
            dp_pa = max(ds.p_rec[t] - ds.p_e[t, j], 0.0) * 1e5
            want = math.sqrt(dp_pa * rho_l[t]) * ds.lam[t, j] * VALVE_UNIT_SCALE
            assert x[t, j] == pytest.approx(want, rel=1e-14)


def test_negative_pressure_difference_clips_to_zero(prop_table):
    ds = tiny_dataset(n=40, seed=1)
    ds.p_e[5, 0] = ds.p_rec[5] + 3.0  # sensor glitch: cabinet above receiver
    x = regressor_matrix(ds, prop_table)
    assert x[5, 0] == 0.0
    assert np.isfinite(x).all()


def test_missing_inputs_become_nan_rows(prop_table):
    ds = tiny_dataset(n=40, seed=2, missing={"P_rec": 4, "lambda": (7, 1), "P_e": (9, 2)})
    x = regressor_matrix(ds, prop_table)
    assert np.all(np.isnan(x[4]))      # receiver pressure feeds every column
    assert np.isnan(x[7, 1]) and np.isfinite(x[7, 0])
    assert np.isnan(x[9, 2]) and np.isfinite(x[9, 1])


def test_matches_simulator_exactly(prop_table, otterup):
    _, ds, truth = otterup
    x = regressor_matrix(ds, prop_table)
    assert np.allclose(x, truth.x, rtol=0, atol=1e-10)
    p = build_problem(ds, SystemConstants(v_s=truth.v_s), prop_table)
    assert np.allclose(p.y, p.x @ truth.a, rtol=1e-10)


def test_response_linear_in_stroke_volume(prop_table):
    ds = tiny_dataset(n=60, seed=5)
    builder = make_problem_builder(ds, prop_table)
    p1 = builder(1.0)
    p2 = builder(0.025)
    assert p2.x is p1.x
    assert np.array_equal(p2.y, 0.025 * p1.y)
    assert p2.evap_ids == p1.evap_ids


def test_build_problem_drops_rows_and_tracks_segments(prop_table):
    ds = tiny_dataset(n=50, seed=6, missing={"f_comp": slice(20, 23), "h_gc": 35})
    p = build_problem(ds, SystemConstants(v_s=0.02), prop_table)
    assert p.n == 46
    assert 21 not in p.row_index and 35 not in p.row_index
    assert p.segments() == [(0, 20), (20, 32), (32, 46)]
    assert len(p.timestamps()) == p.n
    assert p.timestamps()[0] == ds.start


def test_degenerate_column_reported(prop_table):
    ds = tiny_dataset(n=60, seed=7)
    ds.lam[:, 1] = 0.0  # valve never opens
    with pytest.raises(DegenerateColumn) as exc:
        build_problem(ds, SystemConstants(v_s=0.02), prop_table)
    assert "MT1" in str(exc.value)


def test_insufficient_rows(prop_table):
    ds = tiny_dataset(n=20, n_lt=1, n_mt=2, seed=8)  # needs 30 rows for 3 columns
    with pytest.raises(InsufficientRows):
        build_problem(ds, SystemConstants(v_s=0.02), prop_table)


def test_mt_suction_pressure():
    p_e = np.array([[12.0, 27.0, 26.0], [13.0, 25.0, 28.0]])
    assert np.array_equal(mt_suction_pressure(p_e, 1), [27.0, 28.0])
    assert np.array_equal(mt_suction_pressure(p_e, 0), [27.0, 28.0])
    with pytest.raises(ValueError):
        mt_suction_pressure(p_e, 3)


def test_massflow_formulas(prop_table):
    consts = SystemConstants(v_s=0.025, eta_vol=0.85)
    m = compressor_massflow(0.6, consts, 55.0)
    assert m == pytest.approx(0.6 * 0.85 * 0.025 * 55.0)
    q = gas_quality(prop_table, 2.8e5, 36.0)
    b = bypass_massflow(m, 2.8e5, 36.0, prop_table)
    assert b == pytest.approx(float(q) * float(m))


def test_system_constants_validation():
    with pytest.raises(ValueError):
        SystemConstants(v_s=-1.0)
    with pytest.raises(ValueError):
        SystemConstants(v_s=0.02, eta_vol=0.3)
    with pytest.raises(ValueError):
        SystemConstants(v_s=0.02, eta_vol=1.2)


def synthetic_problem(x, ids=None):
    n, k = x.shape
    ids = ids or tuple(f"MT{i + 1}" for i in range(k))
    return RegressionProblem(
        y=x @ np.ones(k),
        x=x,
        evap_ids=ids,
        start=START,
        dt_seconds=60.0,
        row_index=np.arange(n),
    )


def test_colinearity_orthogonal_design():
    n = 256
    t = np.arange(n)
    x = np.column_stack([np.sin(2 * np.pi * t / 16), np.cos(2 * np.pi * t / 16),
                         np.sin(2 * np.pi * t / 8)])
    rep = colinearity_report(synthetic_problem(x))
    assert np.allclose(rep.vif, 1.0, atol=1e-9)
    assert np.all(rep.max_abs_corr < 1e-9)
    assert rep.flagged == ()


def test_colinearity_duplicate_column_flagged():
    rng = np.random.default_rng(0)
    a = rng.normal(size=200)
    x = np.column_stack([a, a, rng.normal(size=200)])
    rep = colinearity_report(synthetic_problem(x))
    assert math.isinf(rep.vif[0]) and math.isinf(rep.vif[1])
    assert "MT1" in rep.flagged and "MT2" in rep.flagged
    assert "MT3" not in rep.flagged


def test_colinearity_zero_variance():
    rng = np.random.default_rng(1)
    x = np.column_stack([rng.normal(size=100), np.full(100, 2.0)])
    with pytest.raises(ZeroVariance) as exc:
        colinearity_report(synthetic_problem(x))
    assert "MT2" in str(exc.value)


def test_colinearity_on_plant_data(prop_table, otterup):
    _, ds, truth = otterup
    p = build_problem(ds, SystemConstants(v_s=truth.v_s), prop_table)
    rep = colinearity_report(p)
    assert rep.flagged == ()
    assert np.all(rep.vif < 2.0)


def test_problem_to_csv(prop_table):
    ds = tiny_dataset(n=40, seed=9)
    p = build_problem(ds, SystemConstants(v_s=0.02), prop_table)
    text = p.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "timestamp,y,x_1,x_2,x_3"
    assert len(lines) == p.n + 1
    first = lines[1].split(",")
    assert first[0] == "2024-01-01T00:00:00Z"
    assert float(first[1]) == p.y[0]
    assert float(first[2]) == p.x[0, 0]


def test_round_trip_through_csv_layer(prop_table):
    # regressors built from a parsed file match those from the original
    ds = tiny_dataset(n=40, seed=10)
    from valvest import serialize_dataset

    back = parse_dataset(serialize_dataset(ds))
    assert np.array_equal(regressor_matrix(ds, prop_table), regressor_matrix(back, prop_table))
