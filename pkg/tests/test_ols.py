import numpy as np
import pytest

from valvest import (
    InsufficientRows,
    RankDeficient,
    SystemConstants,
    acf,
    build_problem,
    fit_ols,
    residual_diagnostics,
)

from _oracles import ols_reference
from test_design_matrix import synthetic_problem
from test_timeseries_io import tiny_dataset


def noisy_problem(seed=0, n=400, k=4, sigma=0.05):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.1, 1.0, (n, k))
    beta = rng.uniform(10.0, 60.0, k)
    y = x @ beta + sigma * rng.normal(size=n)
    p = synthetic_problem(x, ids=tuple(f"MT{i + 1}" for i in range(k)))
    return type(p)(y=y, x=x, evap_ids=p.evap_ids, start=p.start,
                   dt_seconds=p.dt_seconds, row_index=p.row_index), beta


def test_exact_recovery_without_noise():
    p, beta = noisy_problem(seed=1, sigma=0.0)
    fit = fit_ols(p)
    assert np.allclose(fit.beta, beta, rtol=1e-10)
    assert fit.sigma2 == pytest.approx(0.0, abs=1e-20)


def test_matches_textbook_normal_equations():
    p, _ = noisy_problem(seed=2)
    fit = fit_ols(p)
    beta_ref, se_ref, sigma2_ref = ols_reference(p.x, p.y)
    assert np.allclose(fit.beta, beta_ref, rtol=1e-10)
    assert np.allclose(fit.se, se_ref, rtol=1e-10)
    assert fit.sigma2 == pytest.approx(sigma2_ref, rel=1e-12)
    assert fit.dof == p.n - p.n_v


def test_matches_statsmodels():
    sm = pytest.importorskip("statsmodels.api")
    p, _ = noisy_problem(seed=3)
    fit = fit_ols(p)
    res = sm.OLS(p.y, p.x).fit()
    assert np.allclose(fit.beta, res.params, rtol=1e-10)
    assert np.allclose(fit.se, res.bse, rtol=1e-10)
    ci = res.conf_int(alpha=0.05)
    assert np.allclose(fit.ci95, ci, rtol=1e-9)
    assert np.allclose(fit.residuals, res.resid, rtol=1e-10)


def test_diagnostics_match_statsmodels():
    from statsmodels.stats.diagnostic import acorr_ljungbox
    from statsmodels.stats.stattools import durbin_watson
    from statsmodels.tsa.stattools import acf as sm_acf

    rng = np.random.default_rng(4)
    e = rng.normal(size=600)
    e = e + 0.4 * np.concatenate([[0], e[:-1]])  # inject lag-1 correlation
    rep = residual_diagnostics(e, max_lag=12)
    lb = acorr_ljungbox(e, lags=[12], return_df=True)
    assert rep.ljung_box[0] == pytest.approx(float(lb["lb_stat"].iloc[0]), rel=1e-9)
    assert rep.ljung_box[1] == pytest.approx(float(lb["lb_pvalue"].iloc[0]), rel=1e-9, abs=1e-12)
    assert rep.durbin_watson == pytest.approx(float(durbin_watson(e)), rel=1e-12)
    ref_acf = sm_acf(e, nlags=12, fft=False)[1:]
    assert np.allclose(rep.acf, ref_acf, rtol=1e-9, atol=1e-12)


def test_ljung_box_model_df_shifts_pvalue():
    rng = np.random.default_rng(5)
    e = rng.normal(size=500)
    plain = residual_diagnostics(e, max_lag=10)
    adjusted = residual_diagnostics(e, max_lag=10, model_df=3)
    assert plain.ljung_box[0] == adjusted.ljung_box[0]
    assert adjusted.ljung_box[1] < plain.ljung_box[1]  # fewer df, same statistic
    assert adjusted.model_df == 3


def test_rank_deficient_names_offenders():
    rng = np.random.default_rng(6)
    a = rng.normal(size=300)
    b = rng.normal(size=300)
    x = np.column_stack([a, b, a + b, rng.normal(size=300)])
    p = synthetic_problem(x, ids=("LT1", "MT1", "MT2", "MT3"))
    with pytest.raises(RankDeficient) as exc:
        fit_ols(p)
    msg = str(exc.value)
    assert "MT2" in msg or "MT1" in msg
    assert "MT3" not in msg


def test_intercept_column():
    rng = np.random.default_rng(7)
    x = rng.uniform(0.2, 1.0, (200, 2))
    y = x @ np.array([30.0, 20.0]) + 5.0 + 0.01 * rng.normal(size=200)
    p = synthetic_problem(x, ids=("MT1", "MT2"))
    p = type(p)(y=y, x=x, evap_ids=p.evap_ids, start=p.start,
                dt_seconds=p.dt_seconds, row_index=p.row_index)
    fit = fit_ols(p, intercept=True)
    assert fit.evap_ids[-1] == "(intercept)"
    assert fit.beta[-1] == pytest.approx(5.0, abs=0.05)
    assert fit.beta.size == 3


def test_too_few_rows():
    rng = np.random.default_rng(8)
    x = rng.uniform(size=(3, 3))
    p = synthetic_problem(x)
    with pytest.raises(InsufficientRows):
        fit_ols(p)


def test_acf_lag_default_follows_sampling_time(prop_table):
    ds = tiny_dataset(n=1000, seed=11)
    p = build_problem(ds, SystemConstants(v_s=0.02), prop_table)
    fit = fit_ols(p)
    assert fit.diagnostics.lb_lag == 50  # 1-minute data
    from valvest import resample_dataset

    p15 = build_problem(resample_dataset(ds, 15), SystemConstants(v_s=0.02), prop_table)
    fit15 = fit_ols(p15)
    # coarse sampling drops the default to 20, further capped at n//4
    assert fit15.diagnostics.lb_lag == min(20, p15.n // 4) == 16


def test_acf_short_and_constant_series():
    assert np.array_equal(acf(np.ones(50), 5), np.zeros(5))
    r = acf(np.sin(np.arange(100)), 3)
    assert np.all(np.abs(r) <= 1.0)


def test_ci_covers_truth_typically(prop_table, otterup):
    _, ds, truth = otterup
    p = build_problem(ds, SystemConstants(v_s=truth.v_s), prop_table)
    fit = fit_ols(p)
    # noise-free plant: estimates collapse onto the catalog values
    assert np.allclose(fit.beta, truth.a, rtol=1e-8)
    assert fit.evap_ids == ds.evap_ids
