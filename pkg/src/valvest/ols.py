"""Ordinary least squares with coefficient inference and residual diagnostics.

The mass balance has no constant term, so no intercept is fitted by
default; an optional intercept is available as a diagnostic. Confidence
intervals are t-based because the effective sample can be modest at coarse
sampling times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .design_matrix import RegressionProblem
from .errors import InsufficientRows, RankDeficient

__all__ = ["DiagnosticsReport", "FitResult", "fit_ols", "residual_diagnostics"]

_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class DiagnosticsReport:
    """Serial-correlation diagnostics of a residual series."""

    acf: np.ndarray            # lags 1..L
    ljung_box: tuple[float, float]  # (statistic, p-value)
    durbin_watson: float
    lb_lag: int
    model_df: int = 0

    def __post_init__(self):
        if np.any(np.abs(self.acf) > 1.0 + 1e-12):
            raise ValueError("autocorrelation outside [-1, 1]")


@dataclass(frozen=True)
class FitResult:
    """OLS estimate of the valve constants."""

    beta: np.ndarray
    se: np.ndarray
    ci95: np.ndarray           # (n_V, 2) lower/upper
    residuals: np.ndarray
    sigma2: float
    dof: int
    diagnostics: DiagnosticsReport
    evap_ids: tuple[str, ...]


def _offending_columns(x: np.ndarray, s_tol: float) -> list[int]:
    """Columns involved in a numerical rank deficiency.

    The dependent columns are the trailing pivots of a rank-revealing QR;
    each is then regressed on the independent ones so the columns it
    duplicates are reported too.
    """
    from scipy.linalg import qr

    _, r, piv = qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > s_tol))
    dependent = list(piv[rank:])
    independent = list(piv[:rank])
    offending = set(dependent)
    for d in dependent:
        coef, *_ = np.linalg.lstsq(x[:, independent], x[:, d], rcond=None)
        scale = np.linalg.norm(x[:, d])
        for c, j in zip(coef, independent):
            if abs(c) * np.linalg.norm(x[:, j]) > 1e-6 * max(scale, s_tol):
                offending.add(j)
    return sorted(offending)


def fit_ols(p: RegressionProblem, intercept: bool = False, acf_max_lag: int | None = None) -> FitResult:
    """Fit y = x beta by least squares via singular value decomposition.

    Standard errors come from sigma2 * (x'x)^-1 with sigma2 = RSS/dof;
    95 % intervals use the t distribution. Raises :class:`RankDeficient`
    (listing the offending columns) when the design is numerically
    singular at tolerance 1e-10 * ||x||.
    """
    x = p.x
    ids = p.evap_ids
    if intercept:
        x = np.column_stack([x, np.ones(p.n)])
        ids = ids + ("(intercept)",)
    n, k = x.shape
    if n <= k:
        raise InsufficientRows(f"n={n} rows cannot identify {k} coefficients")

    u, s, vt = np.linalg.svd(x, full_matrices=False)
    tol = _RANK_RTOL * s[0]
    if np.sum(s > tol) < k:
        cols = _offending_columns(x, tol)
        raise RankDeficient([ids[j] for j in cols])

    beta = vt.T @ ((u.T @ p.y) / s)
    residuals = p.y - x @ beta
    rss = float(residuals @ residuals)
    dof = n - k
    sigma2 = rss / dof
    # diag of (x'x)^-1 = sum_j V[i,j]^2 / s_j^2
    xtx_inv_diag = np.sum((vt.T / s) ** 2, axis=1)
    se = np.sqrt(sigma2 * xtx_inv_diag)
    tcrit = float(stats.t.ppf(0.975, dof))
    ci95 = np.column_stack([beta - tcrit * se, beta + tcrit * se])

    if acf_max_lag is None:
        acf_max_lag = 50 if p.dt_seconds <= 60.0 else 20
    diag = residual_diagnostics(residuals, max_lag=acf_max_lag)
    return FitResult(beta, se, ci95, residuals, sigma2, dof, diag, ids)


def acf(values: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample autocorrelations for lags 1..max_lag (1/n normalization)."""
    e = np.asarray(values, dtype=float)
    e = e - e.mean()
    denom = float(e @ e)
    if denom == 0.0:
        return np.zeros(max_lag)
    return np.array([float(e[k:] @ e[:-k]) / denom for k in range(1, max_lag + 1)])


def residual_diagnostics(residuals: np.ndarray, max_lag: int = 20, model_df: int = 0) -> DiagnosticsReport:
    """ACF, Ljung-Box and Durbin-Watson statistics of a residual series.

    ``model_df`` degrees of freedom are subtracted from the Ljung-Box
    chi-square (set it to p+q when testing ARMA innovations).
    """
    e = np.asarray(residuals, dtype=float)
    n = e.size
    max_lag = max(1, min(max_lag, n // 4))
    r = acf(e, max_lag)
    q_stat = n * (n + 2.0) * float(np.sum(r**2 / (n - np.arange(1, max_lag + 1))))
    df = max(max_lag - model_df, 1)
    p_value = float(stats.chi2.sf(q_stat, df))
    diffs = np.diff(e)
    denom = float(e @ e)
    dw = float(diffs @ diffs) / denom if denom > 0 else 2.0
    return DiagnosticsReport(
        acf=r,
        ljung_box=(q_stat, p_value),
        durbin_watson=dw,
        lb_lag=max_lag,
        model_df=model_df,
    )
