"""Linear regression with ARMA(p, q) errors, fitted by exact maximum likelihood.

Model (common sign convention):

    y_t = x_t' beta + e_t
    e_t = phi_1 e_{t-1} + ... + phi_p e_{t-p}
        + eps_t + theta_1 eps_{t-1} + ... + theta_q eps_{t-q}

with eps_t i.i.d. N(0, sigma2). Written with backshift polynomials this is
phi(B) e_t = theta(B) eps_t with phi(B) = 1 - sum phi_k B^k and
theta(B) = 1 + sum theta_k B^k; texts that print both polynomials with plus
signs use AR coefficients of opposite sign (phi_k^plus = -phi_k), while the
MA coefficients coincide.

Estimation uses the exact Gaussian likelihood evaluated by the Kalman
innovations recursion on the ARMA state-space form, with beta and sigma2
profiled out in closed form: the same filter whitens y and every regressor
column (the recursion is linear in its input), after which beta is the
least-squares fit of whitened y on whitened x and sigma2 the mean squared
whitened residual. Gaps are handled by restarting the filter at its
stationary distribution on each gap-free segment and summing segment
likelihoods.

Stationarity and invertibility are enforced, not checked: the optimizer
works in an unconstrained space that maps through tanh to partial
autocorrelations and through the Levinson-Durbin recursion to admissible
coefficients, so every visited parameter is valid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal, stats
from scipy.linalg import solve_discrete_lyapunov
from scipy.optimize import minimize

from .design_matrix import RegressionProblem
from .errors import NonFiniteLikelihood, SegmentTooShort, UnstableParameters
from .ols import DiagnosticsReport, fit_ols, residual_diagnostics
from .timeseries_io import GapMap

__all__ = ["ArmaxSpec", "ArmaxFit", "fit_armax", "profile_fit", "simulate_arma"]

_BIG = 1e10


@dataclass(frozen=True)
class ArmaxSpec:
    """AR and MA orders; the input polynomial order is fixed at zero."""

    p: int
    q: int

    def __post_init__(self):
        if self.p < 0 or self.q < 0 or self.p + self.q < 1:
            raise ValueError("need p, q >= 0 with p + q >= 1")
        if self.p > 10 or self.q > 10:
            raise ValueError("orders above 10 are not supported")


@dataclass(frozen=True)
class ArmaxFit:
    """Maximum-likelihood ARMAX estimate."""

    beta: np.ndarray
    se: np.ndarray
    ci95: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    sigma2: float
    loglik: float
    aic: float
    diagnostics: DiagnosticsReport
    converged: bool
    evap_ids: tuple[str, ...]
    residuals: np.ndarray  # whitened (standardized-scale) innovations


# --- stationarity / invertibility reparameterization -----------------------

def _pac_to_coeffs(pac: np.ndarray) -> np.ndarray:
    """Levinson-Durbin: partial autocorrelations -> AR coefficients a_k
    such that 1 - sum a_k B^k has all roots outside the unit circle
    whenever every |pac| < 1."""
    a = np.zeros(0)
    for r_k in pac:
        a = np.concatenate([a - r_k * a[::-1], [r_k]])
    return a


def _coeffs_to_pac(a: np.ndarray) -> np.ndarray:
    """Inverse Levinson-Durbin; clips when the input is not admissible."""
    a = np.asarray(a, dtype=float).copy()
    pacs = []
    while a.size:
        r_k = float(np.clip(a[-1], -0.999, 0.999))
        pacs.append(r_k)
        head = a[:-1]
        a = (head + r_k * head[::-1]) / (1.0 - r_k * r_k)
        a = np.clip(a, -1e6, 1e6)
    return np.array(pacs[::-1])


def _unpack(z: np.ndarray, spec: ArmaxSpec) -> tuple[np.ndarray, np.ndarray]:
    safe = np.clip(np.tanh(z), -1.0 + 1e-8, 1.0 - 1e-8)
    phi = _pac_to_coeffs(safe[: spec.p])
    theta = -_pac_to_coeffs(safe[spec.p :])
    return phi, theta


def _pack(phi: np.ndarray, theta: np.ndarray) -> np.ndarray:
    pac = np.concatenate([_coeffs_to_pac(phi), _coeffs_to_pac(-np.asarray(theta, dtype=float))])
    return np.arctanh(np.clip(pac, -0.99, 0.99))


def _roots_outside_unit(poly_tail: np.ndarray) -> bool:
    """True when 1 + sum c_k B^k has all roots strictly outside |B| = 1."""
    c = np.asarray(poly_tail, dtype=float)
    # a negligible leading coefficient only adds a root near infinity but
    # wrecks np.roots' companion matrix; strip such terms before solving
    while c.size and abs(c[-1]) < 1e-30:
        c = c[:-1]
    if c.size == 0:
        return True
    roots = np.roots(np.concatenate([c[::-1], [1.0]]))
    return bool(np.all(np.abs(roots) > 1.0 + 1e-12)) if roots.size else True


def is_stationary(phi) -> bool:
    return _roots_outside_unit(-np.asarray(phi, dtype=float))


def is_invertible(theta) -> bool:
    return _roots_outside_unit(np.asarray(theta, dtype=float))


# --- state space ------------------------------------------------------------

def _state_space(phi: np.ndarray, theta: np.ndarray):
    """Harvey form: alpha_t = T alpha_{t-1} + R eps_t, e_t = alpha_t[0]."""
    p, q = len(phi), len(theta)
    r = max(p, q + 1)
    T = np.zeros((r, r))
    T[:p, 0] = phi
    for i in range(r - 1):
        T[i, i + 1] = 1.0
    R = np.zeros(r)
    R[0] = 1.0
    R[1 : q + 1] = theta
    RRT = np.outer(R, R)
    P0 = solve_discrete_lyapunov(T, RRT)
    P0 = 0.5 * (P0 + P0.T)
    return T, RRT, P0


def _whiten_segments_py(U, bounds, T, RRT, P0):
    """Innovations-filter whitening of every column of U, per segment.

    Returns (W, sum log F_t); W[t] = v_t / sqrt(F_t). A non-finite or
    non-positive innovation variance aborts with sumlogF = NaN.
    """
    n, k = U.shape
    W = np.empty((n, k))
    sumlogF = 0.0
    for s in range(bounds.shape[0]):
        lo, hi = bounds[s, 0], bounds[s, 1]
        a = np.zeros((T.shape[0], k))
        P = P0.copy()
        K = np.zeros(T.shape[0])
        frozen = False
        stable = 0
        f_prev = -1.0
        sqrt_f = 1.0
        log_f = 0.0
        for t in range(lo, hi):
            if not frozen:
                F = P[0, 0]
                if not (1e-300 < F < 1e300):
                    return W, np.nan
                M = T @ P[:, 0]
                K = M / F
                P = T @ P @ T.T + RRT - np.outer(M, M) / F
                if abs(F - f_prev) <= 1e-13 * F:
                    stable += 1
                    frozen = stable >= 3
                else:
                    stable = 0
                f_prev = F
                sqrt_f = math.sqrt(F)
                log_f = math.log(F)
            v = U[t] - a[0]
            W[t] = v / sqrt_f
            a = T @ a + np.outer(K, v)
            sumlogF += log_f
    return W, sumlogF


def _whiten_segments_loops(U, bounds, T, RRT, P0):  # pragma: no cover - numba body
    n, k = U.shape
    r = T.shape[0]
    W = np.empty((n, k))
    tmp = np.empty(r)
    M = np.empty(r)
    K = np.zeros(r)
    TP = np.empty((r, r))
    sumlogF = 0.0
    for s in range(bounds.shape[0]):
        lo = bounds[s, 0]
        hi = bounds[s, 1]
        a = np.zeros((r, k))
        P = P0.copy()
        frozen = False
        stable = 0
        f_prev = -1.0
        sqrt_f = 1.0
        log_f = 0.0
        for t in range(lo, hi):
            if not frozen:
                F = P[0, 0]
                if not (1e-300 < F < 1e300):
                    return W, np.nan
                for i in range(r):
                    acc = 0.0
                    for j in range(r):
                        acc += T[i, j] * P[j, 0]
                    M[i] = acc
                    K[i] = acc / F
                for i in range(r):
                    for j in range(r):
                        acc = 0.0
                        for l in range(r):
                            acc += T[i, l] * P[l, j]
                        TP[i, j] = acc
                for i in range(r):
                    for j in range(r):
                        acc = 0.0
                        for l in range(r):
                            acc += TP[i, l] * T[j, l]
                        P[i, j] = acc + RRT[i, j] - M[i] * M[j] / F
                if abs(F - f_prev) <= 1e-13 * F:
                    stable += 1
                    frozen = stable >= 3
                else:
                    stable = 0
                f_prev = F
                sqrt_f = math.sqrt(F)
                log_f = math.log(F)
            sumlogF += log_f
            for c in range(k):
                v = U[t, c] - a[0, c]
                W[t, c] = v / sqrt_f
                for i in range(r):
                    acc = K[i] * v
                    for j in range(r):
                        acc += T[i, j] * a[j, c]
                    tmp[i] = acc
                for i in range(r):
                    a[i, c] = tmp[i]
    return W, sumlogF


try:  # pragma: no cover - environment dependent
    from numba import njit

    _whiten_segments = njit(cache=True)(_whiten_segments_loops)
except Exception:  # pragma: no cover
    _whiten_segments = _whiten_segments_py


# --- likelihood --------------------------------------------------------------

def _segments_array(problem: RegressionProblem, segments: GapMap | None) -> np.ndarray:
    """Gap-free row runs of the problem, as an (m, 2) int array.

    Segment boundaries come from adjacency of the kept rows in the source
    grid; an explicitly supplied :class:`GapMap` can only split further.
    """
    runs = problem.segments()
    if segments is not None:
        cuts = set()
        for lo, hi in segments.complete_row_segments():
            cuts.add(lo)
            cuts.add(hi)
        refined = []
        pos = {int(k): i for i, k in enumerate(problem.row_index)}
        for lo, hi in runs:
            inner = [lo] + sorted(
                pos[c] for c in cuts if c in pos and lo < pos[c] < hi
            ) + [hi]
            refined.extend((a, b) for a, b in zip(inner[:-1], inner[1:]) if b > a)
        runs = refined
    return np.array(runs, dtype=np.int64).reshape(-1, 2)


def _profile(U: np.ndarray, bounds: np.ndarray, phi: np.ndarray, theta: np.ndarray):
    """Whiten, then profile beta and sigma2. Returns None on failure."""
    T, RRT, P0 = _state_space(phi, theta)
    W, sumlogF = _whiten_segments(U, bounds, T, RRT, P0)
    if not np.isfinite(sumlogF):
        return None
    wy, wx = W[:, 0], W[:, 1:]
    beta, *_ = np.linalg.lstsq(wx, wy, rcond=None)
    resid = wy - wx @ beta
    n = U.shape[0]
    rss = float(resid @ resid)
    if not rss > 0.0:
        rss = 1e-300
    sigma2 = rss / n
    loglik = -0.5 * (n * math.log(2.0 * math.pi) + n * math.log(sigma2) + sumlogF + n)
    return beta, sigma2, loglik, resid, wx


def profile_fit(problem: RegressionProblem, phi, theta, segments: GapMap | None = None):
    """Evaluation mode: profile (beta, sigma2, loglik) at fixed phi/theta.

    With phi = theta = [] the whitening is the identity and the returned
    beta is exactly the OLS solution.
    """
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if not is_stationary(phi):
        raise UnstableParameters(f"non-stationary AR coefficients {phi}")
    if not is_invertible(theta):
        raise UnstableParameters(f"non-invertible MA coefficients {theta}")
    U = np.ascontiguousarray(np.column_stack([problem.y, problem.x]))
    bounds = _segments_array(problem, segments)
    out = _profile(U, bounds, phi, theta)
    if out is None:
        raise NonFiniteLikelihood("likelihood not finite at the requested parameters")
    beta, sigma2, loglik, _, _ = out
    return beta, sigma2, loglik


def make_objective(problem: RegressionProblem, spec: ArmaxSpec, segments: GapMap | None = None):
    """Negative profile log-likelihood over the unconstrained parameter space."""
    U = np.ascontiguousarray(np.column_stack([problem.y, problem.x]))
    bounds = _segments_array(problem, segments)

    def negloglik(z: np.ndarray) -> float:
        phi, theta = _unpack(np.asarray(z, dtype=float), spec)
        out = _profile(U, bounds, phi, theta)
        if out is None:
            return _BIG
        return -out[2]

    return negloglik


# --- initialization ----------------------------------------------------------

def _lagged_rows(series: np.ndarray, bounds: np.ndarray, lags: int):
    """Stacked (target, lag-matrix) rows that never cross segment bounds."""
    ys, xs = [], []
    for lo, hi in bounds:
        if hi - lo <= lags:
            continue
        seg = series[lo:hi]
        ys.append(seg[lags:])
        xs.append(np.column_stack([seg[lags - j - 1 : len(seg) - j - 1] for j in range(lags)]))
    if not ys:
        return None
    return np.concatenate(ys), np.vstack(xs)


def _hannan_rissanen(resid: np.ndarray, bounds: np.ndarray, p: int, q: int):
    """Two-stage startup values for (phi, theta) from OLS residuals."""
    phi0 = np.zeros(p)
    theta0 = np.zeros(q)
    try:
        if q == 0:
            out = _lagged_rows(resid, bounds, p)
            if out is None:
                return phi0, theta0
            y, x = out
            phi0 = np.linalg.lstsq(x, y, rcond=None)[0]
            return phi0, theta0
        m = max(20, 2 * (p + q))
        m = min(m, max(p + q + 1, resid.size // 10))
        out = _lagged_rows(resid, bounds, m)
        if out is None:
            return phi0, theta0
        y, x = out
        ar_long = np.linalg.lstsq(x, y, rcond=None)[0]
        eps = np.zeros_like(resid)
        for lo, hi in bounds:
            seg = resid[lo:hi]
            if hi - lo <= m:
                continue
            fitted = np.column_stack(
                [seg[m - j - 1 : len(seg) - j - 1] for j in range(m)]
            ) @ ar_long
            eps[lo + m : hi] = seg[m:] - fitted
        lags = max(p, q)
        ys, xs = [], []
        for lo, hi in bounds:
            if hi - lo <= lags:
                continue
            seg_e = resid[lo:hi]
            seg_eps = eps[lo:hi]
            cols = [seg_e[lags - j - 1 : len(seg_e) - j - 1] for j in range(p)]
            cols += [seg_eps[lags - j - 1 : len(seg_eps) - j - 1] for j in range(q)]
            ys.append(seg_e[lags:])
            xs.append(np.column_stack(cols))
        if not ys:
            return phi0, theta0
        coef = np.linalg.lstsq(np.vstack(xs), np.concatenate(ys), rcond=None)[0]
        phi0, theta0 = coef[:p], coef[p:]
    except np.linalg.LinAlgError:
        pass
    return phi0, theta0


# --- fitting -----------------------------------------------------------------

def fit_armax(
    problem: RegressionProblem,
    spec: ArmaxSpec = ArmaxSpec(4, 1),
    segments: GapMap | None = None,
    max_iter: int = 500,
    acf_max_lag: int | None = None,
) -> ArmaxFit:
    """Maximize the exact likelihood over (phi, theta), profiling beta/sigma2.

    Startup: beta implicitly from OLS, (phi, theta) by Hannan-Rissanen on
    the OLS residuals. Quasi-Newton (L-BFGS-B) ascent with numerical
    gradients in the unconstrained reparameterized space; relative
    log-likelihood tolerance 1e-8, at most ``max_iter`` iterations. A
    stalled optimizer returns ``converged=False`` with the best point
    found rather than raising.

    beta standard errors are the profiled-GLS ones at the optimum,
    sigma2_hat * (x~' x~)^-1 with x~ the whitened regressors.
    """
    bounds = _segments_array(problem, segments)
    total = int(np.sum(bounds[:, 1] - bounds[:, 0]))
    need = 10 * (spec.p + spec.q) + problem.n_v
    if total <= need:
        raise SegmentTooShort(f"{total} usable rows; need more than {need}")

    ols0 = fit_ols(problem, acf_max_lag=acf_max_lag or 20)
    phi0, theta0 = _hannan_rissanen(ols0.residuals, bounds, spec.p, spec.q)
    z0 = _pack(phi0, theta0)
    objective = make_objective(problem, spec, segments)
    f0 = objective(z0)
    if not f0 < _BIG:
        z0 = np.zeros(spec.p + spec.q)
        f0 = objective(z0)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(
            objective,
            z0,
            method="L-BFGS-B",
            jac="3-point",
            options={"maxiter": max_iter, "ftol": 1e-8},
        )
    z_hat, f_hat = (res.x, float(res.fun)) if float(res.fun) <= f0 else (z0, f0)
    converged = bool(res.success) and f_hat < _BIG
    if not f_hat < _BIG:
        raise NonFiniteLikelihood("likelihood never became finite during optimization")

    phi, theta = _unpack(z_hat, spec)
    assert is_stationary(phi) and is_invertible(theta)

    U = np.ascontiguousarray(np.column_stack([problem.y, problem.x]))
    beta, sigma2, loglik, resid_w, wx = _profile(U, bounds, phi, theta)
    n = problem.n
    u, s, vt = np.linalg.svd(wx, full_matrices=False)
    s = np.where(s > s[0] * 1e-12, s, np.inf)
    cov_diag = np.sum((vt.T / s) ** 2, axis=1) * (n / max(n - problem.n_v - spec.p - spec.q, 1)) * sigma2
    se = np.sqrt(cov_diag)
    dof = max(n - problem.n_v - spec.p - spec.q, 1)
    tcrit = float(stats.t.ppf(0.975, dof))
    ci95 = np.column_stack([beta - tcrit * se, beta + tcrit * se])

    if acf_max_lag is None:
        acf_max_lag = 50 if problem.dt_seconds <= 60.0 else 20
    diag = residual_diagnostics(resid_w, max_lag=acf_max_lag, model_df=spec.p + spec.q)
    k_params = problem.n_v + spec.p + spec.q + 1
    return ArmaxFit(
        beta=beta,
        se=se,
        ci95=ci95,
        phi=phi,
        theta=theta,
        sigma2=sigma2,
        loglik=loglik,
        aic=2.0 * k_params - 2.0 * loglik,
        diagnostics=diag,
        converged=converged,
        evap_ids=problem.evap_ids,
        residuals=resid_w,
    )


def simulate_arma(phi, theta, sigma2: float, n: int, seed) -> np.ndarray:
    """Draw a stationary ARMA(p, q) realization with Gaussian innovations.

    A burn-in of 10 (p+q) + 100 samples is generated and discarded so the
    output starts in the stationary regime. ``seed`` may be an integer or
    a numpy Generator.
    """
    phi = np.asarray(phi, dtype=float).reshape(-1)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if not is_stationary(phi):
        raise UnstableParameters(f"non-stationary AR coefficients {phi}")
    if not is_invertible(theta):
        raise UnstableParameters(f"non-invertible MA coefficients {theta}")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    burn = 10 * (phi.size + theta.size) + 100
    eps = rng.standard_normal(n + burn) * math.sqrt(sigma2)
    out = signal.lfilter(np.concatenate([[1.0], theta]), np.concatenate([[1.0], -phi]), eps)
    return out[burn:]
