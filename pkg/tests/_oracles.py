"""Independent reference implementations used to validate the package.

Everything here is computed with plain numpy and textbook algorithms,
deliberately sharing no code with the package under test.
"""

from __future__ import annotations

import numpy as np


def dp_kmeans_sse(values, k: int) -> float:
    """Exact optimal 1-D k-means SSE via dynamic programming.

    Optimal 1-D clusters are contiguous in sorted order, so the global
    optimum is a shortest path over split points with prefix-sum segment
    costs. O(k n^2); fine for the test sizes used here.
    """
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    ps = np.concatenate([[0.0], np.cumsum(x)])
    ps2 = np.concatenate([[0.0], np.cumsum(x * x)])

    def seg_cost(i: int, j: int) -> float:
        s = ps[j] - ps[i]
        return (ps2[j] - ps2[i]) - s * s / (j - i)

    inf = float("inf")
    d = np.full((k + 1, n + 1), inf)
    d[0, 0] = 0.0
    for kk in range(1, k + 1):
        for j in range(kk, n + 1):
            best = inf
            for i in range(kk - 1, j):
                c = d[kk - 1, i] + seg_cost(i, j)
                if c < best:
                    best = c
            d[kk, j] = best
    return float(d[k, n])


def closed_form_vs(beta_at_unit_vs: np.ndarray, assignment: np.ndarray, a_sorted: np.ndarray) -> float:
    """Closed-form E1-optimal stroke volume.

    The response is linear in V_s, so beta(vs) = vs * beta(1) and every
    cluster center scales the same way; minimizing the sum of squared
    log-gaps over the common log-shift gives
    ln(vs*) = mean(ln a_i - ln C_i(1)).
    """
    k = a_sorted.size
    centers1 = np.array([beta_at_unit_vs[assignment == j].mean() for j in range(k)])
    return float(np.exp(np.mean(np.log(a_sorted) - np.log(np.sort(centers1)))))


def square_wave(n: int, period: float, duty: float, seed: int) -> np.ndarray:
    """Jittered on/off wave on a 1-minute grid (period jitter +-10 %)."""
    rng = np.random.default_rng(seed)
    lam = np.zeros(n)
    t = -rng.uniform(0.0, period)
    while t < n:
        p = period * (1.0 + rng.uniform(-0.1, 0.1))
        i0 = max(0, int(np.ceil(t)))
        i1 = min(n, int(np.ceil(t + duty * p)))
        if i1 > i0:
            lam[i0:i1] = 1.0
        t += p
    return lam


def reference_smoothed_periodogram(values: np.ndarray, nfft: int):
    """Hann + block-average + Daniell(5) periodogram, DC dropped.

    Returns (frequencies in cycles/min, smoothed power, one-sided density
    scale applied). Matches the pipeline contract without using any
    package code.
    """
    n = values.size
    w = np.hanning(nfft)
    scale = 2.0 / (1.0 * np.sum(w**2))
    nb = n // nfft
    p = np.zeros(nfft // 2 + 1)
    for i in range(nb):
        seg = values[i * nfft:(i + 1) * nfft]
        seg = (seg - seg.mean()) * w
        p += np.abs(np.fft.rfft(seg)) ** 2
    p *= scale / nb
    p[0] /= 2.0
    if nfft % 2 == 0:
        p[-1] /= 2.0
    stored = p[1:]
    sm = np.convolve(np.pad(stored, 2, mode="reflect"), np.full(5, 0.2), mode="valid")
    freqs = np.arange(1, nfft // 2 + 1) / nfft
    return freqs, sm


def ols_reference(x: np.ndarray, y: np.ndarray):
    """Textbook OLS: beta, standard errors, sigma2 via normal equations."""
    xtx_inv = np.linalg.inv(x.T @ x)
    beta = xtx_inv @ x.T @ y
    resid = y - x @ beta
    dof = y.size - x.shape[1]
    sigma2 = float(resid @ resid) / dof
    se = np.sqrt(np.diag(xtx_inv) * sigma2)
    return beta, se, sigma2


def arma_loglik_reference(e: np.ndarray, phi, theta, sigma2: float) -> float:
    """Exact Gaussian ARMA log-likelihood via the full covariance matrix.

    Builds the n x n Toeplitz covariance from the process autocovariance
    (computed by solving the Yule-Walker-type system on the state-space
    stationary covariance) and evaluates the multivariate normal density
    directly. O(n^3); only usable for small n.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float)) if len(np.atleast_1d(theta)) else np.zeros(0)
    p, q = phi.size, theta.size
    r = max(p, q + 1)
    T = np.zeros((r, r))
    T[:p, 0] = phi
    T[:-1, 1:] = np.eye(r - 1)
    R = np.zeros(r)
    R[0] = 1.0
    R[1:q + 1] = theta
    from scipy.linalg import solve_discrete_lyapunov

    P = solve_discrete_lyapunov(T, sigma2 * np.outer(R, R))
    n = e.size
    # autocovariance of the observed process y_t = [1,0,...] alpha_t
    gammas = [P[0, 0]]
    Tk = np.eye(r)
    for _ in range(1, n):
        Tk = T @ Tk
        gammas.append((Tk @ P)[0, 0])
    from scipy.linalg import toeplitz

    cov = toeplitz(np.array(gammas))
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    alpha = np.linalg.solve(cov, e)
    return float(-0.5 * (n * np.log(2.0 * np.pi) + logdet + e @ alpha))
