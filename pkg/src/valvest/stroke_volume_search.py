"""Joint search for the unknown compressor stroke volume and valve types.

When V_s is unknown, every OLS estimate is off by the common factor V_s,
but the *pattern* of coefficients still identifies the installed valve
types: for a candidate set ``a`` of catalog constants, cluster the
coefficient estimates into |a| groups and measure, in log space, how far
the cluster centers sit from the candidate constants,

    eps1_i = ln C_i - ln a_i   (both sorted ascending)
    E1 = sqrt(sum_i eps1_i^2) / N_eps1

(the formula is used literally as printed in its source: the root of the
sum divided by N, not by sqrt(N)). Minimizing E1 over V_s with a scalar
Brent search makes the coefficients land on the candidate constants if the
candidate is right; candidate sets are then ranked by E1, ties broken by
the within-cluster log spread

    E2 = (1/n_V) sum_i sum_{beta_j in S_i} (ln C_i - ln beta_j)^2.

All 2^7 - 1 = 127 non-empty catalog subsets are tried (those with more
types than coefficients are skipped). OLS, not ARMAX, is fitted inside the
loop; refit the winner with ARMAX afterwards if serial correlation matters.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from importlib import resources
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .design_matrix import RegressionProblem
from .errors import DataError, KTooLarge, NonPositiveBeta, NumericalError
from .ols import fit_ols

__all__ = [
    "ValveCatalog",
    "CandidateRow",
    "load_default_catalog",
    "kmeans_1d",
    "candidate_error",
    "brent_min",
    "search_valve_sets",
]

PROBLEM_BUILDER = Callable[[float], RegressionProblem]

#: Default absolute V_s search window (m^3): reciprocating rack stroke
#: volumes fall well inside this band.
DEFAULT_VS_BOUNDS = (1e-5, 1e-1)

#: E1 values closer than this count as tied and are ordered by E2. The
#: primary key needs a tie band because E1 is exactly degenerate at k=1:
#: a single cluster center can always be rescaled onto a single candidate
#: constant through V_s, so every singleton set reaches E1 ~ optimizer
#: tolerance no matter how badly it describes the data. Within a band the
#: within-cluster spread E2 separates such degenerate fits from genuine
#: structure matches.
E1_TIE_TOL = 1e-3

_KMEANS_RESTARTS = 20
_LLOYD_MAX_ITER = 100


@dataclass(frozen=True)
class ValveCatalog:
    """Available valve types with their catalog constants, ascending."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        names = [n for n, _ in self.entries]
        values = [a for _, a in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate valve names")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("catalog constants must be strictly increasing")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.entries)

    @property
    def values(self) -> np.ndarray:
        return np.array([a for _, a in self.entries])

    @classmethod
    def from_csv(cls, text: str) -> "ValveCatalog":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        if lines[0] != "name,A":
            raise ValueError(f"bad catalog header {lines[0]!r}")
        entries = []
        for ln in lines[1:]:
            name, a = ln.rsplit(",", 1)
            entries.append((name, float(a)))
        return cls(tuple(entries))


def load_default_catalog() -> ValveCatalog:
    text = resources.files("valvest").joinpath("data/valve_catalog.csv").read_text("utf-8")
    return ValveCatalog.from_csv(text)


def kmeans_1d(values: Sequence[float], k: int, seed=0) -> tuple[np.ndarray, np.ndarray]:
    """Cluster scalars into ``k`` groups: restarted Lloyd plus split polish.

    k-means++ seeding, 20 restarts. In one dimension optimal clusters are
    contiguous on the sorted values, so every converged Lloyd partition
    (plus a deterministic quantile start) is polished by exact coordinate
    descent on its split points before the best one is kept; this reliably
    reaches the global optimum at the problem sizes seen here without
    resorting to the O(k n^2) dynamic program. Deterministic for a given
    seed. Returns (sorted centers, assignment to sorted-center indices).
    Raises :class:`KTooLarge` when k exceeds the number of distinct values.
    """
    x = np.asarray(values, dtype=float).ravel()
    if k < 1:
        raise ValueError("k must be >= 1")
    n_distinct = np.unique(x).size
    if k > n_distinct:
        raise KTooLarge(f"k={k} exceeds {n_distinct} distinct values")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    n = x.size
    xs = np.sort(x)
    ps = np.concatenate([[0.0], np.cumsum(xs)])
    ps2 = np.concatenate([[0.0], np.cumsum(xs * xs)])

    def seg_cost(i: int, j: int) -> float:
        if j - i <= 0:
            return 0.0
        s = ps[j] - ps[i]
        return max((ps2[j] - ps2[i]) - s * s / (j - i), 0.0)

    def polish(bounds: np.ndarray) -> np.ndarray:
        # make the split vector valid (strictly increasing, all non-empty)
        for j in range(1, k):
            bounds[j] = max(bounds[j], bounds[j - 1] + 1)
        for j in range(k - 1, 0, -1):
            bounds[j] = min(bounds[j], bounds[j + 1] - 1)
        improved = True
        while improved:
            improved = False
            for j in range(1, k):
                lo, hi = bounds[j - 1], bounds[j + 1]
                best_s = bounds[j]
                best_c = seg_cost(lo, best_s) + seg_cost(best_s, hi)
                for s in range(lo + 1, hi):
                    c = seg_cost(lo, s) + seg_cost(s, hi)
                    if c < best_c - 1e-15:
                        best_s, best_c = s, c
                if best_s != bounds[j]:
                    bounds[j] = best_s
                    improved = True
        return bounds

    best_sse = math.inf
    best_bounds = None

    def consider(raw_bounds) -> None:
        nonlocal best_sse, best_bounds
        b = polish(np.asarray(raw_bounds, dtype=int))
        sse = float(sum(seg_cost(b[j], b[j + 1]) for j in range(k)))
        if sse < best_sse - 1e-15:
            best_sse = sse
            best_bounds = b

    for _ in range(_KMEANS_RESTARTS):
        centers = _kmeanspp_seed(x, k, rng)
        assign = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
        for _ in range(_LLOYD_MAX_ITER):
            for j in range(k):
                members = x[assign == j]
                if members.size:
                    centers[j] = members.mean()
                else:
                    # re-seed an empty cluster at the worst-fit point
                    far = int(np.argmax(np.abs(x - centers[assign])))
                    centers[j] = x[far]
            new_assign = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
            if np.array_equal(new_assign, assign):
                break
            assign = new_assign
        # converted to contiguous form: count members per ascending center
        ranks = np.empty(k, dtype=int)
        ranks[np.argsort(centers, kind="stable")] = np.arange(k)
        counts = np.bincount(ranks[assign], minlength=k)
        consider(np.concatenate([[0], np.cumsum(counts)]))

    consider([0] + [round(n * j / k) for j in range(1, k)] + [n])

    centers = np.array([xs[best_bounds[j]:best_bounds[j + 1]].mean() for j in range(k)])
    assign = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
    return centers, assign


def _kmeanspp_seed(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty(k)
    centers[0] = x[rng.integers(x.size)]
    d2 = (x - centers[0]) ** 2
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j:] = x[rng.integers(x.size, size=k - j)]
            break
        centers[j] = x[rng.choice(x.size, p=d2 / total)]
        d2 = np.minimum(d2, (x - centers[j]) ** 2)
    return centers


def _e1(centers: np.ndarray, a_sorted: np.ndarray) -> float:
    eps1 = np.log(centers) - np.log(a_sorted)
    return float(np.sqrt(np.sum(eps1**2)) / eps1.size)


def _e2(centers: np.ndarray, assign: np.ndarray, beta_pos: np.ndarray) -> float:
    gaps = np.log(centers[assign]) - np.log(beta_pos)
    return float(np.sum(gaps**2) / beta_pos.size)


def _cluster_positive(beta: np.ndarray, ids: Sequence[str], k: int, seed):
    pos = beta > 0.0
    if np.count_nonzero(pos) < k:
        raise NonPositiveBeta([i for i, ok in zip(ids, pos) if not ok])
    if not np.all(pos):
        excluded = [i for i, ok in zip(ids, pos) if not ok]
        warnings.warn(
            f"excluding non-positive coefficient(s) from clustering: {', '.join(excluded)}",
            stacklevel=3,
        )
    centers, assign = kmeans_1d(beta[pos], k, seed)
    full_assign = np.full(beta.size, -1)
    full_assign[pos] = assign
    return centers, full_assign, beta[pos], assign


def candidate_error(builder: PROBLEM_BUILDER, vs: float, a: Sequence[float], seed=0):
    """E1 of the candidate set ``a`` at stroke volume ``vs``.

    Rebuilds the regression problem at ``vs``, fits OLS, clusters the
    positive coefficients into |a| groups and compares sorted log cluster
    centers with sorted log candidate constants. Returns (E1, centers,
    assignment) where assignment[i] is the cluster of coefficient i
    (-1 for coefficients excluded as non-positive).
    """
    if not vs > 0:
        raise ValueError("vs must be positive")
    a_sorted = np.sort(np.asarray(a, dtype=float))
    if a_sorted.size < 1 or np.any(a_sorted <= 0):
        raise ValueError("candidate constants must be positive")
    problem = builder(vs)
    fit = fit_ols(problem)
    centers, full_assign, _, _ = _cluster_positive(fit.beta, problem.evap_ids, a_sorted.size, seed)
    return _e1(centers, a_sorted), centers, full_assign


def brent_min(f: Callable[[float], float], lo: float, hi: float, tol: float | None = None, max_evals: int = 200) -> float:
    """Scalar minimization by Brent's method on [lo, hi].

    Golden-section steps with successive parabolic interpolation where it
    helps; ``tol`` is the absolute tolerance on the argument. Never raises:
    the best point found within ``max_evals`` evaluations is returned.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    if tol is None:
        tol = 1e-8 * (hi - lo)
    golden = 0.3819660112501051
    eps_seq = 1e-12

    a, b = lo, hi
    x = w = v = a + golden * (b - a)
    fx = fw = fv = f(x)
    evals = 1
    d = e = b - a
    while evals < max_evals:
        m = 0.5 * (a + b)
        tol1 = tol + eps_seq * abs(x)
        tol2 = 2.0 * tol1
        if abs(x - m) <= tol2 - 0.5 * (b - a):
            break
        use_golden = True
        if abs(e) > tol1:
            # parabola through x, v, w
            r = (x - w) * (fx - fv)
            qq = (x - v) * (fx - fw)
            pp = (x - v) * qq - (x - w) * r
            qq = 2.0 * (qq - r)
            if qq > 0.0:
                pp = -pp
            qq = abs(qq)
            e_old, e = e, d
            if abs(pp) < abs(0.5 * qq * e_old) and pp > qq * (a - x) and pp < qq * (b - x):
                d = pp / qq
                u = x + d
                if u - a < tol2 or b - u < tol2:
                    d = tol1 if x < m else -tol1
                use_golden = False
        if use_golden:
            e = (b if x < m else a) - x
            d = golden * e
        u = x + (d if abs(d) >= tol1 else (tol1 if d > 0 else -tol1))
        fu = f(u)
        evals += 1
        if fu <= fx:
            if u < x:
                b = x
            else:
                a = x
            v, w, x = w, x, u
            fv, fw, fx = fw, fx, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, w = w, u
                fv, fw = fw, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return x


@dataclass(frozen=True)
class CandidateRow:
    """One candidate valve set's search outcome."""

    names: tuple[str, ...]
    a: tuple[float, ...]
    vs_hat: float
    e1: float
    e2: float
    centers: tuple[float, ...]
    assignment: tuple[int, ...]   # per coefficient; -1 = excluded
    error: str | None = None
    rank: int = 0


def _evaluate_candidate(builder, names, a_values, vs_bounds, seed, tol):
    a_sorted = np.sort(a_values)

    def objective(vs: float) -> float:
        try:
            e1, _, _ = candidate_error(builder, vs, a_sorted, seed)
            return e1
        except (NumericalError, DataError):
            return math.inf

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vs_hat = brent_min(objective, vs_bounds[0], vs_bounds[1], tol=tol)
        try:
            e1, centers, assign = candidate_error(builder, vs_hat, a_sorted, seed)
            problem = builder(vs_hat)
            beta = fit_ols(problem).beta
            pos = beta > 0
            e2 = _e2(centers, assign[pos], beta[pos])
        except (NumericalError, DataError) as exc:
            return CandidateRow(
                names=names,
                a=tuple(a_sorted),
                vs_hat=math.nan,
                e1=math.inf,
                e2=math.inf,
                centers=(),
                assignment=(),
                error=f"{type(exc).__name__}: {exc}",
            )
    return CandidateRow(
        names=names,
        a=tuple(a_sorted),
        vs_hat=float(vs_hat),
        e1=e1,
        e2=e2,
        centers=tuple(centers),
        assignment=tuple(int(c) for c in assign),
    )


def search_valve_sets(
    builder: PROBLEM_BUILDER,
    catalog: ValveCatalog,
    vs_bounds: tuple[float, float] | None = None,
    vs_guess: float | None = None,
    seed: int = 0,
    jobs: int | None = None,
    tol: float | None = None,
) -> list[CandidateRow]:
    """Rank every non-empty catalog subset by (E1, E2) after optimizing V_s.

    For each feasible subset (size <= number of coefficients) the E1 error
    is Brent-minimized over V_s within ``vs_bounds`` (default: [0.1, 10] x
    ``vs_guess``, or an absolute band when no guess is given). E1 is the
    primary sort key compared in bands of :data:`E1_TIE_TOL`; candidates
    inside one band are ordered by E2, then name. Per-candidate failures
    are recorded in the row's ``error`` field, never raised. The result is
    deterministic for a given seed.
    """
    if vs_bounds is None:
        if vs_guess is not None:
            if not vs_guess > 0:
                raise ValueError("vs_guess must be positive")
            vs_bounds = (0.1 * vs_guess, 10.0 * vs_guess)
        else:
            vs_bounds = DEFAULT_VS_BOUNDS
    n_v = builder(0.5 * (vs_bounds[0] + vs_bounds[1])).n_v

    tasks = []
    for k in range(1, len(catalog.entries) + 1):
        if k > n_v:
            break
        for combo in combinations(catalog.entries, k):
            names = tuple(n for n, _ in combo)
            a_values = np.array([a for _, a in combo])
            tasks.append((names, a_values))

    def run(idx_task):
        idx, (names, a_values) = idx_task
        child_seed = int(np.random.SeedSequence([seed, idx]).generate_state(1)[0])
        return _evaluate_candidate(builder, names, a_values, vs_bounds, child_seed, tol)

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run, enumerate(tasks)))
    else:
        rows = [run(t) for t in enumerate(tasks)]

    def key(r: CandidateRow):
        band = math.inf if math.isinf(r.e1) else math.floor(r.e1 / E1_TIE_TOL)
        return (band, r.e2, r.names)

    rows.sort(key=key)
    return [replace(row, rank=i + 1) for i, row in enumerate(rows)]
