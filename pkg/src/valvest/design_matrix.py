"""Build the mass-balance regression problem from plant data.

Each evaporator's refrigerant mass flow is its valve constant A_i times

    x_{i,t} = sqrt((P_rec,t - P_e,i,t) * rho_liq(P_rec,t)) * lambda_{i,t}

and the flows must jointly balance what the MT compressor rack pumps minus
what returns through the receiver by-pass:

    y_t = mdot_comp,t - mdot_bypass,t
        = f_comp,t * eta_vol * V_s * rho_gas * (1 - Q(h_gc,t, P_rec,t))

so y_t = sum_i x_{i,t} A_i + noise is a linear regression with the valve
constants as coefficients.

Conventions pinned here:

* pressures are converted bar -> Pa before the square root, so x is SI;
* rho_gas is evaluated at the MT suction pressure, taken as the maximum of
  the MT evaporator pressures at each timestamp (the balance is for the MT
  rack; suction sits at the highest evaporating pressure feeding it);
* a negative pressure difference (sensor glitch) is clipped to zero inside
  the square root (physically "no flow") rather than dropping the row;
  rows are dropped only when a channel is missing;
* regressors are scaled by VALVE_UNIT_SCALE so the fitted coefficients come
  out directly in the valve catalog's unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .errors import DegenerateColumn, InsufficientRows, ZeroVariance
from .thermo_props import SaturationTable, gas_quality, saturation_props
from .timeseries_io import PlantDataset, format_rfc3339

__all__ = [
    "SystemConstants",
    "RegressionProblem",
    "ColinearityReport",
    "VALVE_UNIT_SCALE",
    "compressor_massflow",
    "bypass_massflow",
    "mt_suction_pressure",
    "regressor_matrix",
    "build_problem",
    "make_problem_builder",
    "colinearity_report",
]

#: Effective orifice area, in m^2, of one valve-catalog unit. With SI
#: regressors (Pa, kg/m^3) this single factor makes x*A come out in kg/s
#: when A is a catalog number, so estimates land in catalog units and the
#: synthetic plant round-trips the catalog values exactly.
VALVE_UNIT_SCALE = math.sqrt(10.0) * 1e-6

_BAR_TO_PA = 1e5


@dataclass(frozen=True)
class SystemConstants:
    """Compressor-side constants of the plant."""

    v_s: float           # stroke volume, m^3
    eta_vol: float = 0.9  # volumetric efficiency

    def __post_init__(self):
        if not self.v_s > 0:
            raise ValueError("V_s must be positive")
        if not 0.5 < self.eta_vol <= 1.0:
            raise ValueError("eta_vol must be in (0.5, 1.0]")


@dataclass(frozen=True)
class RegressionProblem:
    """y = x @ beta regression data, complete rows only.

    Column order matches the dataset's evaporator order (LT block then MT
    block). ``row_index`` maps each kept row back to its dataset row, which
    preserves gap structure for segment-aware estimators.
    """

    y: np.ndarray
    x: np.ndarray
    evap_ids: tuple[str, ...]
    start: datetime
    dt_seconds: float
    row_index: np.ndarray

    def __post_init__(self):
        if self.x.shape != (self.y.size, len(self.evap_ids)):
            raise ValueError("x shape mismatch")
        if self.row_index.shape != self.y.shape:
            raise ValueError("row_index length mismatch")

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def n_v(self) -> int:
        return self.x.shape[1]

    def timestamps(self) -> list[datetime]:
        return [self.start + timedelta(seconds=float(k) * self.dt_seconds) for k in self.row_index]

    def segments(self) -> list[tuple[int, int]]:
        """Half-open runs of rows that were adjacent in the source grid."""
        if self.n == 0:
            return []
        breaks = np.flatnonzero(np.diff(self.row_index) != 1) + 1
        bounds = np.concatenate(([0], breaks, [self.n]))
        return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]

    def to_csv(self) -> str:
        """Serialize as ``timestamp,y,x_1..x_nV`` for external inspection."""
        header = ["timestamp", "y"] + [f"x_{j + 1}" for j in range(self.n_v)]
        lines = [",".join(header)]
        for ts, y, row in zip(self.timestamps(), self.y, self.x):
            cells = [format_rfc3339(ts), repr(float(y))]
            cells += [repr(float(v)) for v in row]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def compressor_massflow(f_comp, consts: SystemConstants, rho_gas):
    """Rack mass flow f_comp * eta_vol * V_s * rho_gas, in kg/s."""
    return np.asarray(f_comp, dtype=float) * consts.eta_vol * consts.v_s * np.asarray(rho_gas, dtype=float)


def bypass_massflow(m_mt, h_gc, p_rec, table: SaturationTable):
    """Receiver by-pass flow Q(h_gc, P_rec) * m_mt, in kg/s."""
    return gas_quality(table, h_gc, p_rec) * np.asarray(m_mt, dtype=float)


def mt_suction_pressure(p_e: np.ndarray, n_lt: int) -> np.ndarray:
    """MT-rack suction pressure: max over the MT evaporator pressures.

    ``p_e`` is the (n, n_V) pressure matrix in dataset column order (LT
    block first). Used identically by the estimator and the simulator so
    the closed loop is bit-consistent.
    """
    if p_e.shape[1] <= n_lt:
        raise ValueError("dataset has no MT evaporators")
    return np.max(p_e[:, n_lt:], axis=1)


def regressor_matrix(ds: PlantDataset, table: SaturationTable) -> np.ndarray:
    """Per-evaporator regressors x (catalog-unit scaled), NaN where missing.

    Row t, column i is sqrt(max(P_rec - P_e_i, 0) * rho_liq(P_rec)) *
    lambda_i * VALVE_UNIT_SCALE with pressures in Pa. Rows with missing
    inputs are NaN; no rows are dropped, which keeps the time grid intact
    for spectral analysis.
    """
    n, n_v = ds.p_e.shape
    x = np.full((n, n_v), np.nan)
    ok_rec = ~ds.missing["P_rec"]
    rho_l = np.full(n, np.nan)
    rho_l[ok_rec] = saturation_props(table, ds.p_rec[ok_rec])[0]
    dp = np.clip(ds.p_rec[:, None] - ds.p_e, 0.0, None) * _BAR_TO_PA
    with np.errstate(invalid="ignore"):
        x = np.sqrt(dp * rho_l[:, None]) * ds.lam * VALVE_UNIT_SCALE
    x[ds.missing["P_e"] | ds.missing["lambda"] | ~ok_rec[:, None]] = np.nan
    return x


def build_problem(
    ds: PlantDataset, consts: SystemConstants, table: SaturationTable
) -> RegressionProblem:
    """Assemble the regression problem, dropping rows with missing channels.

    Raises :class:`DegenerateColumn` when a valve never opened (all-zero
    column) and :class:`InsufficientRows` below 10 rows per coefficient.
    """
    builder = make_problem_builder(ds, table, eta_vol=consts.eta_vol)
    return builder(consts.v_s)


def make_problem_builder(ds: PlantDataset, table: SaturationTable, eta_vol: float = 0.9):
    """Precompute everything V_s-independent; return ``builder(v_s)``.

    The response is linear in V_s (it only scales the compressor mass
    flow), so the stroke-volume search can rebuild problems cheaply.
    """
    keep = ds.complete_rows()
    row_index = np.flatnonzero(keep)
    n_v = ds.n_evaporators
    if row_index.size < max(10 * n_v, n_v + 1):
        raise InsufficientRows(
            f"{row_index.size} complete rows; need at least {max(10 * n_v, n_v + 1)}"
        )

    x = regressor_matrix(ds, table)[keep]
    zero_cols = np.flatnonzero(~np.any(x != 0.0, axis=0))
    if zero_cols.size:
        raise DegenerateColumn([ds.evap_ids[j] for j in zero_cols])

    p_rec = ds.p_rec[keep]
    suction = mt_suction_pressure(ds.p_e[keep], ds.n_lt)
    rho_gas = saturation_props(table, suction)[1]
    q = gas_quality(table, ds.h_gc[keep], p_rec)
    # Response per unit stroke volume: y(V_s) = V_s * y_unit.
    y_unit = ds.f_comp[keep] * eta_vol * rho_gas * (1.0 - q)

    def builder(v_s: float) -> RegressionProblem:
        consts = SystemConstants(v_s=v_s, eta_vol=eta_vol)
        return RegressionProblem(
            y=consts.v_s * y_unit,
            x=x,
            evap_ids=ds.evap_ids,
            start=ds.start,
            dt_seconds=ds.dt_seconds,
            row_index=row_index,
        )

    return builder


@dataclass(frozen=True)
class ColinearityReport:
    """Per-column co-linearity screen."""

    evap_ids: tuple[str, ...]
    max_abs_corr: np.ndarray
    vif: np.ndarray
    flagged: tuple[str, ...]

    CORR_LIMIT = 0.7
    VIF_LIMIT = 10.0


def colinearity_report(p: RegressionProblem) -> ColinearityReport:
    """Pairwise correlations and variance inflation factors of the design.

    VIF_j = 1/(1 - R^2_j) with R^2_j from regressing column j on all other
    columns (with intercept, the conventional centered definition).
    Columns with max |corr| > 0.7 or VIF > 10 are flagged; a perfectly
    dependent column reports VIF = inf.
    """
    x = p.x
    if x.shape[1] < 2:
        raise ValueError("co-linearity needs at least 2 columns")
    sd = x.std(axis=0)
    dead = np.flatnonzero(sd == 0.0)
    if dead.size:
        raise ZeroVariance([p.evap_ids[j] for j in dead])

    corr = np.corrcoef(x, rowvar=False)
    np.fill_diagonal(corr, 0.0)
    max_abs_corr = np.max(np.abs(corr), axis=1)

    n, k = x.shape
    vif = np.empty(k)
    for j in range(k):
        others = np.column_stack([np.delete(x, j, axis=1), np.ones(n)])
        coef, *_ = np.linalg.lstsq(others, x[:, j], rcond=None)
        resid = x[:, j] - others @ coef
        tss = float(np.sum((x[:, j] - x[:, j].mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid**2)) / tss
        vif[j] = math.inf if r2 > 1.0 - 1e-12 else 1.0 / (1.0 - r2)

    flagged = tuple(
        p.evap_ids[j]
        for j in range(k)
        if max_abs_corr[j] > ColinearityReport.CORR_LIMIT or vif[j] > ColinearityReport.VIF_LIMIT
    )
    return ColinearityReport(p.evap_ids, max_abs_corr, vif, flagged)
