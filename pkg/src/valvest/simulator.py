"""Synthetic two-stage CO2 plant generator with known ground truth.

The generator runs the mass balance backwards: draw valve openings from
the configured control laws, evaluate the cabinet flows x_i * A_i from the
same regressor formula the estimator uses, then solve for the compressor
load that makes the stage-4a balance close identically,

    f_comp = sum_i(m_cab_i) / ((1 - Q) * eta_vol * V_s * rho_gas).

Because the identical helper functions compute both sides, noise-free data
round-trips through the estimator to machine precision, which is what
makes this module usable as an oracle. Noise enters the response pathway
(a perturbation of f_comp), not the regressors, so least-squares
assumptions hold exactly under the iid preset; regressor measurement
noise is a separate toggle.

Reproducibility: one Generator seeded from ``spec.seed`` is consumed in a
fixed order (valve openings in evaporator order, then response noise,
then measurement noise channel by channel), so identical specs yield
bit-identical datasets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import timedelta
from typing import Mapping, Union

import numpy as np
from scipy import signal

from .armax import simulate_arma
from .design_matrix import mt_suction_pressure, regressor_matrix
from .errors import InfeasibleSpec
from .thermo_props import gas_quality, load_default_table, saturation_props
from .timeseries_io import PlantDataset, format_rfc3339, parse_rfc3339
from .stroke_volume_search import load_default_catalog

__all__ = [
    "Hysteresis",
    "Modulating",
    "Profile",
    "EvaporatorSpec",
    "NoiseSpec",
    "PlantSpec",
    "GroundTruth",
    "simulate",
    "scenario_presets",
]

_MODULATING_AR = 0.99


@dataclass(frozen=True)
class Hysteresis:
    """On/off control: square wave with per-cycle period jitter of +-10 %."""

    period_min: float
    duty: float

    def __post_init__(self):
        if not self.period_min > 0:
            raise ValueError("period_min must be positive")
        if not 0.0 < self.duty < 1.0:
            raise ValueError("duty must be in (0, 1)")


@dataclass(frozen=True)
class Modulating:
    """Continuous control: slow clipped AR(1) wander around a mean opening."""

    mean: float
    wander: float

    def __post_init__(self):
        if not 0.0 < self.mean < 1.0:
            raise ValueError("mean opening must be in (0, 1)")
        if self.wander < 0:
            raise ValueError("wander must be non-negative")


@dataclass(frozen=True)
class Profile:
    """Slowly varying sinusoid base + amplitude*sin(2*pi*t/period + phase)."""

    base: float
    amplitude: float = 0.0
    period_min: float = 1440.0
    phase: float = 0.0

    def at(self, t_min: np.ndarray) -> np.ndarray:
        if self.amplitude == 0.0:
            return np.full_like(np.asarray(t_min, dtype=float), self.base)
        return self.base + self.amplitude * np.sin(
            2.0 * math.pi * np.asarray(t_min, dtype=float) / self.period_min + self.phase
        )

    @property
    def lo(self) -> float:
        return self.base - abs(self.amplitude)

    @property
    def hi(self) -> float:
        return self.base + abs(self.amplitude)


@dataclass(frozen=True)
class EvaporatorSpec:
    id: str
    group: str                       # "LT" or "MT"
    valve: str                       # catalog name
    control: Union[Hysteresis, Modulating]
    p_e: Profile                     # bar

    def __post_init__(self):
        if self.group not in ("LT", "MT"):
            raise ValueError(f"group must be LT or MT, got {self.group!r}")


@dataclass(frozen=True)
class NoiseSpec:
    """Response ARMA noise plus optional iid measurement noise per channel.

    ``response_sigma2`` is the innovation variance of the ARMA process, in
    (kg/s)^2 on the mass-flow response; it is injected by perturbing
    f_comp. ``measurement`` maps channel kinds ("p_e", "lambda",
    "p_rec", "f_comp", "h_gc") to iid Gaussian sigmas in channel units.
    """

    response_phi: tuple[float, ...] = ()
    response_theta: tuple[float, ...] = ()
    response_sigma2: float = 0.0
    measurement: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.response_sigma2 < 0:
            raise ValueError("response_sigma2 must be non-negative")
        bad = set(self.measurement) - {"p_e", "lambda", "p_rec", "f_comp", "h_gc"}
        if bad:
            raise ValueError(f"unknown measurement channels: {sorted(bad)}")


@dataclass(frozen=True)
class PlantSpec:
    evaporators: tuple[EvaporatorSpec, ...]
    p_rec: Profile                   # bar
    h_gc: Profile                    # J/kg
    v_s: float                       # m^3
    eta_vol: float = 0.9
    noise: NoiseSpec = NoiseSpec()
    duration_min: int = 20160
    seed: int = 0
    start: str = "2024-01-01T00:00:00Z"

    def __post_init__(self):
        if not self.evaporators:
            raise ValueError("need at least one evaporator")
        ids = [e.id for e in self.evaporators]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate evaporator ids")
        groups = [e.group for e in self.evaporators]
        n_lt = groups.count("LT")
        if groups != ["LT"] * n_lt + ["MT"] * (len(groups) - n_lt):
            raise ValueError("evaporators must list the LT block first, then MT")
        if "MT" not in groups:
            raise ValueError("need at least one MT evaporator (defines suction pressure)")
        if not self.v_s > 0:
            raise ValueError("v_s must be positive")
        if not 0.5 < self.eta_vol <= 1.0:
            raise ValueError("eta_vol must be in (0.5, 1]")
        if self.duration_min < 2:
            raise ValueError("duration_min must be >= 2")

    @property
    def n_lt(self) -> int:
        return sum(1 for e in self.evaporators if e.group == "LT")

    @property
    def evap_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.evaporators)


@dataclass(frozen=True)
class GroundTruth:
    """Everything the estimators are trying to recover, plus internals."""

    evap_ids: tuple[str, ...]
    valve_names: tuple[str, ...]
    a: np.ndarray                    # true valve constants, catalog units
    v_s: float
    noise: NoiseSpec
    x: np.ndarray                    # noise-free regressors, (n, n_V)
    m_cab: np.ndarray                # noise-free cabinet flows x*A, kg/s
    f_comp_clean: np.ndarray         # required load before noise/clipping


def _hysteresis_lambda(n: int, control: Hysteresis, rng: np.random.Generator) -> np.ndarray:
    lam = np.zeros(n)
    t = -rng.uniform(0.0, control.period_min)    # random initial phase
    while t < n:
        period = control.period_min * (1.0 + rng.uniform(-0.1, 0.1))
        i0 = max(0, math.ceil(t))
        i1 = min(n, math.ceil(t + control.duty * period))
        if i1 > i0:
            lam[i0:i1] = 1.0
        t += period
    return lam


def _modulating_lambda(n: int, control: Modulating, rng: np.random.Generator) -> np.ndarray:
    a = _MODULATING_AR
    burn = 500
    eps = rng.normal(0.0, control.wander * math.sqrt(1.0 - a * a), n + burn)
    wander = signal.lfilter([1.0], [1.0, -a], eps)[burn:]
    return np.clip(control.mean + wander, 0.0, 1.0)


def simulate(spec: PlantSpec) -> tuple[PlantDataset, GroundTruth]:
    """Generate a dataset whose mass balance closes exactly before noise.

    Raises :class:`InfeasibleSpec` (with the peak-demand timestamp) when
    the noise-free required compressor load exceeds 1, and ``ValueError``
    when a pressure profile violates the receiver > evaporator invariant.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.duration_min
    t_min = np.arange(n, dtype=float)
    table = load_default_table()
    catalog = dict(load_default_catalog().entries)

    lam = np.empty((n, len(spec.evaporators)))
    for j, ev in enumerate(spec.evaporators):
        if isinstance(ev.control, Hysteresis):
            lam[:, j] = _hysteresis_lambda(n, ev.control, rng)
        else:
            lam[:, j] = _modulating_lambda(n, ev.control, rng)

    p_e = np.column_stack([ev.p_e.at(t_min) for ev in spec.evaporators])
    p_rec = spec.p_rec.at(t_min)
    h_gc = spec.h_gc.at(t_min)
    if np.any(p_rec[:, None] <= p_e):
        raise ValueError("P_rec profile must exceed every P_e profile pointwise")

    try:
        a = np.array([catalog[ev.valve] for ev in spec.evaporators])
    except KeyError as exc:
        raise ValueError(f"unknown valve name {exc.args[0]!r}") from None

    n_v = len(spec.evaporators)
    no_missing = {
        "P_rec": np.zeros(n, dtype=bool),
        "f_comp": np.zeros(n, dtype=bool),
        "h_gc": np.zeros(n, dtype=bool),
        "P_e": np.zeros((n, n_v), dtype=bool),
        "lambda": np.zeros((n, n_v), dtype=bool),
    }
    start = parse_rfc3339(spec.start)
    clean = PlantDataset(
        start=start,
        dt_seconds=60.0,
        evap_ids=spec.evap_ids,
        n_lt=spec.n_lt,
        n_mt=n_v - spec.n_lt,
        p_e=p_e,
        lam=lam,
        p_rec=p_rec,
        f_comp=np.zeros(n),
        h_gc=h_gc,
        missing=no_missing,
    )

    x = regressor_matrix(clean, table)
    m_cab = x * a[None, :]
    demand = m_cab.sum(axis=1)

    suction = mt_suction_pressure(p_e, spec.n_lt)
    rho_gas = saturation_props(table, suction)[1]
    q = gas_quality(table, h_gc, p_rec)
    denom = spec.eta_vol * spec.v_s * rho_gas * (1.0 - q)
    f_clean = demand / denom

    peak = int(np.argmax(f_clean))
    if f_clean[peak] > 1.0:
        when = format_rfc3339(start + timedelta(minutes=peak))
        raise InfeasibleSpec(
            peak_index=peak,
            peak_time=when,
            f_required=float(f_clean[peak]),
        )

    f_comp = f_clean.copy()
    ns = spec.noise
    if ns.response_sigma2 > 0:
        eta = simulate_arma(ns.response_phi, ns.response_theta, ns.response_sigma2, n, rng)
        f_comp = f_comp + eta / denom

    meas = dict(ns.measurement)
    if meas.get("p_e", 0.0) > 0:
        p_e = p_e + rng.normal(0.0, meas["p_e"], p_e.shape)
    if meas.get("lambda", 0.0) > 0:
        lam = lam + rng.normal(0.0, meas["lambda"], lam.shape)
    if meas.get("p_rec", 0.0) > 0:
        p_rec = p_rec + rng.normal(0.0, meas["p_rec"], n)
    if meas.get("f_comp", 0.0) > 0:
        f_comp = f_comp + rng.normal(0.0, meas["f_comp"], n)
    if meas.get("h_gc", 0.0) > 0:
        h_gc = h_gc + rng.normal(0.0, meas["h_gc"], n)

    lam = np.clip(lam, 0.0, 1.0)
    f_comp = np.clip(f_comp, 0.0, 1.0)

    ds = replace(clean, p_e=p_e, lam=lam, p_rec=p_rec, f_comp=f_comp, h_gc=h_gc)
    truth = GroundTruth(
        evap_ids=spec.evap_ids,
        valve_names=tuple(ev.valve for ev in spec.evaporators),
        a=a,
        v_s=spec.v_s,
        noise=ns,
        x=x,
        m_cab=m_cab,
        f_comp_clean=f_clean,
    )
    return ds, truth


def _otterup_like(duration_min: int, seed: int) -> PlantSpec:
    """11 evaporators mirroring a real Danish site's valve assignment.

    Cycle times follow the site's observed dominant periods; pressure and
    gas-cooler profiles are slow daily sinusoids.
    """
    day = 1440.0
    lt = [
        EvaporatorSpec("LT1", "LT", "AKV 10-3", Hysteresis(31.19, 0.45), Profile(12.4, 0.35, day, 0.0)),
        EvaporatorSpec("LT2", "LT", "AKV 10-2", Hysteresis(25.59, 0.50), Profile(12.9, 0.35, day, 0.9)),
        EvaporatorSpec("LT3", "LT", "AKV 10-2", Hysteresis(20.37, 0.40), Profile(13.4, 0.35, day, 1.7)),
        EvaporatorSpec("LT4", "LT", "AKV 10-2", Hysteresis(30.24, 0.55), Profile(12.6, 0.35, day, 2.6)),
    ]
    mt = [
        EvaporatorSpec("MT1", "MT", "AKV 10-3", Hysteresis(83.17, 0.50), Profile(26.8, 0.5, day, 0.3)),
        EvaporatorSpec("MT2", "MT", "AKV 10-5", Hysteresis(32.19, 0.45), Profile(27.4, 0.5, day, 1.1)),
        EvaporatorSpec("MT3", "MT", "AKV 10-4", Hysteresis(39.92, 0.40), Profile(28.1, 0.5, day, 1.9)),
        EvaporatorSpec("MT4", "MT", "AKV 10-5", Hysteresis(41.58, 0.55), Profile(27.0, 0.5, day, 2.7)),
        EvaporatorSpec("MT5", "MT", "AKV 10-5", Hysteresis(41.58, 0.50), Profile(27.7, 0.5, day, 3.5)),
        EvaporatorSpec("MT6", "MT", "AKV 10-5", Hysteresis(21.23, 0.45), Profile(26.5, 0.5, day, 4.3)),
        EvaporatorSpec("MT7", "MT", "AKV 10-2", Modulating(0.35, 0.12), Profile(28.4, 0.5, day, 5.1)),
    ]
    return PlantSpec(
        evaporators=tuple(lt + mt),
        p_rec=Profile(36.0, 1.2, day, 0.4),
        h_gc=Profile(265e3, 12e3, day, 2.1),
        v_s=0.025,
        eta_vol=0.9,
        duration_min=duration_min,
        seed=seed,
    )


def scenario_presets(duration_min: int = 20160, seed: int = 1) -> dict[str, PlantSpec]:
    """Named plant configurations used throughout the tests and CLI.

    ``otterup-like``: 11 cabinets (4 LT + 7 MT), site valve assignment,
    observed cycle times, one modulating cabinet, no noise.
    ``iid-noise``: same plant with white response noise.
    ``arma-noise``: same plant with strongly autocorrelated ARMA(4, 1)
    response noise, the regime where plain OLS inference breaks down.
    ``modulating-only`` / ``hysteresis-only``: every cabinet on one
    control law, for spectral and follow-up studies.
    """
    base = _otterup_like(duration_min, seed)

    iid = replace(base, noise=NoiseSpec(response_sigma2=4e-4))

    arma = replace(
        base,
        noise=NoiseSpec(
            response_phi=(1.42, -0.4065, -0.0491, 0.0194),
            response_theta=(0.3,),
            response_sigma2=4e-5,
        ),
    )

    modulating = replace(
        base,
        evaporators=tuple(
            replace(ev, control=Modulating(0.25 + 0.05 * (j % 5), 0.10))
            for j, ev in enumerate(base.evaporators)
        ),
    )

    hysteresis = replace(
        base,
        evaporators=tuple(
            ev if isinstance(ev.control, Hysteresis)
            else replace(ev, control=Hysteresis(14.68, 0.45))
            for ev in base.evaporators
        ),
    )

    return {
        "otterup-like": base,
        "iid-noise": iid,
        "arma-noise": arma,
        "modulating-only": modulating,
        "hysteresis-only": hysteresis,
    }
