"""CO2 saturation properties by pressure lookup.

A static saturation table (bundled CSV asset, generated once by
``scripts/generate_saturation_table.py`` and version-pinned) maps pressure
to coexisting liquid/gas density and enthalpy. Linear interpolation is used
between knots: the property curves are smooth over the subcritical band and
interpolation error is far below sensor noise.

The gas-quality function Q(h, p) = (h - h_liq) / (h_gas - h_liq) is clamped
to [0, 1]: sub-cooled or superheated states occur transiently in real data
and the clamped value keeps the physical meaning "fraction of gas".
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import OutOfRange

__all__ = ["SaturationTable", "load_default_table", "saturation_props", "gas_quality"]


@dataclass(frozen=True)
class SaturationTable:
    """Saturated CO2 properties on a strictly increasing pressure grid.

    Pressures are absolute bar in the subcritical band (5, 73); densities
    kg/m3; enthalpies J/kg. Immutable after construction and safe to share
    across threads.
    """

    p_bar: np.ndarray
    rho_liq: np.ndarray
    rho_gas: np.ndarray
    h_liq: np.ndarray
    h_gas: np.ndarray

    def __post_init__(self):
        for name in ("p_bar", "rho_liq", "rho_gas", "h_liq", "h_gas"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != self.p_bar.shape:
                raise ValueError(f"column {name} length mismatch")
        if self.p_bar.size < 50:
            raise ValueError("saturation table needs >= 50 rows")
        if not np.all(np.diff(self.p_bar) > 0):
            raise ValueError("table pressures must be strictly increasing")
        if self.p_bar[0] <= 5.0 or self.p_bar[-1] >= 73.0:
            raise ValueError("table pressures must lie in (5, 73) bar")
        if not (np.all(self.rho_liq > self.rho_gas) and np.all(self.rho_gas > 0)):
            raise ValueError("require rho_liq > rho_gas > 0 on every row")
        if not np.all(self.h_gas > self.h_liq):
            raise ValueError("require h_gas > h_liq on every row")

    @property
    def p_min(self) -> float:
        return float(self.p_bar[0])

    @property
    def p_max(self) -> float:
        return float(self.p_bar[-1])

    @classmethod
    def from_csv(cls, text: str) -> "SaturationTable":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        expected = ["p_bar", "rho_liq", "rho_gas", "h_liq", "h_gas"]
        if header != expected:
            raise ValueError(f"bad saturation table header {header}, want {expected}")
        rows = np.array([[float(v) for v in row] for row in reader if row])
        return cls(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], rows[:, 4])


_DEFAULT: SaturationTable | None = None


def load_default_table() -> SaturationTable:
    """Load the bundled saturation table (cached)."""
    global _DEFAULT
    if _DEFAULT is None:
        text = resources.files("valvest").joinpath("data/co2_saturation.csv").read_text("utf-8")
        _DEFAULT = SaturationTable.from_csv(text)
    return _DEFAULT


def _check_range(table: SaturationTable, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    bad = (p < table.p_bar[0]) | (p > table.p_bar[-1]) | ~np.isfinite(p)
    if np.any(bad):
        worst = float(np.atleast_1d(p)[np.atleast_1d(bad)].flat[0])
        raise OutOfRange(
            f"pressure {worst:.3f} bar outside table range "
            f"[{table.p_min:.3f}, {table.p_max:.3f}] bar"
        )
    return p


def saturation_props(table: SaturationTable, p):
    """Interpolate (rho_liq, rho_gas, h_liq, h_gas) at pressure ``p`` bar.

    ``p`` may be a scalar or array. Exact (bitwise) at table knots; linear
    in between. Raises :class:`OutOfRange` outside the table.
    """
    p = _check_range(table, p)
    return (
        np.interp(p, table.p_bar, table.rho_liq),
        np.interp(p, table.p_bar, table.rho_gas),
        np.interp(p, table.p_bar, table.h_liq),
        np.interp(p, table.p_bar, table.h_gas),
    )


def gas_quality(table: SaturationTable, h, p):
    """Vapor mass fraction Q = (h - h_liq)/(h_gas - h_liq), clamped to [0, 1].

    ``h`` in J/kg, ``p`` in bar; either may be an array.
    """
    p = _check_range(table, p)
    h_l = np.interp(p, table.p_bar, table.h_liq)
    h_g = np.interp(p, table.p_bar, table.h_gas)
    q = (np.asarray(h, dtype=float) - h_l) / (h_g - h_l)
    return np.clip(q, 0.0, 1.0)
