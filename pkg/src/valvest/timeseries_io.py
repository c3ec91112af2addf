"""Monitoring CSV ingestion, gap handling, and interval-average resampling.

Input CSVs have a header row, a ``timestamp`` column in RFC 3339, and one
column per monitored channel. A uniform timebase is inferred from the median
row spacing; rows that are absent or off-grid become explicit missing
markers (off-grid timestamps are snapped to the nearest grid point when
within dt/4; real loggers jitter). Missing values are carried as a boolean
mask, never as NaN-by-convention.

Resampling is by integer factor from the native grid, averaging within each
window so aliasing is avoided; an output window is missing iff more than
half of its input window is missing.
"""

from __future__ import annotations

import csv
import io
import math
import re
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .errors import SchemaError, TimebaseError, TooShort, UnitError

__all__ = [
    "SampledSeries",
    "PlantDataset",
    "GapMap",
    "parse_dataset",
    "serialize_dataset",
    "resample_average",
    "resample_dataset",
]


def parse_rfc3339(text: str) -> datetime:
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise TimebaseError(f"unparseable timestamp {text!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_rfc3339(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc)
    if ts.microsecond:
        return ts.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class SampledSeries:
    """A uniformly sampled scalar series with explicit missing markers."""

    start: datetime
    dt_seconds: float
    values: np.ndarray
    missing: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        missing = np.asarray(self.missing, dtype=bool)
        if values.shape != missing.shape or values.ndim != 1:
            raise ValueError("values and missing must be 1-D arrays of equal length")
        # Defensive: never store a number where the mask says missing, and
        # never store NaN as a pretend-present value.
        missing = missing | ~np.isfinite(values)
        values = np.where(missing, np.nan, values)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)
        if not self.dt_seconds > 0:
            raise ValueError("dt must be positive")
        if int(np.sum(~missing)) < 2:
            raise TooShort("series needs at least 2 non-missing values")

    def __len__(self) -> int:
        return self.values.size

    def present_segments(self) -> list[tuple[int, int]]:
        """Half-open (start, stop) index runs of consecutive present values."""
        return _mask_segments(~self.missing)


def _mask_segments(keep: np.ndarray) -> list[tuple[int, int]]:
    segments = []
    idx = np.flatnonzero(np.diff(np.concatenate(([False], keep, [False])).astype(int)))
    for lo, hi in zip(idx[::2], idx[1::2]):
        segments.append((int(lo), int(hi)))
    return segments


@dataclass(frozen=True)
class GapMap:
    """Missing stretches per channel, as sorted disjoint half-open ranges."""

    channels: dict[str, list[tuple[int, int]]]
    length: int

    def complete_row_segments(self) -> list[tuple[int, int]]:
        """Runs of rows where every channel is present."""
        missing = np.zeros(self.length, dtype=bool)
        for gaps in self.channels.values():
            for lo, hi in gaps:
                missing[lo:hi] = True
        return _mask_segments(~missing)


_SYSTEM_CHANNELS = ("P_rec", "f_comp", "h_gc")


@dataclass(frozen=True)
class PlantDataset:
    """Aligned plant channels on one shared timebase.

    Evaporator order is the LT cabinets first (1..n_LT) then the MT
    cabinets, matching the summation order of the mass balance. 2-D arrays
    hold one column per evaporator in that order. Immutable; safe to share
    across threads.
    """

    start: datetime
    dt_seconds: float
    evap_ids: tuple[str, ...]
    n_lt: int
    n_mt: int
    p_e: np.ndarray
    lam: np.ndarray
    p_rec: np.ndarray
    f_comp: np.ndarray
    h_gc: np.ndarray
    missing: dict = field(repr=False)

    def __post_init__(self):
        n = self.p_rec.size
        if self.n_lt + self.n_mt != len(self.evap_ids):
            raise ValueError("evaporator count mismatch")
        for name in ("p_e", "lam"):
            if getattr(self, name).shape != (n, len(self.evap_ids)):
                raise ValueError(f"{name} must be (n, n_V)")
        for name in ("f_comp", "h_gc"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} length mismatch")

    def __len__(self) -> int:
        return self.p_rec.size

    @property
    def n_evaporators(self) -> int:
        return len(self.evap_ids)

    def channel_names(self) -> list[str]:
        names = list(_SYSTEM_CHANNELS)
        for ev in self.evap_ids:
            names += [f"P_e[{ev}]", f"lambda[{ev}]"]
        return names

    def channel(self, name: str) -> SampledSeries:
        values, missing = self._channel_arrays(name)
        return SampledSeries(self.start, self.dt_seconds, values, missing)

    def _channel_arrays(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name == "P_rec":
            return self.p_rec, self.missing["P_rec"]
        if name == "f_comp":
            return self.f_comp, self.missing["f_comp"]
        if name == "h_gc":
            return self.h_gc, self.missing["h_gc"]
        m = re.fullmatch(r"(P_e|lambda)\[(.+)\]", name)
        if not m:
            raise KeyError(name)
        col = self.evap_ids.index(m.group(2))
        arr = self.p_e if m.group(1) == "P_e" else self.lam
        return arr[:, col], self.missing[m.group(1)][:, col]

    def gap_map(self) -> GapMap:
        gaps = {}
        for name in self.channel_names():
            _, missing = self._channel_arrays(name)
            gaps[name] = _mask_segments(missing)
        return GapMap(gaps, len(self))

    def complete_rows(self) -> np.ndarray:
        """Boolean mask of rows where every channel is present."""
        ok = ~(self.missing["P_rec"] | self.missing["f_comp"] | self.missing["h_gc"])
        ok &= ~np.any(self.missing["P_e"], axis=1)
        ok &= ~np.any(self.missing["lambda"], axis=1)
        return ok


def default_schema() -> dict:
    """Schema matching the CSV layout produced by :func:`serialize_dataset`."""
    return {
        "timestamp": "timestamp",
        "channels": {
            "P_rec": {"column": "p_rec_bar", "unit": "bar"},
            "f_comp": {"column": "f_comp", "unit": "fraction"},
            "h_gc": {"column": "h_gc_jkg", "unit": "J/kg"},
        },
        "evaporators": "auto",
    }


def _convert(raw: np.ndarray, unit: str, channel: str) -> np.ndarray:
    unit = unit.lower()
    present = np.isfinite(raw)
    if unit in ("bar", "j/kg", "fraction", ""):
        out = raw
    elif unit == "kj/kg":
        out = raw * 1000.0
    elif unit == "percent":
        if np.any((raw[present] < 0) | (raw[present] > 100)):
            raise UnitError(f"{channel}: values outside [0, 100] in percent mode")
        out = raw / 100.0
    else:
        raise UnitError(f"{channel}: unknown unit {unit!r}")
    if channel.startswith(("lambda", "f_comp")):
        bad = present & ((out < 0) | (out > 1))
        if np.any(bad):
            raise UnitError(f"{channel}: fractional channel outside [0, 1]")
    return out


def _auto_evaporators(fieldnames: list[str]) -> list[dict]:
    """Discover evaporator columns named p_e_<ID>_bar / lambda_<ID>."""
    p_cols = {m.group(1): c for c in fieldnames if (m := re.fullmatch(r"p_e_(.+)_bar", c))}
    l_cols = {m.group(1): c for c in fieldnames if (m := re.fullmatch(r"lambda_(.+)", c))}
    ids = sorted(set(p_cols) & set(l_cols), key=_evap_sort_key)
    if not ids:
        raise SchemaError("no evaporator columns (p_e_<id>_bar / lambda_<id>) found")
    return [
        {
            "id": ev,
            "group": "LT" if ev.upper().startswith("LT") else "MT",
            "p_e_column": p_cols[ev],
            "lambda_column": l_cols[ev],
            "lambda_unit": "fraction",
        }
        for ev in ids
    ]


def _evap_sort_key(ev: str):
    m = re.match(r"([A-Za-z]+)(\d+)$", ev)
    if m:
        return (m.group(1).upper(), int(m.group(2)))
    return (ev.upper(), 0)


def parse_dataset(data: bytes | str, schema: dict | None = None) -> PlantDataset:
    """Parse a monitoring CSV into an aligned :class:`PlantDataset`.

    ``schema`` maps channel names to CSV columns and units; by default the
    column layout written by :func:`serialize_dataset` is expected and
    evaporators are auto-discovered from the header.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    schema = {**default_schema(), **(schema or {})}
    reader = csv.DictReader(io.StringIO(data))
    if reader.fieldnames is None:
        raise SchemaError("empty CSV")
    fieldnames = list(reader.fieldnames)

    ts_col = schema["timestamp"]
    if ts_col not in fieldnames:
        raise SchemaError(f"missing timestamp column {ts_col!r}")
    evaps = schema["evaporators"]
    if evaps == "auto":
        evaps = _auto_evaporators(fieldnames)
    evaps = sorted(evaps, key=lambda e: 0 if e["group"].upper() == "LT" else 1)
    n_lt = sum(1 for e in evaps if e["group"].upper() == "LT")
    n_mt = len(evaps) - n_lt

    columns = {}
    for name, cfg in schema["channels"].items():
        columns[name] = (cfg["column"], cfg.get("unit", ""))
    for e in evaps:
        columns[f"P_e[{e['id']}]"] = (e["p_e_column"], e.get("p_e_unit", "bar"))
        columns[f"lambda[{e['id']}]"] = (e["lambda_column"], e.get("lambda_unit", "fraction"))
    for name, (col, _) in columns.items():
        if col not in fieldnames:
            raise SchemaError(f"missing column {col!r} for channel {name}")

    stamps: list[datetime] = []
    raw_rows: list[dict] = []
    for row in reader:
        if not row.get(ts_col):
            continue
        stamps.append(parse_rfc3339(row[ts_col]))
        raw_rows.append(row)
    if len(stamps) < 2:
        raise TooShort("need at least 2 data rows")
    diffs = np.array([(b - a).total_seconds() for a, b in zip(stamps, stamps[1:])])
    if np.any(diffs <= 0):
        raise TimebaseError("timestamps must be strictly increasing")
    dt = float(np.median(diffs))
    if dt <= 0:
        raise TimebaseError("cannot infer a positive sampling interval")

    start = stamps[0]
    offsets = np.array([(t - start).total_seconds() for t in stamps]) / dt
    slots = np.rint(offsets).astype(int)
    on_grid = np.abs(offsets - slots) <= 0.25
    n = int(slots[on_grid].max()) + 1 if np.any(on_grid) else 0
    if n < 2:
        raise TimebaseError("no usable on-grid rows")

    def parse_cell(text: str | None) -> float:
        if text is None or text.strip() == "":
            return math.nan
        try:
            return float(text)
        except ValueError as exc:
            raise UnitError(f"non-numeric value {text!r}") from exc

    raw = {name: np.full(n, np.nan) for name in columns}
    filled = np.zeros(n, dtype=bool)
    for i, row in enumerate(raw_rows):
        if not on_grid[i]:
            continue
        k = slots[i]
        if filled[k]:
            warnings.warn(f"duplicate sample for grid slot {k}; keeping first", stacklevel=2)
            continue
        filled[k] = True
        for name, (col, _) in columns.items():
            raw[name][k] = parse_cell(row[col])

    conv = {name: _convert(raw[name], unit, name) for name, (col, unit) in columns.items()}

    p_e = np.column_stack([conv[f"P_e[{e['id']}]"] for e in evaps])
    lam = np.column_stack([conv[f"lambda[{e['id']}]"] for e in evaps])
    missing = {
        "P_rec": ~np.isfinite(conv["P_rec"]),
        "f_comp": ~np.isfinite(conv["f_comp"]),
        "h_gc": ~np.isfinite(conv["h_gc"]),
        "P_e": ~np.isfinite(p_e),
        "lambda": ~np.isfinite(lam),
    }

    both = ~missing["P_rec"][:, None] & ~missing["P_e"]
    n_violate = int(np.sum(both & (conv["P_rec"][:, None] <= p_e)))
    if n_violate:
        warnings.warn(
            f"P_rec <= P_e on {n_violate} sample(s); the pressure difference "
            "will be clipped to zero when building the regression",
            stacklevel=2,
        )

    return PlantDataset(
        start=start,
        dt_seconds=dt,
        evap_ids=tuple(e["id"] for e in evaps),
        n_lt=n_lt,
        n_mt=n_mt,
        p_e=p_e,
        lam=lam,
        p_rec=conv["P_rec"],
        f_comp=conv["f_comp"],
        h_gc=conv["h_gc"],
        missing=missing,
    )


def serialize_dataset(ds: PlantDataset) -> str:
    """Write a dataset back to the standard CSV layout.

    Finite values round-trip bit-identically through
    :func:`parse_dataset` (floats are written with ``repr``).
    """
    header = ["timestamp", "p_rec_bar", "f_comp", "h_gc_jkg"]
    for ev in ds.evap_ids:
        header += [f"p_e_{ev}_bar", f"lambda_{ev}"]
    lines = [",".join(header)]

    def cell(value: float, is_missing: bool) -> str:
        return "" if is_missing else repr(float(value))

    for k in range(len(ds)):
        ts = ds.start + timedelta(seconds=k * ds.dt_seconds)
        row = [
            format_rfc3339(ts),
            cell(ds.p_rec[k], ds.missing["P_rec"][k]),
            cell(ds.f_comp[k], ds.missing["f_comp"][k]),
            cell(ds.h_gc[k], ds.missing["h_gc"][k]),
        ]
        for j in range(ds.n_evaporators):
            row.append(cell(ds.p_e[k, j], ds.missing["P_e"][k, j]))
            row.append(cell(ds.lam[k, j], ds.missing["lambda"][k, j]))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def resample_average(series: SampledSeries, m: int) -> SampledSeries:
    """Average consecutive windows of ``m`` samples into one.

    Output dt is m times the input dt. An output sample is the mean of the
    non-missing values in its window, and is missing iff more than half the
    window is missing. A trailing partial window is dropped.
    """
    if not (isinstance(m, (int, np.integer)) and m >= 1):
        raise ValueError("resampling factor must be an integer >= 1")
    if m == 1:
        return series
    n_out = len(series) // m
    if n_out == 0:
        raise TooShort(f"series shorter than one window of {m}")
    vals = series.values[: n_out * m].reshape(n_out, m)
    miss = series.missing[: n_out * m].reshape(n_out, m)
    n_missing = miss.sum(axis=1)
    out_missing = 2 * n_missing > m
    with np.errstate(invalid="ignore"):
        sums = np.where(miss, 0.0, vals).sum(axis=1)
        counts = m - n_missing
        out_vals = np.where(out_missing, np.nan, sums / np.maximum(counts, 1))
    return SampledSeries(series.start, series.dt_seconds * m, out_vals, out_missing)


def resample_dataset(ds: PlantDataset, m: int) -> PlantDataset:
    """Apply :func:`resample_average` to every channel of a dataset."""
    if not (isinstance(m, (int, np.integer)) and m >= 1):
        raise ValueError("resampling factor must be an integer >= 1")
    if m == 1:
        return ds

    def avg2d(arr: np.ndarray, miss: np.ndarray):
        cols = []
        cols_missing = []
        for j in range(arr.shape[1]):
            s = resample_average(SampledSeries(ds.start, ds.dt_seconds, arr[:, j], miss[:, j]), m)
            cols.append(s.values)
            cols_missing.append(s.missing)
        return np.column_stack(cols), np.column_stack(cols_missing)

    def avg1d(arr: np.ndarray, miss: np.ndarray):
        s = resample_average(SampledSeries(ds.start, ds.dt_seconds, arr, miss), m)
        return s.values, s.missing

    p_e, m_pe = avg2d(ds.p_e, ds.missing["P_e"])
    lam, m_lam = avg2d(ds.lam, ds.missing["lambda"])
    p_rec, m_pr = avg1d(ds.p_rec, ds.missing["P_rec"])
    f_comp, m_fc = avg1d(ds.f_comp, ds.missing["f_comp"])
    h_gc, m_hg = avg1d(ds.h_gc, ds.missing["h_gc"])
    return PlantDataset(
        start=ds.start,
        dt_seconds=ds.dt_seconds * m,
        evap_ids=ds.evap_ids,
        n_lt=ds.n_lt,
        n_mt=ds.n_mt,
        p_e=p_e,
        lam=lam,
        p_rec=p_rec,
        f_comp=f_comp,
        h_gc=h_gc,
        missing={"P_rec": m_pr, "f_comp": m_fc, "h_gc": m_hg, "P_e": m_pe, "lambda": m_lam},
    )
