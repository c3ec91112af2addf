"""Exception hierarchy for the valvest package.

Two broad families matter to callers: :class:`DataError` for problems with
the input data or configuration (CLI exit code 2) and
:class:`NumericalError` for estimation failures (CLI exit code 3).
"""

from __future__ import annotations


class ValvestError(Exception):
    """Base class for all package-specific errors."""


class DataError(ValvestError):
    """Input data or configuration is unusable."""


class NumericalError(ValvestError):
    """A numerical procedure failed on otherwise valid data."""


# --- data errors -----------------------------------------------------------

class SchemaError(DataError):
    """A configured column is missing from the input CSV."""


class TimebaseError(DataError):
    """Timestamps are non-monotonic or no uniform grid can be inferred."""


class UnitError(DataError):
    """A channel's values are outside the range its declared unit allows."""


class OutOfRange(DataError):
    """Pressure query outside the saturation table; bad sensor data or unit error."""


class TooShort(DataError):
    """Series has fewer usable samples than the operation requires."""


class SegmentTooShort(DataError):
    """Gap-free segments are too short for the requested model order."""


class InsufficientRows(DataError):
    """Fewer complete rows than the regression needs."""


class DegenerateColumn(DataError):
    """A regressor column is identically zero (valve never opened)."""

    def __init__(self, evaporators):
        self.evaporators = list(evaporators)
        super().__init__(f"all-zero regressor column(s): {', '.join(self.evaporators)}")


class ZeroVariance(DataError):
    """A regressor column is constant, so correlations are undefined."""

    def __init__(self, evaporators):
        self.evaporators = list(evaporators)
        super().__init__(f"zero-variance column(s): {', '.join(self.evaporators)}")


class KTooLarge(DataError):
    """Requested more clusters than there are distinct values."""


class InfeasibleSpec(DataError):
    """Simulated plant demands more than the compressor rack can deliver."""

    def __init__(self, peak_index, peak_time, f_required):
        self.peak_index = peak_index
        self.peak_time = peak_time
        self.f_required = f_required
        super().__init__(
            f"required compressor load {f_required:.3f} exceeds 1 "
            f"at {peak_time} (sample {peak_index}); plant undersized"
        )


# --- numerical errors ------------------------------------------------------

class RankDeficient(NumericalError):
    """Design matrix numerically rank-deficient."""

    def __init__(self, columns):
        self.columns = sorted(columns)
        super().__init__(f"rank-deficient design; offending columns {self.columns}")


class NonFiniteLikelihood(NumericalError):
    """Likelihood evaluation produced a non-finite value."""


class UnstableParameters(NumericalError):
    """ARMA parameters violate stationarity or invertibility."""


class NonPositiveBeta(NumericalError):
    """Too few positive coefficients to cluster in log space."""

    def __init__(self, coefficient_ids):
        self.coefficient_ids = list(coefficient_ids)
        super().__init__(
            "non-positive coefficient estimate(s) leave too few points for "
            f"clustering: {', '.join(map(str, self.coefficient_ids))}"
        )
