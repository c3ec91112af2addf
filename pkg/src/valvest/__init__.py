"""Estimate evaporator valve constants of CO2 refrigeration plants.

The package turns routine supermarket monitoring data (valve openings,
evaporator and receiver pressures, compressor load, gas-cooler enthalpy)
into per-evaporator valve-constant estimates through a mass-balance
regression, with ARMAX error models for honest confidence intervals,
spectral selection of the sampling time, and a combinatorial search for
the compressor stroke volume when it is unknown. A synthetic plant
simulator with exact closure provides ground truth for validation.
"""

from .armax import ArmaxFit, ArmaxSpec, fit_armax, profile_fit, simulate_arma
from .design_matrix import (
    ColinearityReport,
    RegressionProblem,
    SystemConstants,
    VALVE_UNIT_SCALE,
    build_problem,
    bypass_massflow,
    colinearity_report,
    compressor_massflow,
    make_problem_builder,
    mt_suction_pressure,
    regressor_matrix,
)
from .errors import (
    DataError,
    DegenerateColumn,
    InfeasibleSpec,
    InsufficientRows,
    KTooLarge,
    NonFiniteLikelihood,
    NonPositiveBeta,
    NumericalError,
    OutOfRange,
    RankDeficient,
    SchemaError,
    SegmentTooShort,
    TimebaseError,
    TooShort,
    UnitError,
    UnstableParameters,
    ValvestError,
    ZeroVariance,
)
from .ols import DiagnosticsReport, FitResult, acf, fit_ols, residual_diagnostics
from .simulator import (
    EvaporatorSpec,
    GroundTruth,
    Hysteresis,
    Modulating,
    NoiseSpec,
    PlantSpec,
    Profile,
    scenario_presets,
    simulate,
)
from .spectrum import (
    CycleEstimate,
    Periodogram,
    dominant_cycle,
    optimal_sampling_time,
    periodogram,
)
from .stroke_volume_search import (
    CandidateRow,
    ValveCatalog,
    brent_min,
    candidate_error,
    kmeans_1d,
    load_default_catalog,
    search_valve_sets,
)
from .thermo_props import (
    SaturationTable,
    gas_quality,
    load_default_table,
    saturation_props,
)
from .timeseries_io import (
    GapMap,
    PlantDataset,
    SampledSeries,
    default_schema,
    parse_dataset,
    parse_rfc3339,
    resample_average,
    resample_dataset,
    serialize_dataset,
)

__version__ = "0.1.0"
