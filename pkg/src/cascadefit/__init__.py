"""cascadefit: reconstruct tweet cascades from event logs and fit
compartmental diffusion models (SIS, SEIZ, CD-SEIZ) to their hourly
cumulative activity curves."""

__version__ = "0.1.0"

from .cascade import (
    Action,
    ActivitySeries,
    BuildResult,
    CascadeTree,
    TweetEvent,
    binned_series,
    build_cascades,
    load_cascade_file,
    parse_events,
    select_cascades,
    write_cascade_file,
)
from .errors import (
    CascadeFitError,
    ClockSkewError,
    DegenerateTargetError,
    DegenerateTestError,
    DivergenceError,
    DuplicateIdError,
    FitFailedError,
    ParseError,
    StiffnessError,
)
from .fitting import FitConfig, FitResult, fit, fit_series, objective, pack, unpack
from .integrator import TimeGrid, Trajectory, infected_channels, infected_series, integrate
from .metrics import (
    CascadeRow,
    ComparisonReport,
    MannWhitneyResult,
    fit_error,
    mann_whitney_u,
    mean_deviation,
)
from .models import (
    CdSeizParams,
    ModelKind,
    SeizParams,
    SisParams,
    cdseiz_rhs,
    rhs,
    seiz_rhs,
    sis_rhs,
)
from .synth import SynthCascade, SynthConfig, simulate_one, simulate_stochastic

__all__ = [
    "__version__",
    "Action", "ActivitySeries", "BuildResult", "CascadeTree", "TweetEvent",
    "binned_series", "build_cascades", "load_cascade_file", "parse_events",
    "select_cascades", "write_cascade_file",
    "CascadeFitError", "ClockSkewError", "DegenerateTargetError",
    "DegenerateTestError", "DivergenceError", "DuplicateIdError",
    "FitFailedError", "ParseError", "StiffnessError",
    "FitConfig", "FitResult", "fit", "fit_series", "objective", "pack", "unpack",
    "TimeGrid", "Trajectory", "infected_channels", "infected_series", "integrate",
    "CascadeRow", "ComparisonReport", "MannWhitneyResult",
    "fit_error", "mann_whitney_u", "mean_deviation",
    "CdSeizParams", "ModelKind", "SeizParams", "SisParams",
    "cdseiz_rhs", "rhs", "seiz_rhs", "sis_rhs",
    "SynthCascade", "SynthConfig", "simulate_one", "simulate_stochastic",
]
