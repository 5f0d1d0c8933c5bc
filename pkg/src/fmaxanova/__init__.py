"""F_max and GPF tests for one-way ANOVA on functional data."""
from .anova import (
    CovarianceEstimate,
    DegenerateStatisticError,
    PointwiseStats,
    fmax_statistic,
    gpf_statistic,
    pointwise_stats,
    pooled_covariance,
    residual_curves,
)
from .boot import BootstrapConfig, TestReport, calibrate, npb_calibrate, pb_calibrate
from .funcdata import FunctionalDataError, FunctionalSample, Grid, load_sample, sample_stats, save_sample
from .gauss import RngStream

__version__ = "0.1.0"
