"""Spatial kriging of replicated temporal point processes.

Site-level mean and covariance functions are estimated nonparametrically
with B-splines, smoothed over space with penalized tensor splines, and
combined into functional kriging weights for an unobserved location.
"""

from .basis import (SpatialBasis, SplineBasis, TimeDomain, gram_matrix, make_spatial_basis, make_time_basis,
                    roughness_matrix, spatial_gram)
from .data import CountFunction, DataFormatError, PointPattern, SiteSet, count_function, ingest_events, ingest_trips
from .krige import KrigingError, KrigingSolution, count_prediction_error, predict_counts, predict_intensity
from .krige import solve_kriging, truncate_spectrum
from .moments import MomentEstimates, estimate_moments
from .spatial import (CovarianceSmoother, SingularSystemError, fit_cov_surface, fit_mean_surface, fit_surfaces,
                      gcv_cov, gcv_mean, predict_cov_at, predict_mean_at)

__version__ = "0.1.0"

__all__ = [
    "SpatialBasis", "SplineBasis", "TimeDomain", "gram_matrix", "make_spatial_basis", "make_time_basis",
    "roughness_matrix", "spatial_gram", "CountFunction", "DataFormatError", "PointPattern", "SiteSet",
    "count_function", "ingest_events", "ingest_trips", "KrigingError", "KrigingSolution",
    "count_prediction_error", "predict_counts", "predict_intensity", "solve_kriging", "truncate_spectrum",
    "MomentEstimates", "estimate_moments", "CovarianceSmoother", "SingularSystemError", "fit_cov_surface",
    "fit_mean_surface", "fit_surfaces", "gcv_cov", "gcv_mean", "predict_cov_at", "predict_mean_at",
]
