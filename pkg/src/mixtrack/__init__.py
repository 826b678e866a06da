"""Gaussian mixture reduction and a single-target MHT benchmark."""

from mixtrack.gaussian import (
    Gaussian,
    WeightedGaussian,
    kl_divergence,
    log_density,
    merge_cost,
    moment_match,
)
from mixtrack.mixture import GaussianMixture, barycenter_cost, mixture_moments
from mixtrack.reduction import (
    Adaptive,
    Capping,
    ReductionPipeline,
    ReductionTrace,
    Runnalls,
    adaptive_reduce,
    apply_pipeline,
    cap,
    nw_prune,
    runnalls_reduce,
    standard_prune,
)

__version__ = "0.1.0"
