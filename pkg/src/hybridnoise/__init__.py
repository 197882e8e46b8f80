"""Hybrid quantum-classical noise as a Poisson-weighted Gaussian mixture.

Truncates the infinite mixture to a finite one, fits its parameters to
sampled noise with expectation-maximization, and evaluates Gaussian channel
capacity over SNR sweeps.
"""

from . import capacity, em, errors, noise_model, numkit
from .capacity import (
    CapacityCurve,
    ComparisonReport,
    ScalarChannelParams,
    VectorChannelParams,
    capacity_scalar,
    capacity_vector,
    compare,
    sweep,
)
from .em import EmConfig, FitReport, LambdaEstimate, e_step, estimate_lambda, fit, log_likelihood, m_step, snapshot
from .noise_model import (
    Dataset,
    HybridNoiseSpec,
    TruncatedMixture,
    TruncationSkeleton,
    build_mixture,
    load_dataset,
    mixture_logpdf,
    sample,
    save_dataset,
    truncate,
    truncate_top_k,
)
from .numkit import log_sum_exp, mvn_logpdf, poisson_pmf

__version__ = "0.1.0"
