"""Unbiased transition-density and expectation estimators for diffusions.

Continuous-time importance sampling (CIS) with copycat Gaussian proposals,
its guided and resampled variants, Wagner's estimator and discretisation
baselines, plus an experiment harness.
"""
from .cis import (
    AdaptationPolicy,
    CisBatch,
    CisOutput,
    Mode,
    Polynomial,
    coordinate_functional,
    density_estimate,
    expectation_estimate,
    identity_functional,
    replicate_keys,
    run_cis,
    run_cis_batch,
    run_gcis,
    run_gcis_batch,
)
from .models import CIR2D, OU1D, SV, ConstantCoeff, LogCIR2D, build_model, check_derivatives
from .renewal import RenewalRate
from .weights import incremental_weight, incremental_weight_1d

__version__ = "0.1.0"
