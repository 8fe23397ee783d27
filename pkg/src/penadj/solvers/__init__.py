"""Penalized least-squares solvers and cross-validation."""

from .core import (KINDS, Fit, PenaltySpec, adaptive_weights, fit_adaptive_lasso,
                   fit_naive_en, fit_ols, fit_ridge, gram_terms, kkt_violation,
                   objective, rescale_en, rescaled_design, soft_threshold,
                   solve_en)
from .cv import CrossValidator, CvConfig, CvResult, cross_validate, fold_indices

__all__ = [
    "KINDS", "Fit", "PenaltySpec", "adaptive_weights", "fit_adaptive_lasso",
    "fit_naive_en", "fit_ols", "fit_ridge", "gram_terms", "kkt_violation",
    "objective", "rescale_en", "rescaled_design", "soft_threshold", "solve_en",
    "CrossValidator", "CvConfig", "CvResult", "cross_validate", "fold_indices",
]
