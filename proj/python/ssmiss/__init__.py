"""Python bindings for the ssmiss state-space missing-data study."""

from ._ssmiss import (
    coverage,
    em_impute,
    fit_mle,
    make_condition,
    mask_series,
    median_bias,
    mice_impute,
    neg_loglik,
    rubin_pool,
    run_study,
    simulate,
)

__all__ = [
    "coverage",
    "em_impute",
    "fit_mle",
    "make_condition",
    "mask_series",
    "median_bias",
    "mice_impute",
    "neg_loglik",
    "rubin_pool",
    "run_study",
    "simulate",
]
