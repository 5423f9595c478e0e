"""Covariate feature engineering for missing-covariate strategies"""
from features.missingness import (
    BalanceReport,
    FeatureBlock,
    ImputedCovariates,
    balance_check,
    count_and_cc_scalars,
    debias_constants,
    feature_block,
    impute,
    mim_features,
    mp_features,
    observed_means,
    resolve_constants,
    second_order_features,
)

__all__ = [
    "BalanceReport",
    "FeatureBlock",
    "ImputedCovariates",
    "balance_check",
    "count_and_cc_scalars",
    "debias_constants",
    "feature_block",
    "impute",
    "mim_features",
    "mp_features",
    "observed_means",
    "resolve_constants",
    "second_order_features",
]
