"""Point estimators for every missing-covariate strategy.

Each public function returns an EstimateResult with a robust standard
error, a Wald interval and diagnostics. Single-regression strategies share
`single_regression`; the missingness-pattern method fits each realized pattern
separately and combines the fits with pattern-share weights.
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from core.config import settings
from core.errors import PatternSizeError
from core.ols import DesignMatrix, build_additive, build_interacted, build_moderated, treatment_effect
from dataset.experiment import ExperimentData, pattern_table
from estimators.inference import wald
from estimators.models import Diagnostics, EstimateResult, GroupDiagnostics
from features.missingness import (
    FeatureBlock,
    feature_block,
    impute,
    pattern_products,
)


def base_diagnostics(data: ExperimentData, **extra) -> Diagnostics:
    return Diagnostics(
        n=data.n,
        n_treated=data.n_treated,
        n_control=data.n_control,
        n_complete_cases=int(data.complete_case.sum()),
        **extra,
    )


def finish(
    strategy: str,
    model: str,
    estimate: float,
    se: float,
    diagnostics: Diagnostics,
    ci_level: Optional[float] = None,
) -> EstimateResult:
    level = settings.ci_level if ci_level is None else ci_level
    lo, hi, p = wald(estimate, se, level)
    return EstimateResult(
        strategy=strategy,
        model=model,
        estimate=estimate,
        se=se,
        ci=(lo, hi),
        p_value=p,
        ci_level=level,
        diagnostics=diagnostics,
    )


def strategy_design(
    data: ExperimentData,
    strategy: str,
    model: str,
    c: Optional[Sequence[float]] = None,
) -> DesignMatrix:
    """Design matrix of a single-regression strategy.

    The additive missingness-pattern aggregate is the one design that is not
    (1, Z, u) or its interacted form: (1, Z, x^imp(c)) is fully interacted
    with the centered indicator products f'.
    """
    if strategy == "mp_aggregate" and model == "F":
        products = pattern_products(data)
        x = impute(data, _zeros_if_none(data, c)).values
        return build_moderated(data, x, products.matrix, data.covariate_names, products.labels)
    block = feature_block(data, strategy, c)
    build = build_additive if model == "F" else build_interacted
    return build(data, block.matrix, block.labels)


def adjusted_fit(
    data: ExperimentData,
    block: FeatureBlock,
    model: str,
    hc_flavor: Optional[str] = None,
) -> Tuple[float, float, List[str], int]:
    """Z-coefficient and robust SE of the additive (F) or interacted (L) fit on a feature block."""
    build = build_additive if model == "F" else build_interacted
    X = build(data, block.matrix, block.labels)
    estimate, se, ols = treatment_effect(X, data.outcome, hc_flavor)
    return estimate, se, [X.labels[j] for j in ols.dropped], len(ols.kept)


def single_regression(
    strategy: str,
    data: ExperimentData,
    model: str,
    c: Optional[Sequence[float]] = None,
    hc_flavor: Optional[str] = None,
    ci_level: Optional[float] = None,
    cluster_id: Optional[np.ndarray] = None,
) -> EstimateResult:
    """Fit one strategy design; with `cluster_id` the SE is CR0."""
    X = strategy_design(data, strategy, model, c)
    flavor = "cr0" if cluster_id is not None else hc_flavor
    estimate, se, ols = treatment_effect(X, data.outcome, flavor, cluster_id)
    dropped = [X.labels[j] for j in ols.dropped]
    diagnostics = base_diagnostics(
        data,
        dropped_columns=dropped,
        kept_columns=len(ols.kept),
        constants=None if c is None else [float(v) for v in np.asarray(c)],
    )
    logger.debug(f"{strategy}/{model}: estimate={estimate:.4f} se={se:.4f} dropped={len(dropped)}")
    return finish(strategy, model, estimate, se, diagnostics, ci_level)


# --- Table-1 strategies ---


def neyman(data: ExperimentData, hc_flavor: Optional[str] = None, ci_level: Optional[float] = None) -> EstimateResult:
    """Difference in means; the SE is HC0 (or HC1) from Y ~ 1 + Z."""
    estimate, se, _, kept = adjusted_fit(data, feature_block(data, "neyman"), "F", hc_flavor)
    return finish("neyman", "-", estimate, se, base_diagnostics(data, kept_columns=kept), ci_level)


def complete_case(
    data: ExperimentData,
    model: str = "L",
    hc_flavor: Optional[str] = None,
    ci_level: Optional[float] = None,
) -> EstimateResult:
    """Fit on units with C_i = 1 only; L centers covariates at the complete-case mean."""
    complete = data.subset(data.complete_case, context="complete cases")
    block = feature_block(complete, "cc")
    estimate, se, dropped, kept = adjusted_fit(complete, block, model, hc_flavor)
    diagnostics = base_diagnostics(data, dropped_columns=dropped, kept_columns=kept)
    return finish("cc", model, estimate, se, diagnostics, ci_level)


def complete_covariate(
    data: ExperimentData,
    model: str = "L",
    hc_flavor: Optional[str] = None,
    ci_level: Optional[float] = None,
) -> EstimateResult:
    return single_regression("ccov", data, model, None, hc_flavor, ci_level)


def single_imputation(
    data: ExperimentData,
    model: str = "L",
    c: Optional[Sequence[float]] = None,
    hc_flavor: Optional[str] = None,
    ci_level: Optional[float] = None,
) -> EstimateResult:
    return single_regression("imp", data, model, _zeros_if_none(data, c), hc_flavor, ci_level)


def missingness_indicator(
    data: ExperimentData,
    model: str = "L",
    c: Optional[Sequence[float]] = None,
    hc_flavor: Optional[str] = None,
    ci_level: Optional[float] = None,
) -> EstimateResult:
    return single_regression("mim", data, model, _zeros_if_none(data, c), hc_flavor, ci_level)


def size_shortfall(model: str, q: int, n_treated: int, n_control: int) -> Optional[str]:
    """Why a group with q covariates cannot support the fit, or None when it can.

    Additive fits need N >= q + 2, interacted fits need each arm >= q + 1;
    both need the two arms nonempty.
    """
    if n_treated == 0 or n_control == 0:
        return "both arms nonempty"
    if model == "F" and n_treated + n_control < q + 2:
        return f"N >= {q + 2}"
    if model == "L" and min(n_treated, n_control) < q + 1:
        return f"each arm >= {q + 1}"
    return None


def unpooled_difference_in_means(data: ExperimentData) -> Tuple[float, float]:
    """Difference in means with SE sqrt(s_1^2 / N_1 + s_0^2 / N_0).

    s_z^2 uses the N_z - 1 divisor, so two units per arm are needed. Used for
    undersized patterns, where the HC0 form shrinks each arm's variance by
    (N_z - 1) / N_z.
    """
    treated = data.treatment == 1
    y1, y0 = data.outcome[treated], data.outcome[~treated]
    estimate = float(y1.mean() - y0.mean())
    se = float(np.sqrt(y1.var(ddof=1) / len(y1) + y0.var(ddof=1) / len(y0)))
    return estimate, se


def missingness_pattern(
    data: ExperimentData,
    model: str = "L",
    fallback: str = "neyman",
    c: Optional[Sequence[float]] = None,
    hc_flavor: Optional[str] = None,
    ci_level: Optional[float] = None,
) -> EstimateResult:
    """Pattern-share weighted average of within-pattern fits on the observed covariates."""
    table = pattern_table(data)
    groups: List[GroupDiagnostics] = []
    fallbacks: List[str] = []
    dropped: List[str] = []

    for k in range(table.n_patterns):
        key = table.key(k)
        rows = table.rows(k)
        observed = table.observed_columns(k)
        n_treated = int(data.treatment[rows].sum())
        n_control = len(rows) - n_treated
        method = model

        problem = size_shortfall(model, len(observed), n_treated, n_control)
        if problem:
            if fallback == "error":
                raise PatternSizeError(key, len(rows), n_treated, n_control, problem)
            note = f"pattern {key} (N={len(rows)}, N1={n_treated}, N0={n_control}) needs {problem}"
            if fallback == "mim" or min(n_treated, n_control) < 2:
                # no within-arm variance without two units in each arm
                logger.warning(f"{note}; falling back to the missingness-indicator method")
                result = missingness_indicator(data, model, c, hc_flavor, ci_level)
                result.diagnostics.fallbacks.append(f"{note}: used mim/{model}")
                return result.model_copy(update={"strategy": "mp"})
            logger.warning(f"{note}; using the within-pattern difference in means")
            fallbacks.append(f"{note}: used neyman")
            method = "neyman"

        subset = data.subset(rows, context=f"pattern {key}")
        if method == "neyman":
            estimate, se = unpooled_difference_in_means(subset)
        else:
            block = FeatureBlock(
                matrix=subset.covariates[:, observed],
                labels=tuple(data.covariate_names[j] for j in observed),
            )
            estimate, se, pattern_dropped, _ = adjusted_fit(subset, block, model, hc_flavor)
            dropped.extend(f"[{key}] {label}" for label in pattern_dropped)
        groups.append(
            GroupDiagnostics(
                label=key,
                n=len(rows),
                n_treated=n_treated,
                n_control=n_control,
                weight=float(table.proportions[k]),
                estimate=estimate,
                se=se,
                method=method,
            )
        )

    weights = np.array([g.weight for g in groups])
    estimate = float(np.dot(weights, [g.estimate for g in groups]))
    se = float(np.sqrt(np.dot(weights**2, np.square([g.se for g in groups]))))
    diagnostics = base_diagnostics(data, dropped_columns=dropped, groups=groups, fallbacks=fallbacks)
    return finish("mp", model, estimate, se, diagnostics, ci_level)


def missingness_pattern_aggregate(
    data: ExperimentData,
    model: str = "L",
    c: Optional[Sequence[float]] = None,
    hc_flavor: Optional[str] = None,
    ci_level: Optional[float] = None,
) -> EstimateResult:
    """One regression that reproduces the missingness-pattern method.

    L: interacted fit on u^mp(c). F: (1, Z, x^imp(c)) fully interacted with
    the centered indicator products f'.
    """
    return single_regression("mp_aggregate", data, model, _zeros_if_none(data, c), hc_flavor, ci_level)


# --- Restricted variants ---


def count_variant(
    data: ExperimentData,
    model: str = "L",
    c: Optional[Sequence[float]] = None,
    hc_flavor: Optional[str] = None,
    ci_level: Optional[float] = None,
) -> EstimateResult:
    """x^imp(c) plus the number of observed covariates; depends on c."""
    return single_regression("mc", data, model, _zeros_if_none(data, c), hc_flavor, ci_level)


def cc_indicator_variant(
    data: ExperimentData,
    model: str = "L",
    c: Optional[Sequence[float]] = None,
    hc_flavor: Optional[str] = None,
    ci_level: Optional[float] = None,
) -> EstimateResult:
    """x^imp(c) plus the complete-case indicator; depends on c."""
    return single_regression("cim", data, model, _zeros_if_none(data, c), hc_flavor, ci_level)


def second_order_variant(
    data: ExperimentData,
    model: str = "L",
    c: Optional[Sequence[float]] = None,
    hc_flavor: Optional[str] = None,
    ci_level: Optional[float] = None,
) -> EstimateResult:
    return single_regression("mim2", data, model, _zeros_if_none(data, c), hc_flavor, ci_level)


def _zeros_if_none(data: ExperimentData, c: Optional[Sequence[float]]) -> np.ndarray:
    return np.zeros(data.n_covariates) if c is None else np.asarray(c, dtype=float)
