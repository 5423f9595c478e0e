"""Stratified randomization: per-stratum estimates combined with stratum weights.

    tau_hat = sum_k w_k tau_hat_k,    se^2 = sum_k w_k^2 se_k^2

Weights default to unit shares. A stratum too small for its spec follows the
same fallback policy as the missingness-pattern method (error, within-stratum
difference in means, or the within-stratum missingness-indicator fit).
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from core.errors import InputError, PatternSizeError
from core.strategy_registry import strategy_registry
from dataset.experiment import ExperimentData, pattern_table
from estimators.dispatch import estimate
from estimators.models import EstimateResult, EstimatorSpec, GroupDiagnostics
from estimators.strategies import base_diagnostics, finish, size_shortfall
from features.missingness import feature_block, resolve_constants

WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class StratifiedPlan:
    labels: Tuple[str, ...]
    membership: np.ndarray  # unit -> stratum index
    weights: np.ndarray
    specs: Tuple[EstimatorSpec, ...]

    def __post_init__(self):
        k = len(self.labels)
        if len(self.specs) != k or self.weights.shape != (k,):
            raise InputError("one weight and one spec per stratum required")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1) > WEIGHT_TOL:
            raise InputError(f"stratum weights must be nonnegative and sum to 1, got {self.weights.sum():.12f}")

    @classmethod
    def from_strata(
        cls,
        data: ExperimentData,
        spec: EstimatorSpec,
        weights: Optional[Sequence[float]] = None,
    ) -> "StratifiedPlan":
        """One stratum per label in `data.stratum_id`, first-appearance order."""
        if data.stratum_id is None:
            raise InputError("stratified estimation needs stratum labels (--stratum)")
        codes, labels = pd.factorize(data.stratum_id)
        shares = np.bincount(codes, minlength=len(labels)) / data.n
        return cls(
            labels=tuple(str(label) for label in labels),
            membership=codes,
            weights=shares if weights is None else np.asarray(weights, dtype=float),
            specs=tuple(spec for _ in labels),
        )

    @classmethod
    def from_patterns(cls, data: ExperimentData, model: str = "L", **spec_fields) -> "StratifiedPlan":
        """Missingness patterns as strata with a complete-covariate fit inside each.

        Within a pattern the complete covariates are exactly the observed
        ones, so this reproduces the missingness-pattern method.
        """
        table = pattern_table(data)
        spec = EstimatorSpec(strategy="ccov", model=model, **spec_fields)
        return cls(
            labels=tuple(table.key(k) for k in range(table.n_patterns)),
            membership=table.membership,
            weights=table.proportions.astype(float),
            specs=tuple(spec for _ in range(table.n_patterns)),
        )


def _feature_width(data: ExperimentData, spec: EstimatorSpec) -> int:
    config = strategy_registry.get_config(spec.strategy)
    if spec.strategy in ("neyman", "mp"):
        return 0
    c = resolve_constants(data, spec.constants) if config.uses_constants else None
    if spec.strategy == "cc":
        return data.n_covariates
    return feature_block(data, spec.strategy, c).width


def _stratum_estimate(stratum: ExperimentData, spec: EstimatorSpec, label: str):
    """(result, method, fallback note or None) for one stratum."""
    model = spec.model if spec.strategy != "neyman" else "F"
    fitted = stratum.treatment[stratum.complete_case] if spec.strategy == "cc" else stratum.treatment
    n_treated = int(fitted.sum())
    problem = size_shortfall(model, _feature_width(stratum, spec), n_treated, len(fitted) - n_treated)
    if not problem:
        return estimate(stratum, spec), spec.label, None
    if spec.mp_fallback == "error":
        raise PatternSizeError(label, stratum.n, stratum.n_treated, stratum.n_control, problem)
    note = f"stratum {label} (N={stratum.n}, N1={stratum.n_treated}, N0={stratum.n_control}) needs {problem}"
    fallback = EstimatorSpec(
        strategy="neyman" if spec.mp_fallback == "neyman" else "mim",
        model=spec.model,
        constants=spec.constants,
        hc_flavor=spec.hc_flavor,
        mp_fallback="error",
        ci_level=spec.ci_level,
    )
    logger.warning(f"{note}; using {fallback.label}")
    return estimate(stratum, fallback), fallback.label, f"{note}: used {fallback.label}"


def stratified(data: ExperimentData, plan: StratifiedPlan) -> EstimateResult:
    groups = []
    fallbacks = []
    for k, label in enumerate(plan.labels):
        stratum = data.subset(plan.membership == k, context=f"stratum {label}")
        result, method, note = _stratum_estimate(stratum, plan.specs[k], label)
        if note:
            fallbacks.append(note)
        groups.append(
            GroupDiagnostics(
                label=label,
                n=stratum.n,
                n_treated=stratum.n_treated,
                n_control=stratum.n_control,
                weight=float(plan.weights[k]),
                estimate=result.estimate,
                se=result.se,
                method=method,
            )
        )

    estimate_value = float(np.dot(plan.weights, [g.estimate for g in groups]))
    se = float(np.sqrt(np.dot(plan.weights**2, np.square([g.se for g in groups]))))
    diagnostics = base_diagnostics(data, groups=groups, fallbacks=fallbacks)
    first = plan.specs[0]
    return finish(f"stratified:{first.strategy}", first.model, estimate_value, se, diagnostics, first.ci_level)
