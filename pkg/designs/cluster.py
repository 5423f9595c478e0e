"""Cluster-randomized experiments.

Two estimators:

  * `cluster_unit_level` - the usual unit-level regression of a strategy with
    CR0 standard errors that sum scores within cluster.
  * `cluster_total_level` - an I-row regression on cluster totals scaled by
    the average cluster size n_bar = N / I. Covariates are
    u_i = (n_i, x~0_i, M~_i): the size, the scaled totals of the zero-imputed
    covariates and the scaled totals of the missingness indicators.

Clusters are ordered by first appearance in the data.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd
from loguru import logger

from core.errors import ConfigError, InputError, InsufficientClustersError
from core.ols import build_additive, build_interacted, treatment_effect
from core.strategy_registry import strategy_registry
from dataset.experiment import ExperimentData
from estimators.models import EstimateResult, EstimatorSpec
from estimators.strategies import base_diagnostics, finish, single_regression, size_shortfall
from features.missingness import resolve_constants

TOTAL_LEVEL_STRATEGIES = ("neyman", "ccov", "mim")


@dataclass(frozen=True)
class ClusterView:
    labels: np.ndarray
    sizes: np.ndarray
    n_bar: float
    outcome_total: np.ndarray
    covariate_total: np.ndarray
    mask_total: np.ndarray
    treatment: np.ndarray
    covariate_names: Tuple[str, ...]

    @property
    def n_clusters(self) -> int:
        return self.sizes.shape[0]


def _require_clusters(data: ExperimentData) -> np.ndarray:
    if data.cluster_id is None:
        raise InputError("cluster estimators need cluster labels (--cluster)")
    return data.cluster_id


def cluster_view(data: ExperimentData) -> ClusterView:
    codes, labels = pd.factorize(_require_clusters(data))
    n_clusters = len(labels)
    sizes = np.bincount(codes, minlength=n_clusters)
    n_bar = data.n / n_clusters

    def scaled_totals(values: np.ndarray) -> np.ndarray:
        totals = np.zeros((n_clusters, values.shape[1]))
        np.add.at(totals, codes, values)
        return totals / n_bar

    first = np.unique(codes, return_index=True)[1]
    return ClusterView(
        labels=np.asarray(labels),
        sizes=sizes,
        n_bar=n_bar,
        outcome_total=scaled_totals(data.outcome[:, None])[:, 0],
        covariate_total=scaled_totals(data.covariates),
        mask_total=scaled_totals(data.mask.astype(float)),
        treatment=data.treatment[first],
        covariate_names=data.covariate_names,
    )


def cluster_unit_level(data: ExperimentData, spec: EstimatorSpec) -> EstimateResult:
    """Unit-level fit of the spec's strategy with CR0 cluster-robust SE."""
    _require_clusters(data)
    if spec.strategy == "mp":
        raise ConfigError("per-pattern fits have no cluster-robust form here; use mp_aggregate")
    config = strategy_registry.get_config(spec.strategy)
    c = resolve_constants(data, spec.constants) if config.uses_constants else None
    model = spec.model if config.uses_model else "F"

    fitted = data
    if spec.strategy == "cc":
        fitted = data.subset(data.complete_case, context="complete cases")
    result = single_regression(
        spec.strategy, fitted, model, c, ci_level=spec.ci_level, cluster_id=fitted.cluster_id
    )
    n_clusters = len(np.unique(fitted.cluster_id))
    result.diagnostics.fallbacks.append(f"CR0 over {n_clusters} clusters")
    logger.debug(f"cluster unit-level {spec.label}: {result.estimate:.4f} (se {result.se:.4f})")
    return result.model_copy(update={"strategy": f"cluster_unit:{spec.strategy}", "model": model})


def total_level_features(view: ClusterView, strategy: str) -> Tuple[np.ndarray, Tuple[str, ...]]:
    """u for the cluster-total regression: (n_i, x~0, M~) for mim, (n_i, x~ complete) for ccov."""
    if strategy == "neyman":
        return np.empty((view.n_clusters, 0)), ()
    x_labels = tuple(f"{name}~" for name in view.covariate_names)
    if strategy == "ccov":
        complete = np.flatnonzero(view.mask_total.sum(axis=0) == 0)
        return (
            np.column_stack([view.sizes.astype(float), view.covariate_total[:, complete]]),
            ("n_i", *(x_labels[j] for j in complete)),
        )
    return (
        np.column_stack([view.sizes.astype(float), view.covariate_total, view.mask_total]),
        ("n_i", *x_labels, *(f"M_{name}~" for name in view.covariate_names)),
    )


def cluster_total_level(data: ExperimentData, spec: EstimatorSpec) -> EstimateResult:
    """Interacted (L) or additive (F) regression of scaled cluster totals, HC0 over clusters."""
    if spec.strategy not in TOTAL_LEVEL_STRATEGIES:
        raise ConfigError(
            f"cluster-total regression supports {', '.join(TOTAL_LEVEL_STRATEGIES)}, not '{spec.strategy}'"
        )
    view = cluster_view(data)
    u, labels = total_level_features(view, spec.strategy)
    model = spec.model if spec.strategy != "neyman" else "F"

    treated = int(view.treatment.sum())
    varying = int(sum(np.ptp(u[:, j]) > 0 for j in range(u.shape[1])))
    problem = size_shortfall(model, varying, treated, view.n_clusters - treated)
    if problem:
        raise InsufficientClustersError(
            f"{view.n_clusters} clusters ({treated} treated) with {varying} cluster covariates; needs {problem}"
        )

    clusters = ExperimentData(
        outcome=view.outcome_total,
        treatment=view.treatment,
        covariates=u,
        mask=np.zeros(u.shape, dtype=bool),
        covariate_names=labels,
    )
    build = build_additive if model == "F" else build_interacted
    X = build(clusters, u, labels)
    estimate, se, ols = treatment_effect(X, clusters.outcome, spec.hc_flavor)
    diagnostics = base_diagnostics(
        data,
        dropped_columns=[X.labels[j] for j in ols.dropped],
        kept_columns=len(ols.kept),
        fallbacks=[f"{view.n_clusters} clusters, n_bar={view.n_bar:.3f}"],
    )
    return finish(f"cluster_total:{spec.strategy}", model, estimate, se, diagnostics, spec.ci_level)
