"""Finite-population oracles computed from potential outcomes.

`oracle_variance` returns the limit of N * Var(tau_hat) for a
strategy/model pair:

    v = S_0^2 / e_0 + S_1^2 / e_1 - S_tau^2

where S_z^2 is the variance of the projection residual of Y(z) on the
strategy's covariate vector u and S_tau^2 the variance of their difference.
The interacted form (L) projects each Y(z) on u separately; the additive form
(F) uses the common slope e_0 gamma_0 + e_1 gamma_1. All variances use the
N - 1 divisor.
"""
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from core.errors import EstimationInfeasible, InputError, InternalInvariantError
from core.ols import independent_columns
from features.missingness import feature_block
from dataset.experiment import ExperimentData
from simulation.populations import PotentialPopulation


class CompleteCaseBias(BaseModel):
    """Finite-population bias of the complete-case estimators under ignorable missingness"""
    bias: float = Field(..., description="tau_cc - tau")
    tau: float
    tau_cc: float
    tau_ic: Optional[float] = Field(None, description="Effect among incomplete cases, None if there are none")
    complete_share: float
    s_c_tau: float = Field(..., description="Covariance of C_i and tau_i (N - 1 divisor)")


def _population_view(pop: PotentialPopulation):
    # Covariate features never read Z; any assignment with both arms gives the same blocks
    if not pop.missingness_ignores_treatment:
        raise InputError("oracles require missingness that does not respond to treatment")
    z = np.zeros(pop.n, dtype=np.int8)
    z[: max(1, pop.n // 2)] = 1
    return ExperimentData(
        outcome=pop.y0,
        treatment=z,
        covariates=pop.covariates,
        mask=pop.mask0,
        covariate_names=pop.covariate_names,
    )


def _residualize(y: np.ndarray, basis: np.ndarray) -> np.ndarray:
    centered = y - y.mean()
    if basis.shape[1] == 0:
        return centered
    coef, *_ = np.linalg.lstsq(basis, centered, rcond=None)
    return centered - basis @ coef


def _slope(y: np.ndarray, basis: np.ndarray) -> np.ndarray:
    if basis.shape[1] == 0:
        return np.empty(0)
    coef, *_ = np.linalg.lstsq(basis, y - y.mean(), rcond=None)
    return coef


def projection_variance(
    y0: np.ndarray,
    y1: np.ndarray,
    features: np.ndarray,
    treated_share: float,
    model: str = "L",
) -> float:
    """v for the additive (F) or interacted (L) adjustment on `features`."""
    if not 0 < treated_share < 1:
        raise InputError(f"treated share must be in (0, 1), got {treated_share}")
    e1, e0 = treated_share, 1 - treated_share
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    centered = features - features.mean(axis=0) if features.shape[1] else features
    keep = independent_columns(centered) if centered.shape[1] else []
    basis = centered[:, keep]

    if model == "L":
        r0 = _residualize(y0, basis)
        r1 = _residualize(y1, basis)
    elif model == "F":
        gamma = e0 * _slope(y0, basis) + e1 * _slope(y1, basis)
        r0 = y0 - y0.mean() - basis @ gamma
        r1 = y1 - y1.mean() - basis @ gamma
    else:
        raise InputError(f"unknown model form '{model}'")

    s0 = np.var(r0, ddof=1)
    s1 = np.var(r1, ddof=1)
    s_tau = np.var(r1 - r0, ddof=1)
    v = s0 / e0 + s1 / e1 - s_tau
    if v < -1e-9 * max(s0 / e0 + s1 / e1, 1.0):
        raise InternalInvariantError(f"negative oracle variance {v}")
    return float(max(v, 0.0))


def oracle_variance(
    pop: PotentialPopulation,
    strategy: str,
    model: str = "L",
    c: Optional[Sequence[float]] = None,
) -> float:
    """N * asymptotic variance of the strategy's estimator for this population."""
    if strategy == "cc":
        raise EstimationInfeasible("complete-case analysis is not consistent in general; use oracle_cc_bias")
    if strategy == "mp" and model == "F":
        raise EstimationInfeasible("no single-projection oracle for the additive missingness-pattern estimator")
    data = _population_view(pop)
    block_strategy = "mp_aggregate" if strategy == "mp" else strategy
    block = feature_block(data, block_strategy, c)
    return projection_variance(pop.y0, pop.y1, block.matrix, pop.n_treated / pop.n, model)


def oracle_cc_bias(pop: PotentialPopulation) -> CompleteCaseBias:
    """tau_cc - tau and S_{C,tau}; both vanish exactly when complete cases carry the average effect."""
    data = _population_view(pop)
    complete = data.complete_case
    if not complete.any():
        raise EstimationInfeasible("population has no complete cases")
    tau_i = pop.y1 - pop.y0
    tau = float(tau_i.mean())
    tau_cc = float(tau_i[complete].mean())
    tau_ic = float(tau_i[~complete].mean()) if (~complete).any() else None
    s_c_tau = float(np.cov(complete.astype(float), tau_i, ddof=1)[0, 1])
    return CompleteCaseBias(
        bias=tau_cc - tau,
        tau=tau,
        tau_cc=tau_cc,
        tau_ic=tau_ic,
        complete_share=float(complete.mean()),
        s_c_tau=s_c_tau,
    )
