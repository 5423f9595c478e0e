"""Covariate feature blocks for every missing-covariate strategy.

All blocks start from the imputed matrix x^imp(c), where observed cells keep
their value and missing cell (i, j) becomes c_j. Column order is fixed because
least-squares pruning keeps the first of any collinear group:

  * mim:  x^imp block, then one indicator per incomplete column (duplicates dropped)
  * mp:   x^imp block, then the indicator products f', then x_j * f'_b
  * mim2: x^imp block, indicators, pairwise indicator products, then x_l * M_k
"""
from dataclasses import dataclass
from itertools import combinations
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from core.config import settings
from core.errors import DebiasUndefinedError, FullyMissingColumnError, InputError
from dataset.experiment import ExperimentData, incomplete_columns

# Denominators at or below this are treated as zero for the debiasing constants
DEBIAS_ZERO_TOL = 1e-12

ConstantsPolicy = Union[str, Sequence[float]]


@dataclass(frozen=True)
class ImputedCovariates:
    values: np.ndarray
    constants: np.ndarray


@dataclass(frozen=True)
class FeatureBlock:
    """Feature matrix plus one label per column."""

    matrix: np.ndarray
    labels: Tuple[str, ...]

    @property
    def width(self) -> int:
        return self.matrix.shape[1]


MimFeatures = FeatureBlock
MpFeatures = FeatureBlock


# --- Imputation ---


def impute(data: ExperimentData, c: Sequence[float]) -> ImputedCovariates:
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.shape[0] != data.n_covariates:
        raise InputError(f"expected {data.n_covariates} imputation constants, got {c.shape[0]}")
    if not np.all(np.isfinite(c)):
        raise InputError("imputation constants must be finite")
    # Stored payload under the mask is 0, so x^0 + M c is x^imp(c)
    values = data.covariates + data.mask * c
    return ImputedCovariates(values=values, constants=c)


def observed_means(data: ExperimentData) -> np.ndarray:
    observed = (~data.mask).sum(axis=0)
    empty = [data.covariate_names[j] for j in np.flatnonzero(observed == 0)]
    if empty:
        raise FullyMissingColumnError(empty)
    return data.covariates.sum(axis=0) / observed


def debias_constants(data: ExperimentData) -> np.ndarray:
    """Imputation constants that cancel the arm imbalance of x^imp under treatment-dependent missingness.

    c_j = (Ax_j(1) - Ax_j(0)) / (A_j(1) - A_j(0)) with A = 1 - M and arm means
    on the observed data. Complete columns never use their constant and get 0.
    """
    observed = (~data.mask).astype(float)
    treated = data.treatment == 1
    a1 = observed[treated].mean(axis=0)
    a0 = observed[~treated].mean(axis=0)
    ax1 = data.covariates[treated].mean(axis=0)
    ax0 = data.covariates[~treated].mean(axis=0)

    constants = np.zeros(data.n_covariates)
    undefined = []
    for j in incomplete_columns(data):
        denominator = a1[j] - a0[j]
        if abs(denominator) <= DEBIAS_ZERO_TOL:
            undefined.append(data.covariate_names[j])
            continue
        constants[j] = (ax1[j] - ax0[j]) / denominator
    if undefined:
        raise DebiasUndefinedError(undefined)
    logger.debug(f"Debiasing constants: {dict(zip(data.covariate_names, constants.round(4)))}")
    return constants


def resolve_constants(data: ExperimentData, policy: ConstantsPolicy) -> np.ndarray:
    """Turn a constants policy ('zeros', 'means', 'debias' or an explicit vector) into c."""
    if isinstance(policy, str):
        key = policy.strip().lower()
        if key == "zeros":
            return np.zeros(data.n_covariates)
        if key == "means":
            return observed_means(data)
        if key == "debias":
            return debias_constants(data)
        raise InputError(f"unknown imputation policy '{policy}' (zeros, means, debias or a vector)")
    return impute(data, policy).constants


# --- Feature blocks ---


def indicator_block(data: ExperimentData, dedupe: bool = True) -> FeatureBlock:
    """M_j for incomplete columns j; with `dedupe` only the first of identical columns is kept."""
    columns: List[np.ndarray] = []
    labels: List[str] = []
    for j in incomplete_columns(data):
        column = data.mask[:, j].astype(float)
        if dedupe and any(np.array_equal(column, seen) for seen in columns):
            continue
        columns.append(column)
        labels.append(f"M_{data.covariate_names[j]}")
    matrix = np.column_stack(columns) if columns else np.empty((data.n, 0))
    return FeatureBlock(matrix=matrix, labels=tuple(labels))


def complete_covariate_features(data: ExperimentData) -> FeatureBlock:
    keep = np.flatnonzero(~data.mask.any(axis=0))
    return FeatureBlock(
        matrix=data.covariates[:, keep],
        labels=tuple(data.covariate_names[j] for j in keep),
    )


def imputed_features(data: ExperimentData, c: Sequence[float]) -> FeatureBlock:
    return FeatureBlock(matrix=impute(data, c).values, labels=data.covariate_names)


def mim_features(data: ExperimentData, c: Sequence[float]) -> MimFeatures:
    x = impute(data, c).values
    indicators = indicator_block(data)
    return FeatureBlock(
        matrix=np.column_stack([x, indicators.matrix]),
        labels=(*data.covariate_names, *indicators.labels),
    )


def pattern_products(data: ExperimentData) -> FeatureBlock:
    """f' - the non-constant part of f = (1, M_1) (x) ... (x) (1, M_J)."""
    f = np.ones((data.n, 1))
    names = [""]
    for j in range(data.n_covariates):
        m = data.mask[:, j].astype(float)
        # Row-wise kron(f, (1, m)): each old entry a becomes (a, a * m)
        f = np.stack([f, f * m[:, None]], axis=2).reshape(data.n, -1)
        label = f"M_{data.covariate_names[j]}"
        names = [part for name in names for part in (name, f"{name}*{label}" if name else label)]
    return FeatureBlock(matrix=f[:, 1:], labels=tuple(names[1:]))


def mp_features(data: ExperimentData, c: Sequence[float]) -> MpFeatures:
    """u^mp(c): the non-constant part of (1, x^imp(c)) (x) f.

    Reordered as x^imp, then f', then x_j * f'_b in Kronecker order. Products
    such as x_j^imp * M_j = c_j * M_j are left in and pruned at fit time.
    """
    if data.n_covariates > settings.mp_max_covariates:
        logger.warning(
            f"Pattern features for J={data.n_covariates} covariates have "
            f"{(data.n_covariates + 1) * 2 ** data.n_covariates - 1} columns "
            f"(cap {settings.mp_max_covariates} covariates)"
        )
    x = impute(data, c).values
    products = pattern_products(data)
    cross = (x[:, :, None] * products.matrix[:, None, :]).reshape(data.n, -1)
    cross_labels = [f"{name}*{b}" for name in data.covariate_names for b in products.labels]
    return FeatureBlock(
        matrix=np.column_stack([x, products.matrix, cross]),
        labels=(*data.covariate_names, *products.labels, *cross_labels),
    )


def count_and_cc_scalars(data: ExperimentData) -> Tuple[np.ndarray, np.ndarray]:
    """(J_i, C_i): number of observed covariates and the complete-case indicator."""
    observed_count = (~data.mask).sum(axis=1).astype(float)
    complete = data.complete_case.astype(float)
    return observed_count, complete


def count_features(data: ExperimentData, c: Sequence[float]) -> FeatureBlock:
    observed_count, _ = count_and_cc_scalars(data)
    x = impute(data, c).values
    return FeatureBlock(matrix=np.column_stack([x, observed_count]), labels=(*data.covariate_names, "J_obs"))


def cc_indicator_features(data: ExperimentData, c: Sequence[float]) -> FeatureBlock:
    _, complete = count_and_cc_scalars(data)
    x = impute(data, c).values
    return FeatureBlock(matrix=np.column_stack([x, complete]), labels=(*data.covariate_names, "C"))


def second_order_features(data: ExperimentData, c: Sequence[float]) -> FeatureBlock:
    """x^imp, M, M_j * M_k (j < k) and x_l * M_k over incomplete columns."""
    x = impute(data, c).values
    indicators = indicator_block(data, dedupe=False)
    m = indicators.matrix
    pairs = list(combinations(range(m.shape[1]), 2))
    products = [m[:, a] * m[:, b] for a, b in pairs]
    product_labels = [f"{indicators.labels[a]}*{indicators.labels[b]}" for a, b in pairs]
    cross = [x[:, l] * m[:, k] for l in range(x.shape[1]) for k in range(m.shape[1])]
    cross_labels = [f"{name}*{mk}" for name in data.covariate_names for mk in indicators.labels]
    blocks = [x, m]
    if products:
        blocks.append(np.column_stack(products))
    if cross:
        blocks.append(np.column_stack(cross))
    return FeatureBlock(
        matrix=np.column_stack(blocks),
        labels=(*data.covariate_names, *indicators.labels, *product_labels, *cross_labels),
    )


# --- Condition-2 diagnostic ---


class IndicatorBalance(BaseModel):
    column: str
    rate_treated: float = Field(..., ge=0, le=1)
    rate_control: float = Field(..., ge=0, le=1)
    difference: float
    z: float


class BalanceReport(BaseModel):
    """Arm-wise missingness rates; large |z| suggests missingness responds to treatment."""

    indicators: List[IndicatorBalance] = Field(default_factory=list)
    complete_case_difference: float = Field(0.0, description="C-bar(1) - C-bar(0)")
    complete_case_z: float = 0.0

    @property
    def max_abs_z(self) -> float:
        values = [abs(b.z) for b in self.indicators] + [abs(self.complete_case_z)]
        return max(values)


def _two_proportion_z(x: np.ndarray, treated: np.ndarray) -> Tuple[float, float, float, float]:
    p1 = float(x[treated].mean())
    p0 = float(x[~treated].mean())
    pooled = float(x.mean())
    scale = np.sqrt(pooled * (1 - pooled) * (1 / treated.sum() + 1 / (~treated).sum()))
    z = (p1 - p0) / scale if scale > 0 else 0.0
    return p1, p0, p1 - p0, float(z)


def balance_check(data: ExperimentData) -> BalanceReport:
    treated = data.treatment == 1
    rows = []
    for j, name in enumerate(data.covariate_names):
        p1, p0, diff, z = _two_proportion_z(data.mask[:, j].astype(float), treated)
        rows.append(IndicatorBalance(column=name, rate_treated=p1, rate_control=p0, difference=diff, z=z))
    _, _, cc_diff, cc_z = _two_proportion_z(data.complete_case.astype(float), treated)
    return BalanceReport(indicators=rows, complete_case_difference=cc_diff, complete_case_z=cc_z)


def feature_block(data: ExperimentData, strategy: str, c: Optional[Sequence[float]] = None) -> FeatureBlock:
    """Covariate block a single-regression strategy adjusts for."""
    if c is None:
        c = np.zeros(data.n_covariates)
    builders = {
        "neyman": lambda: FeatureBlock(matrix=np.empty((data.n, 0)), labels=()),
        "cc": lambda: FeatureBlock(matrix=data.covariates, labels=data.covariate_names),
        "ccov": lambda: complete_covariate_features(data),
        "imp": lambda: imputed_features(data, c),
        "mim": lambda: mim_features(data, c),
        "mp_aggregate": lambda: mp_features(data, c),
        "mc": lambda: count_features(data, c),
        "cim": lambda: cc_indicator_features(data, c),
        "mim2": lambda: second_order_features(data, c),
    }
    if strategy not in builders:
        raise InputError(f"strategy '{strategy}' has no single feature block")
    return builders[strategy]()
