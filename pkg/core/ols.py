"""Rank-aware least squares and robust sandwich covariances.

Every estimator in the package ends up here: a design matrix is built by one
of the `build_*` helpers, `fit` prunes collinear columns left to right and
solves on the kept block through a QR factorization, and `robust_cov` returns
the HC0 / HC1 / CR0 sandwich of the kept coefficients.

Column order of each builder matters because pruning keeps the first of any
collinear group:

  * additive:    (1, Z, x)
  * interacted:  (1, Z, x - mean x, Z * (x - mean x))
  * moderated:   (1, Z, g - mean g, Z * (g - mean g), x, x (x) (g - mean g))

The treatment column always sits at index 1.
"""
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import solve_triangular

from core.config import settings
from core.errors import DegenerateDesignError, InputError, InternalInvariantError

if TYPE_CHECKING:
    from dataset.experiment import ExperimentData


INTERCEPT = "(Intercept)"
TREATMENT = "Z"
TREATMENT_INDEX = 1

HC_FLAVORS = ("hc0", "hc1", "cr0")
# Estimates and SEs below this multiple of max(1, max|y|) are roundoff and reported as 0
ROUNDOFF_TOL = 1e-12


@dataclass(frozen=True)
class DesignMatrix:
    """Regressor matrix with per-column provenance labels."""

    columns: np.ndarray
    labels: Tuple[str, ...]
    # Subtracted column means, keyed by feature label
    centering: Optional[dict] = None

    def __post_init__(self):
        if self.columns.ndim != 2 or self.columns.shape[1] != len(self.labels):
            raise InternalInvariantError(
                f"design has {self.columns.shape} columns but {len(self.labels)} labels"
            )
        if self.labels[0] != INTERCEPT or not np.all(self.columns[:, 0] == 1.0):
            raise InternalInvariantError("first design column must be the intercept")
        if self.labels.count(TREATMENT) != 1 or self.labels[TREATMENT_INDEX] != TREATMENT:
            raise InternalInvariantError("design must carry exactly one treatment column at index 1")

    @property
    def n(self) -> int:
        return self.columns.shape[0]

    @property
    def p(self) -> int:
        return self.columns.shape[1]


@dataclass(frozen=True)
class OlsFit:
    """Least-squares fit on the kept (linearly independent) columns."""

    coefficients: np.ndarray  # length p, NaN where the column was pruned
    kept: Tuple[int, ...]
    residuals: np.ndarray
    fitted: np.ndarray
    # Thin QR of the kept block, reused by robust_cov
    q: np.ndarray = field(repr=False)
    r: np.ndarray = field(repr=False)

    @property
    def dropped(self) -> Tuple[int, ...]:
        kept = set(self.kept)
        return tuple(j for j in range(len(self.coefficients)) if j not in kept)

    def position(self, column: int) -> int:
        """Index of a design column inside the kept block."""
        try:
            return self.kept.index(column)
        except ValueError:
            raise DegenerateDesignError(f"design column {column} was pruned") from None


@dataclass(frozen=True)
class SandwichCov:
    matrix: np.ndarray  # p_kept x p_kept
    flavor: str
    kept: Tuple[int, ...]

    def variance_of(self, column: int) -> float:
        pos = self.kept.index(column)
        return float(max(self.matrix[pos, pos], 0.0))


# --- Pruning ---


def independent_columns(matrix: np.ndarray, rel_tol: Optional[float] = None) -> List[int]:
    """Left-to-right scan keeping columns not explained by earlier kept ones.

    A column is dropped when the norm of its residual after projection on the
    kept columns is at most `rel_tol` times its own norm. Zero columns are
    always dropped. Classical Gram-Schmidt is applied twice per column.
    """
    rel_tol = settings.rel_tol if rel_tol is None else rel_tol
    n, p = matrix.shape
    basis = np.empty((n, min(n, p)))
    kept: List[int] = []
    for j in range(p):
        x = matrix[:, j]
        norm = np.linalg.norm(x)
        if norm == 0.0 or len(kept) == n:
            continue
        r = x.astype(float, copy=True)
        b = basis[:, : len(kept)]
        for _ in range(2):
            r -= b @ (b.T @ r)
        r_norm = np.linalg.norm(r)
        if r_norm <= rel_tol * norm:
            continue
        basis[:, len(kept)] = r / r_norm
        kept.append(j)
    return kept


# --- Fit ---


def fit(X: DesignMatrix, y: np.ndarray, rel_tol: Optional[float] = None) -> OlsFit:
    """OLS of y on X after collinearity pruning."""
    y = np.asarray(y, dtype=float)
    if y.shape != (X.n,):
        raise InternalInvariantError(f"outcome length {y.shape} does not match design rows {X.n}")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X.columns)):
        raise InputError("NaN or infinite value in regression inputs")

    kept = independent_columns(X.columns, rel_tol)
    if not kept:
        raise DegenerateDesignError("all design columns pruned")
    if len(kept) > X.n:
        raise DegenerateDesignError(f"{len(kept)} independent columns but only {X.n} rows")

    Xk = X.columns[:, kept]
    q, r = np.linalg.qr(Xk)
    beta_kept = solve_triangular(r, q.T @ y)
    fitted = Xk @ beta_kept
    residuals = y - fitted

    coefficients = np.full(X.p, np.nan)
    coefficients[kept] = beta_kept

    if len(kept) < X.p:
        logger.debug(
            f"Pruned {X.p - len(kept)} of {X.p} columns: "
            f"{[X.labels[j] for j in range(X.p) if j not in kept]}"
        )
    return OlsFit(
        coefficients=coefficients,
        kept=tuple(kept),
        residuals=residuals,
        fitted=fitted,
        q=q,
        r=r,
    )


# --- Sandwich ---


def _group_sums(scores: np.ndarray, cluster_id: np.ndarray) -> np.ndarray:
    # Groups ordered by first appearance; a singleton group copies its row exactly
    _, first, codes = np.unique(cluster_id, return_index=True, return_inverse=True)
    codes = np.asarray(codes).reshape(-1)
    order = np.argsort(first, kind="stable")
    relabel = np.empty_like(order)
    relabel[order] = np.arange(len(order))
    sums = np.zeros((len(first), scores.shape[1]))
    np.add.at(sums, relabel[codes], scores)
    return sums


def robust_cov(
    ols: OlsFit,
    X: DesignMatrix,
    flavor: Optional[str] = None,
    cluster_id: Optional[np.ndarray] = None,
) -> SandwichCov:
    """HC0, HC1 or CR0 covariance of the kept coefficients.

    With X_k = QR the bread is R^-1 and the scores are the rows of Q * e, so
    the sandwich is R^-1 (G^T G) R^-T where G stacks unit scores (HC) or
    within-cluster score sums (CR0).
    """
    flavor = (flavor or settings.hc_flavor).lower()
    if flavor not in HC_FLAVORS:
        raise InputError(f"unknown covariance flavor '{flavor}' (expected one of {HC_FLAVORS})")
    if flavor == "cr0" and cluster_id is None:
        raise InputError("CR0 covariance requires cluster labels")

    # r_jj / ||x_j|| is the relative residual norm pruning already bounded below
    relative = np.abs(np.diag(ols.r)) / np.linalg.norm(ols.r, axis=0)
    if relative.size == 0 or relative.min() <= 1e-14:
        raise InternalInvariantError("singular Gram matrix on the kept columns after pruning")

    scores = ols.q * ols.residuals[:, None]
    if flavor == "cr0":
        scores = _group_sums(scores, np.asarray(cluster_id))
    meat = scores.T @ scores

    r_inv = solve_triangular(ols.r, np.eye(ols.r.shape[0]))
    matrix = r_inv @ meat @ r_inv.T
    matrix = (matrix + matrix.T) / 2.0

    if flavor == "hc1":
        p_kept = len(ols.kept)
        if X.n <= p_kept:
            raise DegenerateDesignError(f"HC1 needs N > p_kept (N={X.n}, p_kept={p_kept})")
        matrix = matrix * X.n / (X.n - p_kept)
    return SandwichCov(matrix=matrix, flavor=flavor, kept=ols.kept)


# --- Builders ---


def _as_features(features: Optional[np.ndarray], n: int) -> np.ndarray:
    if features is None:
        return np.empty((n, 0))
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[:, None]
    if features.shape[0] != n:
        raise InternalInvariantError(f"feature rows {features.shape[0]} do not match {n} units")
    return features


def _feature_labels(labels: Optional[Sequence[str]], q: int) -> List[str]:
    if labels is None:
        return [f"x{j + 1}" for j in range(q)]
    if len(labels) != q:
        raise InternalInvariantError(f"{len(labels)} labels for {q} feature columns")
    return list(labels)


def build_additive(
    data: "ExperimentData",
    features: Optional[np.ndarray] = None,
    labels: Optional[Sequence[str]] = None,
) -> DesignMatrix:
    """(1, Z, features), uncentered."""
    z = np.asarray(data.treatment, dtype=float)
    n = z.shape[0]
    features = _as_features(features, n)
    columns = np.column_stack([np.ones(n), z, features])
    return DesignMatrix(
        columns=columns,
        labels=(INTERCEPT, TREATMENT, *_feature_labels(labels, features.shape[1])),
    )


def build_interacted(
    data: "ExperimentData",
    features: Optional[np.ndarray] = None,
    labels: Optional[Sequence[str]] = None,
) -> DesignMatrix:
    """(1, Z, x - mean x, Z * (x - mean x)) with means taken over the rows given."""
    z = np.asarray(data.treatment, dtype=float)
    n = z.shape[0]
    features = _as_features(features, n)
    names = _feature_labels(labels, features.shape[1])
    means = features.mean(axis=0) if features.shape[1] else np.empty(0)
    centered = features - means
    columns = np.column_stack([np.ones(n), z, centered, z[:, None] * centered])
    return DesignMatrix(
        columns=columns,
        labels=(INTERCEPT, TREATMENT, *names, *[f"{TREATMENT}:{name}" for name in names]),
        centering=dict(zip(names, means.tolist())),
    )


def build_moderated(
    data: "ExperimentData",
    features: np.ndarray,
    moderators: np.ndarray,
    labels: Optional[Sequence[str]] = None,
    moderator_labels: Optional[Sequence[str]] = None,
) -> DesignMatrix:
    """Additive design (1, Z, x) fully interacted with centered moderators g.

    Column blocks: 1, Z, g_c, Z * g_c, x, x (x) g_c where g_c = g - mean g and
    x (x) g_c runs over x first, then g.
    """
    z = np.asarray(data.treatment, dtype=float)
    n = z.shape[0]
    features = _as_features(features, n)
    moderators = _as_features(moderators, n)
    names = _feature_labels(labels, features.shape[1])
    g_names = _feature_labels(
        moderator_labels if moderator_labels is not None else [f"g{b + 1}" for b in range(moderators.shape[1])],
        moderators.shape[1],
    )
    g_means = moderators.mean(axis=0) if moderators.shape[1] else np.empty(0)
    g = moderators - g_means

    cross = (features[:, :, None] * g[:, None, :]).reshape(n, -1)
    cross_names = [f"{a}:{b}" for a in names for b in g_names]
    columns = np.column_stack([np.ones(n), z, g, z[:, None] * g, features, cross])
    return DesignMatrix(
        columns=columns,
        labels=(
            INTERCEPT,
            TREATMENT,
            *g_names,
            *[f"{TREATMENT}:{b}" for b in g_names],
            *names,
            *cross_names,
        ),
        centering=dict(zip(g_names, g_means.tolist())),
    )


def treatment_effect(
    X: DesignMatrix,
    y: np.ndarray,
    flavor: Optional[str] = None,
    cluster_id: Optional[np.ndarray] = None,
) -> Tuple[float, float, OlsFit]:
    """Coefficient of Z and its robust standard error."""
    ols = fit(X, y)
    if TREATMENT_INDEX not in ols.kept:
        raise DegenerateDesignError("treatment column is collinear with the intercept")
    cov = robust_cov(ols, X, flavor, cluster_id)
    estimate = float(ols.coefficients[TREATMENT_INDEX])
    se = float(np.sqrt(max(cov.variance_of(TREATMENT_INDEX), 0.0)))
    floor = ROUNDOFF_TOL * max(1.0, float(np.abs(y).max()))
    if abs(estimate) <= floor:
        estimate = 0.0
    if se <= floor:
        se = 0.0
    return estimate, se, ols
