"""Observed experimental data and the missingness bookkeeping built on it."""
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from core.errors import EmptyArmError, InputError


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class ExperimentData:
    """N units with outcome, binary treatment and a partially observed covariate matrix.

    `mask[i, j]` is True when covariate j of unit i is missing. The stored
    payload under the mask is always 0, so reading `covariates` directly is the
    zero-imputed matrix x^0. Arrays are read-only after construction.
    """

    outcome: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray
    mask: np.ndarray
    covariate_names: Tuple[str, ...] = ()
    cluster_id: Optional[np.ndarray] = None
    stratum_id: Optional[np.ndarray] = None
    outcome_name: str = "y"
    treatment_name: str = "z"

    def __post_init__(self):
        outcome = np.array(self.outcome, dtype=float)
        if outcome.ndim != 1 or outcome.shape[0] < 2:
            raise InputError(f"need a vector of at least 2 outcomes, got shape {outcome.shape}")
        n = outcome.shape[0]
        treatment = np.array(self.treatment)

        covariates = np.array(self.covariates, dtype=float)
        if covariates.size == 0:
            covariates = np.empty((n, 0))
        elif covariates.ndim == 1:
            covariates = covariates[:, None]
        mask = np.array(self.mask, dtype=bool)
        if mask.size == 0:
            mask = np.zeros(covariates.shape, dtype=bool)
        elif mask.ndim == 1:
            mask = mask[:, None]

        if treatment.shape != (n,) or covariates.shape[0] != n:
            raise InputError("outcome, treatment and covariates must have the same number of rows")
        if mask.shape != covariates.shape:
            raise InputError(f"mask shape {mask.shape} does not match covariates {covariates.shape}")
        if not np.isin(treatment, (0, 1)).all():
            raise InputError("treatment must be binary (0/1)")
        treatment = treatment.astype(np.int8)
        if treatment.sum() == 0 or treatment.sum() == n:
            raise InputError(f"both treatment arms must be nonempty (N1={int(treatment.sum())}, N={n})")
        if not np.all(np.isfinite(outcome)):
            raise InputError("outcome contains NaN or infinite values")

        covariates = np.where(mask, 0.0, covariates)
        if not np.all(np.isfinite(covariates)):
            raise InputError("observed covariate contains NaN or infinite values")

        names = tuple(self.covariate_names) or tuple(f"x{j + 1}" for j in range(covariates.shape[1]))
        if len(names) != covariates.shape[1]:
            raise InputError(f"{len(names)} covariate names for {covariates.shape[1]} columns")

        cluster_id = None if self.cluster_id is None else np.asarray(self.cluster_id)
        stratum_id = None if self.stratum_id is None else np.asarray(self.stratum_id)
        for label, ids in (("cluster", cluster_id), ("stratum", stratum_id)):
            if ids is not None and ids.shape != (n,):
                raise InputError(f"{label} labels must have one entry per unit")
        if cluster_id is not None:
            _check_cluster_constant(cluster_id, treatment)

        object.__setattr__(self, "outcome", _frozen(outcome))
        object.__setattr__(self, "treatment", _frozen(treatment))
        object.__setattr__(self, "covariates", _frozen(covariates))
        object.__setattr__(self, "mask", _frozen(mask))
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "cluster_id", None if cluster_id is None else _frozen(cluster_id.copy()))
        object.__setattr__(self, "stratum_id", None if stratum_id is None else _frozen(stratum_id.copy()))

    # --- Sizes ---

    @property
    def n(self) -> int:
        return self.outcome.shape[0]

    @property
    def n_treated(self) -> int:
        return int(self.treatment.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    @property
    def complete_case(self) -> np.ndarray:
        """C_i: True when unit i has no missing covariate."""
        return ~self.mask.any(axis=1)

    # --- Derived views ---

    def subset(self, rows: np.ndarray, context: str = "subset") -> "ExperimentData":
        """Units selected by a boolean mask or index array; both arms must survive."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        n_treated = int(self.treatment[rows].sum())
        n_control = len(rows) - n_treated
        if n_treated == 0 or n_control == 0:
            raise EmptyArmError(context, n_treated, n_control)
        return ExperimentData(
            outcome=self.outcome[rows],
            treatment=self.treatment[rows],
            covariates=self.covariates[rows],
            mask=self.mask[rows],
            covariate_names=self.covariate_names,
            cluster_id=None if self.cluster_id is None else self.cluster_id[rows],
            stratum_id=None if self.stratum_id is None else self.stratum_id[rows],
            outcome_name=self.outcome_name,
            treatment_name=self.treatment_name,
        )

    def with_treatment(self, treatment: np.ndarray) -> "ExperimentData":
        """Same units under another assignment (used by the randomization test).

        Only valid when outcomes do not respond to the assignment, i.e. under
        the sharp null the caller is testing.
        """
        return ExperimentData(
            outcome=self.outcome,
            treatment=treatment,
            covariates=self.covariates,
            mask=self.mask,
            covariate_names=self.covariate_names,
            cluster_id=self.cluster_id,
            stratum_id=self.stratum_id,
            outcome_name=self.outcome_name,
            treatment_name=self.treatment_name,
        )


def _check_cluster_constant(cluster_id: np.ndarray, treatment: np.ndarray) -> None:
    labels, codes = np.unique(cluster_id, return_inverse=True)
    codes = np.asarray(codes).reshape(-1)
    treated = np.bincount(codes, weights=treatment, minlength=len(labels))
    sizes = np.bincount(codes, minlength=len(labels))
    mixed = labels[(treated > 0) & (treated < sizes)]
    if mixed.size:
        raise InputError(
            f"treatment varies within cluster(s): {', '.join(str(c) for c in mixed[:5])}"
        )


# --- Missingness patterns ---


@dataclass(frozen=True)
class PatternTable:
    """Realized missingness patterns in lexicographic order."""

    patterns: np.ndarray  # K x J of {0, 1}
    counts: np.ndarray
    proportions: np.ndarray
    membership: np.ndarray = field(repr=False)  # unit -> pattern index

    @property
    def n_patterns(self) -> int:
        return self.patterns.shape[0]

    def key(self, k: int) -> str:
        """Pattern k as a bit string, e.g. '01' for (obs, mis)."""
        return "".join(str(int(b)) for b in self.patterns[k]) or "-"

    def observed_columns(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.patterns[k] == 0)

    def rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.membership == k)


def pattern_table(data: ExperimentData) -> PatternTable:
    bits = data.mask.astype(np.int8)
    if bits.shape[1] == 0:
        return PatternTable(
            patterns=np.zeros((1, 0), dtype=np.int8),
            counts=np.array([data.n]),
            proportions=np.array([1.0]),
            membership=np.zeros(data.n, dtype=int),
        )
    patterns, membership, counts = np.unique(bits, axis=0, return_inverse=True, return_counts=True)
    return PatternTable(
        patterns=patterns,
        counts=counts,
        proportions=counts / data.n,
        membership=np.asarray(membership).reshape(-1),
    )


@dataclass(frozen=True)
class CompleteCovariateSet:
    """0-based indices of the fully observed covariate columns."""

    indices: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.indices)


def complete_covariate_set(data: ExperimentData) -> CompleteCovariateSet:
    return CompleteCovariateSet(indices=tuple(int(j) for j in np.flatnonzero(~data.mask.any(axis=0))))


def incomplete_columns(data: ExperimentData) -> Sequence[int]:
    return [int(j) for j in np.flatnonzero(data.mask.any(axis=0))]
