"""Finite populations of potential outcomes for simulation studies.

Scenario generators (J = 3, covariate 1 always observed):

  * latent class xi ~ Bernoulli(0.2), x ~ N(xi * 1, I)
  * M_2, M_3 ~ Bernoulli(0.1 xi + 0.05 (1 - xi)), M_1 = 0
  * slopes gamma_{z|xi}: (1, -1) * 1_J when xi = 1, (0.5, -0.5) * 1_J when xi = 0
  * scenario i:   Y(z) ~ N(5 xi + 2 x'gamma_{z|xi}, 1)
  * scenario ii:  Y(z) ~ N(5 xi + x'gamma_{z|xi} + 2 M'1, 1)
  * scenario iii: Y(z) ~ N(5 xi + x'gamma_{z|xi} + M'1 + M_2 M_3 + 5 M_2 sum_j x_j, 1)

Each potential-outcome vector is centered at its population mean so tau = 0.
Missingness does not respond to treatment (mask0 == mask1) except in
`gen_treatment_dependent`, where treatment hides large covariate values.
"""
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from core.errors import InputError
from dataset.experiment import ExperimentData
from simulation.assignment import SeedLike, as_generator, cluster_randomization, complete_randomization

N_COVARIATES = 3
TREATED_SHARE = 0.2
SCENARIOS = ("i", "ii", "iii")


@dataclass(frozen=True)
class PotentialPopulation:
    y0: np.ndarray
    y1: np.ndarray
    covariates: np.ndarray
    mask0: np.ndarray
    mask1: np.ndarray
    n_treated: int  # unit-level N1; clustered populations draw whole clusters instead
    latent: Optional[np.ndarray] = None
    cluster_id: Optional[np.ndarray] = None
    n_treated_clusters: Optional[int] = None
    covariate_names: Tuple[str, ...] = field(default=())

    @property
    def n(self) -> int:
        return self.y0.shape[0]

    @property
    def tau(self) -> float:
        return float(np.mean(self.y1 - self.y0))

    @property
    def missingness_ignores_treatment(self) -> bool:
        return bool(np.array_equal(self.mask0, self.mask1))

    def draw_assignment(self, seed: SeedLike) -> np.ndarray:
        if self.cluster_id is not None:
            return cluster_randomization(self.cluster_id, self.n_treated_clusters, seed)
        return complete_randomization(self.n, self.n_treated, seed)


def reveal(pop: PotentialPopulation, z: np.ndarray) -> ExperimentData:
    """Observed data under assignment z: Y = Y(Z), M = M(Z)."""
    z = np.asarray(z)
    treated = z == 1
    return ExperimentData(
        outcome=np.where(treated, pop.y1, pop.y0),
        treatment=z,
        covariates=pop.covariates,
        mask=np.where(treated[:, None], pop.mask1, pop.mask0),
        covariate_names=pop.covariate_names,
        cluster_id=pop.cluster_id,
    )


def with_constant_effect(pop: PotentialPopulation, effect: float) -> PotentialPopulation:
    """Same population with Y(1) = Y(0) + effect for every unit (effect 0 is the sharp null)."""
    return replace(pop, y1=pop.y0 + effect)


def _latent_and_covariates(rng: np.random.Generator, n: int, shift: float = 0.0):
    xi = rng.binomial(1, 0.2, size=n)
    x = rng.normal(size=(n, N_COVARIATES)) + xi[:, None] + shift
    rate = 0.1 * xi + 0.05 * (1 - xi)
    mask = np.zeros((n, N_COVARIATES), dtype=bool)
    mask[:, 1:] = rng.binomial(1, rate[:, None], size=(n, N_COVARIATES - 1)).astype(bool)
    return xi, x, mask


def _slopes(xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-unit scalar slope on every covariate under control and treatment."""
    treated_slope = np.where(xi == 1, 1.0, 0.5)
    return -treated_slope, treated_slope


def _scenario_means(which: str, xi: np.ndarray, x: np.ndarray, mask: np.ndarray):
    slope0, slope1 = _slopes(xi)
    sum_x = x.sum(axis=1)
    m = mask.astype(float)
    if which == "i":
        return 5 * xi + 2 * slope0 * sum_x, 5 * xi + 2 * slope1 * sum_x
    if which == "ii":
        extra = 2 * m.sum(axis=1)
    else:
        extra = m.sum(axis=1) + m[:, 1] * m[:, 2] + 5 * m[:, 1] * sum_x
    return 5 * xi + slope0 * sum_x + extra, 5 * xi + slope1 * sum_x + extra


def _n_treated(n: int, treated_share: float) -> int:
    n_treated = int(round(treated_share * n))
    if not 0 < n_treated < n:
        raise InputError(f"treated share {treated_share} leaves an empty arm at N={n}")
    return n_treated


def gen_scenario(which: str, n: int, seed: SeedLike, treated_share: float = TREATED_SHARE) -> PotentialPopulation:
    """One of the three simulation scenarios, centered so tau = 0."""
    if which not in SCENARIOS:
        raise InputError(f"unknown scenario '{which}' (expected one of {SCENARIOS})")
    if n < 50:
        raise InputError(f"scenario populations need N >= 50, got {n}")
    rng = as_generator(seed)
    xi, x, mask = _latent_and_covariates(rng, n)
    mean0, mean1 = _scenario_means(which, xi, x, mask)
    y0 = mean0 + rng.normal(size=n)
    y1 = mean1 + rng.normal(size=n)
    return PotentialPopulation(
        y0=y0 - y0.mean(),
        y1=y1 - y1.mean(),
        covariates=x,
        mask0=mask,
        mask1=mask.copy(),
        n_treated=_n_treated(n, treated_share),
        latent=xi,
        covariate_names=tuple(f"x{j + 1}" for j in range(N_COVARIATES)),
    )


def gen_treatment_dependent(
    n: int,
    seed: SeedLike,
    effect_on_missingness: float,
    shift: float = 2.0,
    treated_share: float = TREATED_SHARE,
) -> PotentialPopulation:
    """Population whose missingness treatment can switch on, and does so for large covariate values.

    M(1) = max(M(0), E) with E_ij ~ Bernoulli(effect_on_missingness) for units
    whose x_ij lies above the column median, on the two incomplete columns;
    covariate 1 stays complete in both arms. Outcomes are linear in x with
    Y(0) ~ N(x'1, 1) and Y(1) ~ N(2 x'1, 1), so the values hidden by
    treatment are ones the adjustment would have used. The covariate shift
    keeps observed means away from 0 so zero imputation is visibly biased.
    """
    if not 0 <= effect_on_missingness <= 1:
        raise InputError(f"effect_on_missingness must be in [0, 1], got {effect_on_missingness}")
    if n < 50:
        raise InputError(f"scenario populations need N >= 50, got {n}")
    rng = as_generator(seed)
    xi, x, mask0 = _latent_and_covariates(rng, n, shift=shift)
    sum_x = x.sum(axis=1)
    y0 = sum_x + rng.normal(size=n)
    y1 = 2 * sum_x + rng.normal(size=n)
    above = x[:, 1:] > np.median(x[:, 1:], axis=0)
    switched = np.zeros_like(mask0)
    switched[:, 1:] = above & (rng.random((n, N_COVARIATES - 1)) < effect_on_missingness)
    return PotentialPopulation(
        y0=y0 - y0.mean(),
        y1=y1 - y1.mean(),
        covariates=x,
        mask0=mask0,
        mask1=mask0 | switched,
        n_treated=_n_treated(n, treated_share),
        latent=xi,
        covariate_names=tuple(f"x{j + 1}" for j in range(N_COVARIATES)),
    )


def gen_cluster_scenario(
    n_clusters: int,
    seed: SeedLike,
    mean_size: float = 5.0,
    treated_share: float = 0.5,
) -> PotentialPopulation:
    """Clustered variant of scenario ii: latent class, covariate level and a random effect shared within cluster.

    Cluster sizes are 1 + Poisson(mean_size - 1); outcomes grow with cluster
    size so the size column of the cluster-level adjustment carries signal.
    """
    if n_clusters < 4:
        raise InputError(f"need at least 4 clusters, got {n_clusters}")
    rng = as_generator(seed)
    sizes = 1 + rng.poisson(mean_size - 1, size=n_clusters)
    cluster_id = np.repeat(np.arange(n_clusters), sizes)
    n = int(sizes.sum())

    xi = np.repeat(rng.binomial(1, 0.2, size=n_clusters), sizes)
    level = np.repeat(rng.normal(size=n_clusters), sizes)
    shared = np.repeat(rng.normal(size=n_clusters), sizes)
    x = rng.normal(size=(n, N_COVARIATES)) + (xi + level)[:, None]
    rate = 0.1 * xi + 0.05 * (1 - xi)
    mask = np.zeros((n, N_COVARIATES), dtype=bool)
    mask[:, 1:] = rng.binomial(1, rate[:, None], size=(n, N_COVARIATES - 1)).astype(bool)

    mean0, mean1 = _scenario_means("ii", xi, x, mask)
    size_effect = 0.5 * np.repeat(sizes, sizes)
    y0 = mean0 + 2 * shared + size_effect + rng.normal(size=n)
    y1 = mean1 + 2 * shared + size_effect + rng.normal(size=n)

    n_treated_clusters = int(round(treated_share * n_clusters))
    if not 0 < n_treated_clusters < n_clusters:
        raise InputError(f"treated share {treated_share} leaves an empty arm with {n_clusters} clusters")
    return PotentialPopulation(
        y0=y0 - y0.mean(),
        y1=y1 - y1.mean(),
        covariates=x,
        mask0=mask,
        mask1=mask.copy(),
        n_treated=0,
        latent=xi,
        cluster_id=cluster_id,
        n_treated_clusters=n_treated_clusters,
        covariate_names=tuple(f"x{j + 1}" for j in range(N_COVARIATES)),
    )
