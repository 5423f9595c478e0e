"""Tests for designs.cluster - unit-level CR0 fits and the cluster-total regression."""
from itertools import combinations

import numpy as np
import pytest

from core.errors import ConfigError, InputError, InsufficientClustersError
from dataset.experiment import ExperimentData
from designs.cluster import cluster_total_level, cluster_unit_level, cluster_view
from estimators.dispatch import estimate
from estimators.models import EstimatorSpec
from simulation.populations import gen_cluster_scenario, reveal


def _with_clusters(data, cluster_id):
    return ExperimentData(
        outcome=data.outcome, treatment=data.treatment, covariates=data.covariates,
        mask=data.mask, covariate_names=data.covariate_names, cluster_id=cluster_id,
    )


def _make_unit_data(n=120, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    mask = np.zeros((n, 2), dtype=bool)
    mask[:, 1] = rng.random(n) < 0.3
    z = rng.permutation(np.repeat([1, 0], n // 2))
    y = x.sum(axis=1) + 2 * mask[:, 1] + z + rng.normal(size=n)
    return ExperimentData(outcome=y, treatment=z, covariates=x, mask=mask, cluster_id=np.arange(n))


def _make_clustered(n_clusters=40, seed=1):
    pop = gen_cluster_scenario(n_clusters, seed=seed)
    return reveal(pop, pop.draw_assignment(seed=seed))


# --- Cluster view ---


def test_cluster_view_scales_totals_by_average_size():
    data = ExperimentData(
        outcome=[1.0, 3.0, 5.0, 2.0, 4.0, 6.0],
        treatment=[1, 1, 0, 0, 0, 1],
        covariates=[[1.0], [1.0], [2.0], [0.0], [0.0], [7.0]],
        mask=[[False], [True], [False], [False], [False], [False]],
        cluster_id=["b", "b", "a", "a", "a", "c"],
    )
    view = cluster_view(data)
    assert view.n_bar == 2.0
    np.testing.assert_array_equal(view.labels, ["b", "a", "c"])
    np.testing.assert_array_equal(view.sizes, [2, 3, 1])
    np.testing.assert_allclose(view.outcome_total, [2.0, 5.5, 3.0])
    np.testing.assert_allclose(view.covariate_total[:, 0], [0.5, 1.0, 3.5])
    np.testing.assert_allclose(view.mask_total[:, 0], [0.5, 0.0, 0.0])
    np.testing.assert_array_equal(view.treatment, [1, 0, 1])


# --- Singleton clusters ---


@pytest.mark.parametrize("strategy", ["ccov", "mim", "mp_aggregate"])
def test_unit_level_with_singletons_equals_hc0(strategy):
    data = _make_unit_data()
    spec = EstimatorSpec(strategy=strategy, model="L")
    clustered = cluster_unit_level(data, spec)
    plain = estimate(data, spec)
    assert clustered.estimate == pytest.approx(plain.estimate, rel=1e-12)
    assert clustered.se == pytest.approx(plain.se, rel=1e-10)
    assert clustered.strategy == f"cluster_unit:{strategy}"


@pytest.mark.parametrize("model", ["F", "L"])
def test_total_level_with_singletons_equals_unit_level(model):
    data = _make_unit_data(seed=2)
    spec = EstimatorSpec(strategy="mim", model=model)
    total = cluster_total_level(data, spec)
    unit = estimate(data, spec)
    assert total.estimate == pytest.approx(unit.estimate, rel=1e-9)
    assert total.se == pytest.approx(unit.se, rel=1e-9)


# --- Cluster-total regression ---


def test_total_level_difference_in_means_is_unbiased():
    pop = gen_cluster_scenario(6, seed=3)
    labels = np.unique(pop.cluster_id)
    estimates = []
    for treated in combinations(labels, 3):
        z = np.isin(pop.cluster_id, treated).astype(int)
        estimates.append(cluster_total_level(reveal(pop, z), EstimatorSpec(strategy="neyman")).estimate)
    assert np.mean(estimates) == pytest.approx(pop.tau, abs=1e-10)


def test_total_level_runs_on_clustered_data():
    data = _make_clustered()
    for strategy in ("neyman", "ccov", "mim"):
        result = cluster_total_level(data, EstimatorSpec(strategy=strategy, model="L"))
        assert result.strategy == f"cluster_total:{strategy}"
        assert result.se > 0


def test_too_few_clusters_for_the_adjustment():
    data = _make_clustered(n_clusters=6, seed=4)
    with pytest.raises(InsufficientClustersError) as err:
        cluster_total_level(data, EstimatorSpec(strategy="mim", model="L"))
    assert err.value.exit_code == 2


def test_total_level_rejects_other_strategies():
    with pytest.raises(ConfigError):
        cluster_total_level(_make_clustered(), EstimatorSpec(strategy="mp", model="L"))


def test_unit_level_rejects_per_pattern_fits():
    with pytest.raises(ConfigError):
        cluster_unit_level(_make_clustered(), EstimatorSpec(strategy="mp", model="L"))


def test_cluster_estimators_need_labels():
    data = _with_clusters(_make_unit_data(), None)
    with pytest.raises(InputError):
        cluster_unit_level(data, EstimatorSpec(strategy="mim"))
    with pytest.raises(InputError):
        cluster_total_level(data, EstimatorSpec(strategy="mim"))
