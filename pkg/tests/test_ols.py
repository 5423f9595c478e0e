"""Tests for core.ols - pruning, QR fit, HC0/HC1/CR0 sandwiches and the design builders."""
from unittest.mock import patch

import numpy as np
import pytest

from core.errors import DegenerateDesignError, InputError, InternalInvariantError
from core.ols import (
    INTERCEPT,
    TREATMENT,
    DesignMatrix,
    build_additive,
    build_interacted,
    build_moderated,
    fit,
    independent_columns,
    robust_cov,
    treatment_effect,
)
from dataset.experiment import ExperimentData


def _make_data(n=40, j=2, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, j))
    z = rng.permutation(np.repeat([1, 0], [n // 2, n - n // 2]))
    y = 1.0 + 2.0 * z + x @ np.arange(1, j + 1) + rng.normal(size=n)
    return ExperimentData(outcome=y, treatment=z, covariates=x, mask=np.zeros_like(x, dtype=bool))


def _hc0_by_hand(X, y):
    xtx_inv = np.linalg.inv(X.T @ X)
    beta = xtx_inv @ X.T @ y
    e = y - X @ beta
    meat = X.T @ (X * e[:, None] ** 2)
    return beta, xtx_inv @ meat @ xtx_inv


# --- Pruning ---


def test_independent_columns_drops_duplicates_and_zero_columns():
    rng = np.random.default_rng(1)
    a = rng.normal(size=20)
    b = rng.normal(size=20)
    matrix = np.column_stack([a, np.zeros(20), b, a + 2 * b, 3 * a])
    assert independent_columns(matrix) == [0, 2]


def test_independent_columns_keeps_first_of_collinear_group():
    rng = np.random.default_rng(2)
    a = rng.normal(size=15)
    matrix = np.column_stack([2 * a, a])
    assert independent_columns(matrix) == [0]


def test_rel_tol_comes_from_settings():
    rng = np.random.default_rng(3)
    a = rng.normal(size=30)
    nearly = a + 1e-6 * rng.normal(size=30)
    matrix = np.column_stack([a, nearly])
    with patch("core.ols.settings") as s:
        s.rel_tol = 1e-3
        assert independent_columns(matrix) == [0]
    assert independent_columns(matrix, rel_tol=1e-10) == [0, 1]


# --- Fit and sandwich ---


def test_fit_matches_normal_equations():
    data = _make_data()
    X = build_additive(data, data.covariates)
    ols = fit(X, data.outcome)
    expected, _ = _hc0_by_hand(X.columns, data.outcome)
    np.testing.assert_allclose(ols.coefficients, expected, rtol=1e-10)
    np.testing.assert_allclose(ols.fitted + ols.residuals, data.outcome, rtol=1e-12)


def test_pruned_coefficients_are_nan_and_reported():
    data = _make_data()
    features = np.column_stack([data.covariates, data.covariates[:, 0]])
    X = build_additive(data, features, ["a", "b", "a_again"])
    ols = fit(X, data.outcome)
    assert ols.dropped == (4,)
    assert np.isnan(ols.coefficients[4])
    with pytest.raises(DegenerateDesignError):
        ols.position(4)


def test_hc0_matches_textbook_sandwich():
    data = _make_data(seed=4)
    X = build_additive(data, data.covariates)
    ols = fit(X, data.outcome)
    cov = robust_cov(ols, X, "hc0")
    _, expected = _hc0_by_hand(X.columns, data.outcome)
    np.testing.assert_allclose(cov.matrix, expected, rtol=1e-9)


def test_hc1_scales_hc0_by_degrees_of_freedom():
    data = _make_data(seed=5)
    X = build_additive(data, data.covariates)
    ols = fit(X, data.outcome)
    hc0 = robust_cov(ols, X, "hc0").matrix
    hc1 = robust_cov(ols, X, "hc1").matrix
    np.testing.assert_allclose(hc1, hc0 * data.n / (data.n - X.p), rtol=1e-12)


def test_cr0_with_singleton_clusters_equals_hc0():
    data = _make_data(seed=6)
    X = build_interacted(data, data.covariates)
    ols = fit(X, data.outcome)
    hc0 = robust_cov(ols, X, "hc0").matrix
    cr0 = robust_cov(ols, X, "cr0", cluster_id=np.arange(data.n)[::-1]).matrix
    np.testing.assert_array_equal(cr0, hc0)


def test_cr0_sums_scores_within_clusters():
    data = _make_data(n=30, seed=7)
    X = build_additive(data, data.covariates)
    ols = fit(X, data.outcome)
    clusters = np.repeat(np.arange(10), 3)
    Xc = X.columns
    xtx_inv = np.linalg.inv(Xc.T @ Xc)
    scores = Xc * ols.residuals[:, None]
    sums = np.array([scores[clusters == g].sum(axis=0) for g in range(10)])
    expected = xtx_inv @ sums.T @ sums @ xtx_inv
    np.testing.assert_allclose(robust_cov(ols, X, "cr0", clusters).matrix, expected, rtol=1e-9)


def test_cr0_without_clusters_is_an_input_error():
    data = _make_data()
    X = build_additive(data)
    with pytest.raises(InputError):
        robust_cov(fit(X, data.outcome), X, "cr0")


def test_unknown_flavor_is_an_input_error():
    data = _make_data()
    X = build_additive(data)
    with pytest.raises(InputError):
        robust_cov(fit(X, data.outcome), X, "hc3")


# --- Builders ---


def test_additive_layout():
    data = _make_data(j=2)
    X = build_additive(data, data.covariates, ["a", "b"])
    assert X.labels == (INTERCEPT, TREATMENT, "a", "b")
    np.testing.assert_array_equal(X.columns[:, 1], data.treatment)


def test_interacted_centers_at_full_sample_mean():
    data = _make_data(j=2)
    X = build_interacted(data, data.covariates, ["a", "b"])
    assert X.labels == (INTERCEPT, TREATMENT, "a", "b", "Z:a", "Z:b")
    np.testing.assert_allclose(X.columns[:, 2:4].mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(X.columns[:, 4], data.treatment * X.columns[:, 2])
    assert X.centering["a"] == pytest.approx(data.covariates[:, 0].mean())


def test_moderated_layout():
    data = _make_data(j=2)
    g = (np.arange(data.n) % 2).astype(float)
    X = build_moderated(data, data.covariates, g, ["a", "b"], ["g"])
    assert X.labels == (INTERCEPT, TREATMENT, "g", "Z:g", "a", "b", "a:g", "b:g")
    centered = g - g.mean()
    np.testing.assert_allclose(X.columns[:, 6], data.covariates[:, 0] * centered)


def test_design_matrix_requires_treatment_at_index_one():
    with pytest.raises(InternalInvariantError):
        DesignMatrix(columns=np.ones((4, 2)), labels=(TREATMENT, INTERCEPT))


# --- Treatment effect ---


def test_treatment_effect_difference_in_means():
    y = np.array([1.0, 3.0, 2.0, 6.0])
    z = np.array([0, 0, 1, 1])
    data = ExperimentData(outcome=y, treatment=z, covariates=np.empty((4, 0)), mask=np.empty((4, 0)))
    estimate, se, _ = treatment_effect(build_additive(data), y, "hc0")
    assert estimate == pytest.approx(2.0)
    # HC0 for [1, Z]: sum of squared within-arm deviations over N_z^2
    assert se ** 2 == pytest.approx((2 * 2**2) / 4 + (2 * 1**2) / 4)


def test_treatment_collinear_with_intercept_is_degenerate():
    data = _make_data()
    constant = DesignMatrix(
        columns=np.column_stack([np.ones(data.n), np.ones(data.n)]),
        labels=(INTERCEPT, TREATMENT),
    )
    with pytest.raises(DegenerateDesignError):
        treatment_effect(constant, data.outcome)


def test_constant_outcome_gives_exact_zero_effect_and_se():
    y = np.full(6, 3.7)
    data = ExperimentData(outcome=y, treatment=[1, 0, 1, 0, 1, 0], covariates=np.empty((6, 0)), mask=np.empty((6, 0)))
    estimate, se, _ = treatment_effect(build_additive(data), y, "hc0")
    assert estimate == 0.0
    assert se == 0.0
