"""Tests for features.missingness - imputation, constants policies, feature blocks and balance."""
from unittest.mock import patch

import numpy as np
import pytest

from core.errors import DebiasUndefinedError, FullyMissingColumnError, InputError
from dataset.experiment import ExperimentData
from features.missingness import (
    balance_check,
    complete_covariate_features,
    debias_constants,
    feature_block,
    impute,
    indicator_block,
    mim_features,
    mp_features,
    observed_means,
    pattern_products,
    resolve_constants,
    second_order_features,
)


def _make_data(n=60, seed=0, rate=0.3):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    mask = np.zeros((n, 3), dtype=bool)
    mask[:, 1:] = rng.random((n, 2)) < rate
    z = rng.permutation(np.repeat([1, 0], [n // 2, n - n // 2]))
    y = x.sum(axis=1) + z + rng.normal(size=n)
    return ExperimentData(outcome=y, treatment=z, covariates=x, mask=mask, covariate_names=("a", "b", "c"))


# --- Imputation ---


def test_impute_fills_only_masked_cells():
    data = _make_data()
    imputed = impute(data, [10.0, 20.0, 30.0]).values
    np.testing.assert_array_equal(imputed[~data.mask], data.covariates[~data.mask])
    assert np.all(imputed[:, 1][data.mask[:, 1]] == 20.0)
    assert np.all(imputed[:, 2][data.mask[:, 2]] == 30.0)


def test_impute_rejects_wrong_length():
    with pytest.raises(InputError):
        impute(_make_data(), [0.0, 0.0])


def test_observed_means_ignore_missing_cells():
    data = _make_data()
    expected = [data.covariates[~data.mask[:, j], j].mean() for j in range(3)]
    np.testing.assert_allclose(observed_means(data), expected)


def test_observed_means_fully_missing_column():
    data = ExperimentData(
        outcome=[1.0, 2.0, 3.0], treatment=[0, 1, 1], covariates=np.zeros((3, 1)),
        mask=np.ones((3, 1), dtype=bool), covariate_names=("gone",),
    )
    with pytest.raises(FullyMissingColumnError) as err:
        observed_means(data)
    assert err.value.columns == ["gone"]


def _make_debias_data(control_missing: bool):
    x = np.array([[0.0, 4.0], [0.0, 0.0], [0.0, 2.0], [0.0, 6.0], [0.0, 8.0], [0.0, 10.0]])
    mask = np.zeros((6, 2), dtype=bool)
    mask[1, 1] = True
    mask[5, 1] = control_missing
    return ExperimentData(outcome=np.arange(6.0), treatment=[1, 1, 1, 0, 0, 0], covariates=x, mask=mask)


def test_debias_constants_value():
    # A(1) = 2/3, A(0) = 1; Ax(1) = (4 + 0 + 2) / 3, Ax(0) = (6 + 8 + 10) / 3
    c = debias_constants(_make_debias_data(control_missing=False))
    assert c[1] == pytest.approx((2.0 - 8.0) / (2 / 3 - 1.0))
    assert c[0] == 0.0


def test_debias_constants_undefined_for_equal_observed_rates():
    with pytest.raises(DebiasUndefinedError) as err:
        debias_constants(_make_debias_data(control_missing=True))
    assert err.value.columns == ["x2"]


def test_resolve_constants_policies():
    data = _make_data()
    np.testing.assert_array_equal(resolve_constants(data, "zeros"), np.zeros(3))
    np.testing.assert_allclose(resolve_constants(data, "means"), observed_means(data))
    np.testing.assert_array_equal(resolve_constants(data, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])
    with pytest.raises(InputError):
        resolve_constants(data, "median")


# --- Feature blocks ---


def test_complete_covariate_features_keep_fully_observed_columns():
    block = complete_covariate_features(_make_data())
    assert block.labels == ("a",)


def test_indicator_block_skips_complete_and_duplicate_columns():
    data = _make_data()
    mask = data.mask.copy()
    mask[:, 2] = mask[:, 1]
    twin = ExperimentData(outcome=data.outcome, treatment=data.treatment, covariates=data.covariates,
                          mask=mask, covariate_names=data.covariate_names)
    assert indicator_block(twin).labels == ("M_b",)
    assert indicator_block(twin, dedupe=False).labels == ("M_b", "M_c")


def test_mim_features_layout():
    block = mim_features(_make_data(), np.zeros(3))
    assert block.labels == ("a", "b", "c", "M_b", "M_c")
    assert block.width == 5


def test_pattern_products_kronecker_order():
    data = _make_data()
    block = pattern_products(data)
    # J = 3 gives 2^3 - 1 products; column a is complete so its products are all zero
    # the last covariate varies fastest: (1, M_a) (x) (1, M_b) (x) (1, M_c) without its leading 1
    assert block.labels == ("M_c", "M_b", "M_b*M_c", "M_a", "M_a*M_c", "M_a*M_b", "M_a*M_b*M_c")
    np.testing.assert_array_equal(block.matrix[:, 3], 0.0)
    np.testing.assert_array_equal(block.matrix[:, 2], data.mask[:, 1] & data.mask[:, 2])


def test_mp_features_width():
    data = _make_data()
    block = mp_features(data, np.zeros(3))
    # (J + 1) 2^J - 1
    assert block.width == 4 * 8 - 1
    assert block.labels[:3] == ("a", "b", "c")
    assert block.labels[3:10] == pattern_products(data).labels


def test_mp_features_warns_above_cap():
    data = _make_data()
    with patch("features.missingness.settings") as s, patch("features.missingness.logger") as log:
        s.mp_max_covariates = 2
        mp_features(data, np.zeros(3))
    log.warning.assert_called_once()


def test_second_order_features_labels():
    block = second_order_features(_make_data(), np.zeros(3))
    assert block.labels[:5] == ("a", "b", "c", "M_b", "M_c")
    assert block.labels[5] == "M_b*M_c"
    assert "a*M_c" in block.labels


@pytest.mark.parametrize("strategy,width", [("neyman", 0), ("cc", 3), ("ccov", 1), ("imp", 3), ("mim", 5),
                                            ("mc", 4), ("cim", 4)])
def test_feature_block_dispatch(strategy, width):
    assert feature_block(_make_data(), strategy).width == width


def test_feature_block_unknown_strategy():
    with pytest.raises(InputError):
        feature_block(_make_data(), "mp")


# --- Balance ---


def test_balance_check_rates_and_z():
    data = _make_data(n=200, seed=3)
    report = balance_check(data)
    treated = data.treatment == 1
    b = report.indicators[1]
    assert b.column == "b"
    assert b.rate_treated == pytest.approx(data.mask[treated, 1].mean())
    assert b.rate_control == pytest.approx(data.mask[~treated, 1].mean())
    # never-missing column: pooled rate 0 gives z = 0
    assert report.indicators[0].z == 0.0
    assert report.max_abs_z >= abs(b.z)
