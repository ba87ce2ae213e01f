import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from baselearners import (BaseLearner, CandidateFit, bl_design, bl_fit, bl_predict,
                          df_to_lambda, effective_df, penalty_matrix, prepare)
from copula_errors import ConfigurationError, InputError


@pytest.fixture
def x(rng):
    return rng.uniform(-2.0, 3.0, size=300)


class TestDesign:

    def test_intercept(self):
        basis, penalty = bl_design(BaseLearner("intercept"), np.zeros(4))
        assert_allclose(basis, np.ones((4, 1)))
        assert not penalty.any()

    def test_linear(self, x):
        basis, _ = bl_design(BaseLearner("linear", "x1"), x)
        assert_allclose(basis[:, 1], x)
        assert_allclose(basis[:, 0], 1.0)

    def test_pspline_partition_of_unity(self, x):
        learner = prepare(BaseLearner("pspline", "x1"), x)
        basis, penalty = bl_design(learner, x)
        assert basis.shape == (300, 24)
        assert penalty.shape == (24, 24)
        assert_allclose(basis.sum(axis=1), 1.0, atol=1e-12)

    def test_pspline_penalty_null_space(self):
        penalty = penalty_matrix(BaseLearner("pspline", "x1"), 10)
        assert_allclose(penalty @ np.ones(10), 0.0, atol=1e-12)
        assert_allclose(penalty @ np.arange(10.0), 0.0, atol=1e-12)

    def test_pspline_extrapolates(self, x):
        learner = prepare(BaseLearner("pspline", "x1"), x)
        basis, _ = bl_design(learner, np.array([-2.5, 3.4]))
        assert np.isfinite(basis).all()

    def test_constant_covariate(self):
        with pytest.raises(ConfigurationError):
            prepare(BaseLearner("pspline", "x1"), np.ones(20))

    def test_categorical_levels_and_unseen(self, caplog):
        learner = prepare(BaseLearner("categorical", "g"), np.array(["b", "a", "c", "a"]))
        assert learner.levels == ["a", "b", "c"]
        with caplog.at_level(logging.WARNING):
            basis, _ = bl_design(learner, np.array(["a", "z"]))
        assert_allclose(basis, [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        assert "unseen" in caplog.text

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            BaseLearner("tree", "x1")

    def test_covariate_required(self):
        with pytest.raises(ConfigurationError):
            BaseLearner("linear")

    def test_learner_ids(self):
        assert BaseLearner("intercept").learner_id == "intercept"
        assert BaseLearner("pspline", "x3").learner_id == "pspline(x3)"


class TestDegreesOfFreedom:

    @pytest.mark.parametrize("df", [2.5, 4.0, 8.0])
    def test_lambda_hits_target(self, x, df):
        learner = prepare(BaseLearner("pspline", "x1", df=df), x)
        basis, penalty = bl_design(learner, x)
        assert_allclose(effective_df(basis.T @ basis, penalty, learner.lam), df, atol=1e-3)

    def test_default_pspline_df_is_four(self, x):
        learner = prepare(BaseLearner("pspline", "x1"), x)
        basis, penalty = bl_design(learner, x)
        assert_allclose(effective_df(basis.T @ basis, penalty, learner.lam), 4.0, atol=1e-3)

    def test_weights_restrict_to_training_rows(self, x):
        weights = (np.arange(x.size) % 3 == 0).astype(float)
        learner = prepare(BaseLearner("pspline", "x1", df=4.0), x, weights)
        basis, penalty = bl_design(learner, x)
        gram = basis.T @ (basis * weights[:, None])
        assert_allclose(effective_df(gram, penalty, learner.lam), 4.0, atol=1e-3)

    def test_unpenalized_learners_get_zero_lambda(self, x):
        assert prepare(BaseLearner("linear", "x1"), x).lam == 0.0
        assert prepare(BaseLearner("intercept"), x).lam == 0.0

    def test_df_above_rank(self, x):
        with pytest.raises(ConfigurationError):
            prepare(BaseLearner("pspline", "x1", df=30.0), x)

    def test_df_below_null_space(self, x):
        basis, _ = bl_design(prepare(BaseLearner("pspline", "x1"), x), x)
        with pytest.raises(ConfigurationError):
            df_to_lambda(BaseLearner("pspline", "x1"), basis, 1.5)

    def test_categorical_default_df(self):
        g = np.repeat(["a", "b", "c"], 10)
        learner = prepare(BaseLearner("categorical", "g"), g)
        basis, penalty = bl_design(learner, g)
        assert_allclose(effective_df(basis.T @ basis, penalty, learner.lam), 3.0, atol=1e-3)


class TestFit:

    def test_linear_is_least_squares(self, x, rng):
        target = 1.5 - 0.7 * x + rng.normal(size=x.size)
        fitted = bl_fit(BaseLearner("linear", "x1"), x, target)
        design = np.column_stack([np.ones_like(x), x])
        expected, *_ = np.linalg.lstsq(design, target, rcond=None)
        assert_allclose(fitted.coefficients, expected, rtol=1e-10)
        assert_allclose(fitted.rss, np.sum((target - design @ expected) ** 2), rtol=1e-10)

    def test_intercept_is_weighted_mean(self, rng):
        target = rng.normal(size=50)
        weights = np.r_[np.ones(20), np.zeros(30)]
        fitted = bl_fit(BaseLearner("intercept"), None, target, weights)
        assert_allclose(fitted.coefficients, [np.mean(target[:20])])

    def test_candidate_matches_direct_fit(self, x, rng):
        train = np.arange(x.size) < 200
        learner = prepare(BaseLearner("pspline", "x1"), x, train.astype(float))
        target = np.sin(x) + rng.normal(scale=0.3, size=x.size)
        coefficients, fitted, rss = CandidateFit(learner, x, train).fit(target)
        direct = bl_fit(learner, x, target, train.astype(float))
        assert_allclose(coefficients, direct.coefficients, rtol=1e-8, atol=1e-10)
        assert_allclose(rss, direct.rss, rtol=1e-8)
        assert_allclose(fitted, bl_predict(learner, coefficients, x), atol=1e-12)

    def test_penalty_shrinks_towards_null_space(self, x):
        target = np.sin(3 * x)
        rough = bl_fit(prepare(BaseLearner("pspline", "x1", df=10.0), x), x, target)
        smooth = bl_fit(prepare(BaseLearner("pspline", "x1", df=2.5), x), x, target)
        assert smooth.rss > rough.rss

    def test_length_mismatch(self, x):
        with pytest.raises(InputError):
            bl_fit(BaseLearner("linear", "x1"), x, np.zeros(x.size - 1))

    def test_coefficient_count_checked(self, x):
        with pytest.raises(InputError):
            bl_predict(BaseLearner("linear", "x1"), [1.0, 2.0, 3.0], x)

    def test_prepared_learner_round_trip(self, x):
        learner = prepare(BaseLearner("pspline", "x1", df=3.0), x)
        restored = BaseLearner.from_dict(learner.to_dict())
        assert restored == learner
        assert restored.is_prepared
