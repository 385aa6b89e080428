import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from model_core import (LinkKind, Coefficients, PriorSpec, ModelSpec, default_priors, logit_link, probit_link,
                        log_link_pair, log_likelihood, log_prior, log_posterior_and_gradient)
from errors import DimensionMismatch, DataError
from reference_oracle import finite_diff_gradient, naive_log_likelihood, naive_log_prior


class TestLinks:
    def test_logit_is_symmetric_and_bounded(self):
        eta = np.array([-800.0, -30.0, -1.0, 0.0, 1.0, 30.0, 800.0])
        p = logit_link(eta)
        assert np.all(p > 0) and np.all(p < 1)
        np.testing.assert_allclose(p + logit_link(-eta), 1.0, rtol=1e-15)
        assert logit_link(0.0) == 0.5

    def test_probit_matches_normal_cdf(self):
        eta = np.linspace(-5, 5, 21)
        np.testing.assert_allclose(probit_link(eta), stats.norm.cdf(eta), rtol=1e-12)

    @pytest.mark.parametrize('link', list(LinkKind))
    def test_log_pair_is_finite_in_the_tails(self, link):
        log_p, log_q = log_link_pair(np.array([-1e4, -40.0, 40.0, 1e4]), link)
        assert np.all(np.isfinite(log_p)) and np.all(np.isfinite(log_q))
        np.testing.assert_allclose(np.exp(log_p[1:3]) + np.exp(log_q[1:3]), 1.0)


class TestPriors:
    def test_defaults(self):
        assert default_priors('logit').as_tuple() == (3.5, 1.0, 0.0, 0.5)
        assert default_priors(LinkKind.PROBIT).as_tuple() == (0.0, 5.0, 0.0, 2.0)

    def test_scale_must_be_positive(self):
        with pytest.raises(ValidationError):
            PriorSpec(intercept_mean=0.0, intercept_sd=0.0, slope_mean=0.0, slope_sd=1.0)

    def test_log_prior_is_sum_of_normal_log_densities(self):
        prior = PriorSpec(intercept_mean=1.0, intercept_sd=2.0, slope_mean=-0.5, slope_sd=0.3)
        beta = np.array([0.2, 0.1, -1.0])
        expected = stats.norm.logpdf(0.2, 1.0, 2.0) + stats.norm.logpdf([0.1, -1.0], -0.5, 0.3).sum()
        assert log_prior(beta, prior) == pytest.approx(expected, rel=1e-13)


class TestModelSpec:
    def test_shape_checks(self):
        with pytest.raises(DimensionMismatch):
            ModelSpec('logit', default_priors('logit'), np.zeros((3, 2)), np.zeros(4))
        with pytest.raises(DimensionMismatch):
            ModelSpec('logit', default_priors('logit'), np.zeros(3), np.zeros(3))

    def test_parameter_names(self, logistic_model):
        assert logistic_model.param_names == ['Intercept', 'x1']
        assert logistic_model.n_params == 2

    def test_fingerprint_ignores_row_order_link_and_prior(self, logistic_model):
        order = np.random.default_rng(0).permutation(logistic_model.n_rows)
        shuffled = ModelSpec('probit', default_priors('probit'), logistic_model.design[order],
                             logistic_model.target[order])
        assert shuffled.fingerprint() == logistic_model.fingerprint()
        assert logistic_model.without_row(0).fingerprint() != logistic_model.fingerprint()

    def test_coefficients_reject_non_finite(self):
        with pytest.raises(DataError):
            Coefficients(math.nan, [0.0])
        np.testing.assert_array_equal(Coefficients.from_vector([1.0, 2.0]).to_vector(), [1.0, 2.0])


class TestLogPosterior:
    @pytest.mark.parametrize('link', ['logit', 'probit'])
    def test_matches_naive_loops(self, logistic_model, link):
        model = ModelSpec(link, default_priors(link), logistic_model.design, logistic_model.target)
        beta = np.array([0.3, -0.7])
        assert log_likelihood(beta, model) == pytest.approx(
            naive_log_likelihood(beta, model.design, model.target, link), rel=1e-12)
        value, _ = log_posterior_and_gradient(beta, model)
        assert value == pytest.approx(log_likelihood(beta, model) + naive_log_prior(beta, model.prior), rel=1e-12)

    @pytest.mark.parametrize('link', ['logit', 'probit'])
    def test_gradient_matches_finite_differences(self, link):
        rng = np.random.default_rng(11)
        design = rng.standard_normal((30, 3))
        target = (rng.random(30) < 0.4).astype(float)
        model = ModelSpec(link, default_priors(link), design, target)
        for _ in range(5):
            beta = rng.normal(0, 1, 4)
            _, grad = log_posterior_and_gradient(beta, model)
            numeric = finite_diff_gradient(lambda b: log_posterior_and_gradient(b, model)[0], beta)
            np.testing.assert_allclose(grad, numeric, rtol=1e-6, atol=1e-6)

    def test_extreme_linear_predictor_stays_finite(self):
        model = ModelSpec('probit', default_priors('probit'), np.array([[1.0], [-1.0]]), np.array([0.0, 1.0]))
        value, grad = log_posterior_and_gradient(np.array([0.0, 60.0]), model)
        assert math.isfinite(value) and np.all(np.isfinite(grad))

    def test_wrong_length_vector(self, logistic_model):
        with pytest.raises(DimensionMismatch):
            log_likelihood(np.zeros(3), logistic_model)

    def test_accepts_coefficients(self, logistic_model):
        beta = Coefficients(0.1, [0.2])
        assert log_likelihood(beta, logistic_model) == log_likelihood(np.array([0.1, 0.2]), logistic_model)
