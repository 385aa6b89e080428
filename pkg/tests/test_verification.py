import numpy as np
import pytest

from model_core import LinkKind
from sampler import SamplerConfig
from verification import (synthetic_model, check_gradients, check_diagnostic_calibration, check_prediction_bound,
                          check_sampler_against_grid, check_loo_against_exact, run_verification_suite)


class TestSyntheticModel:
    def test_shapes_and_reproducibility(self):
        model = synthetic_model(40, [0.5, 1.0, -1.0], seed=3, link='probit')
        assert model.design.shape == (40, 2) and model.link is LinkKind.PROBIT
        again = synthetic_model(40, [0.5, 1.0, -1.0], seed=3, link='probit')
        np.testing.assert_array_equal(model.target, again.target)
        assert set(np.unique(model.target)) <= {0.0, 1.0}


class TestFastChecks:
    def test_gradients(self):
        result = check_gradients(seed=2, n_points=5)
        assert result.passed, result.detail
        assert result.measured['gradient_rel_error'] < 1e-6

    def test_diagnostic_calibration(self):
        result = check_diagnostic_calibration(seed=3, n_seeds=5)
        assert result.measured['iid_within_band'] >= 4, result.detail
        assert result.measured['min_shifted_rhat'] > 1.1

    @pytest.mark.parametrize('n_seeds, required', [(50, 48), (25, 24), (10, 9)])
    def test_calibration_allows_occasional_excursions(self, n_seeds, required):
        result = check_diagnostic_calibration(seed=1, n_seeds=n_seeds, n_draws=200)
        assert result.threshold['iid_within_band'] == required

    def test_prediction_bound(self):
        result = check_prediction_bound(seed=4)
        assert result.passed, result.detail
        assert result.measured['q2_5'] == 0.0 and result.measured['q97_5'] == 1.0


@pytest.mark.slow
class TestSlowChecks:
    def test_sampler_matches_grid(self):
        result = check_sampler_against_grid(1, SamplerConfig(n_chains=4, n_warmup=500, n_draws=1000, seed=1))
        assert result.passed, result.detail

    def test_psis_matches_exact_loo(self):
        result = check_loo_against_exact(1, SamplerConfig(n_chains=2, n_warmup=200, n_draws=300, seed=1), n_rows=30)
        assert result.passed, result.detail

    def test_quick_suite(self):
        results = run_verification_suite(seed=1, quick=True)
        assert [r.name for r in results] == ['gradient', 'sampler_vs_grid', 'psis_vs_exact_loo',
                                             'diagnostic_calibration', 'prediction_bound']
        assert all(r.passed for r in results), [r.detail for r in results if not r.passed]
