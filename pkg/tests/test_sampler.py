import numpy as np
import pytest
from pydantic import ValidationError

from conftest import StandardNormalTarget
from errors import AdaptationFailure, NonFiniteGradient, DataError
from sampler import (SamplerConfig, PosteriorDraws, DualAveraging, NutsKernel, warmup_windows, initialize_chain,
                     sample)
from seeding import make_rng


class CliffTarget:
    """Finite only at the first point it is asked about; step-size search can never succeed."""
    n_params = 2
    param_names = ['Intercept', 'x1']

    def __init__(self) -> None:
        self.start = None

    def log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.start is None:
            self.start = theta.copy()
        if np.array_equal(theta, self.start):
            return 0.0, np.zeros(2)
        return -np.inf, np.zeros(2)


class NowhereFinite:
    n_params = 1
    param_names = ['Intercept']

    def log_density(self, theta):
        return np.nan, np.full(1, np.nan)


class TestWarmupWindows:
    def test_default_schedule(self):
        assert warmup_windows(1000) == [(75, 100), (100, 150), (150, 250), (250, 450), (450, 950)]

    def test_short_warmup_shrinks_buffers(self):
        assert warmup_windows(100) == [(15, 90)]

    def test_very_short_warmup_has_no_metric_adaptation(self):
        assert warmup_windows(10) == []
        assert warmup_windows(0) == []


class TestDualAveraging:
    def test_step_grows_when_acceptance_is_high(self):
        adapter = DualAveraging(0.1, 0.8)
        for _ in range(50):
            step = adapter.update(1.0)
        assert step > 0.1 and adapter.final_step_size > 0.1

    def test_step_shrinks_when_acceptance_is_low(self):
        adapter = DualAveraging(0.1, 0.8)
        for _ in range(50):
            step = adapter.update(0.0)
        assert step < 0.1 and adapter.final_step_size < 0.1

    def test_restart_resets_counters(self):
        adapter = DualAveraging(0.1, 0.8)
        adapter.update(0.3)
        adapter.restart(0.5)
        assert adapter.t == 0 and adapter.h_bar == 0.0
        assert adapter.mu == pytest.approx(np.log(5.0))


class TestNutsKernel:
    def test_small_steps_are_nearly_always_accepted(self):
        kernel = NutsKernel(StandardNormalTarget(2), make_rng(1))
        kernel.step_size = 1e-3
        current = kernel.point(np.array([0.5, -0.5]))
        _, info = kernel.transition(current)
        assert info.accept_stat > 0.999 and not info.divergent

    def test_huge_step_diverges(self):
        kernel = NutsKernel(StandardNormalTarget(2), make_rng(2))
        kernel.step_size = 100.0
        current = kernel.point(np.array([1.0, 1.0]))
        proposal, info = kernel.transition(current)
        assert info.divergent
        np.testing.assert_array_equal(proposal.theta, current.theta)

    def test_tree_depth_is_capped(self):
        kernel = NutsKernel(StandardNormalTarget(2), make_rng(3), max_tree_depth=2)
        kernel.step_size = 1e-4
        _, info = kernel.transition(kernel.point(np.zeros(2)))
        assert info.depth <= 2 and info.n_leapfrog <= 3

    def test_step_size_search_lands_near_half_acceptance(self):
        kernel = NutsKernel(StandardNormalTarget(3), make_rng(4))
        step = kernel.find_reasonable_step_size(kernel.point(np.ones(3)))
        assert 1e-3 < step < 10.0


class TestSample:
    def test_recovers_standard_normal_moments(self):
        draws = sample(StandardNormalTarget(2), SamplerConfig(n_chains=2, n_warmup=500, n_draws=1000, seed=7))
        pooled = draws.pooled()
        assert pooled.shape == (2000, 2)
        np.testing.assert_allclose(pooled.mean(axis=0), 0.0, atol=0.15)
        np.testing.assert_allclose(pooled.std(axis=0), 1.0, atol=0.15)
        assert draws.divergence_count.sum() == 0
        np.testing.assert_allclose(draws.inv_metric, 1.0, atol=0.5)

    def test_seeded_runs_are_identical_for_any_thread_count(self):
        config = SamplerConfig(n_chains=3, n_warmup=60, n_draws=40, seed=11)
        serial = sample(StandardNormalTarget(2), config)
        threaded = sample(StandardNormalTarget(2), config, n_workers=3)
        np.testing.assert_array_equal(serial.draws, threaded.draws)
        np.testing.assert_array_equal(serial.step_size, threaded.step_size)
        other = sample(StandardNormalTarget(2), config.model_copy(update={'seed': 12}))
        assert not np.array_equal(serial.draws, other.draws)

    def test_zero_warmup_still_samples(self):
        draws = sample(StandardNormalTarget(1), SamplerConfig(n_chains=1, n_warmup=0, n_draws=5))
        assert draws.draws.shape == (1, 5, 1)

    def test_model_metadata_is_attached(self, logistic_model):
        draws = sample(logistic_model, SamplerConfig(n_chains=1, n_warmup=50, n_draws=20, seed=3))
        assert draws.param_names == ['Intercept', 'x1']
        assert draws.link == 'logit' and draws.model_name == 'logit_model'
        assert draws.fingerprint == logistic_model.fingerprint()
        assert draws.prior == {'intercept_mean': 3.5, 'intercept_sd': 1.0, 'slope_mean': 0.0, 'slope_sd': 0.5}

    def test_step_size_collapse_is_reported(self):
        with pytest.raises(AdaptationFailure):
            sample(CliffTarget(), SamplerConfig(n_chains=1, n_warmup=10, n_draws=10))

    def test_no_finite_start(self):
        with pytest.raises(NonFiniteGradient):
            initialize_chain(NowhereFinite(), 0, SamplerConfig())

    def test_starts_lie_in_the_init_box(self):
        config = SamplerConfig(init_radius=0.5, seed=9)
        for c in range(4):
            start = initialize_chain(StandardNormalTarget(3), c, config).to_vector()
            assert np.all(np.abs(start) <= 0.5)


class TestConfigAndDraws:
    def test_config_bounds(self):
        with pytest.raises(ValidationError):
            SamplerConfig(max_tree_depth=16)
        with pytest.raises(ValidationError):
            SamplerConfig(target_accept=1.0)

    def test_draws_reject_bad_shapes_and_values(self):
        kwargs = dict(param_names=['Intercept'], divergence_count=[0], divergent_iterations=[[]],
                      step_size=[0.1], accept_rate=[0.8], seed=1)
        with pytest.raises(DataError):
            PosteriorDraws(draws=np.zeros((2, 3)), **kwargs)
        with pytest.raises(DataError):
            PosteriorDraws(draws=np.full((1, 3, 1), np.inf), **kwargs)

    def test_divergence_fraction(self):
        draws = PosteriorDraws(draws=np.zeros((2, 100, 1)), param_names=['Intercept'], divergence_count=[1, 2],
                               divergent_iterations=[[5], [6, 7]], step_size=[0.1, 0.1], accept_rate=[0.8, 0.8],
                               seed=1)
        assert draws.divergence_fraction == pytest.approx(0.015)
        assert draws.too_many_divergences
