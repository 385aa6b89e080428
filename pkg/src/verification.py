"""
Acceptance checks run by the ``verify`` command: every check compares production code with an independent
reference (finite differences, grid quadrature, exact refits, analytic calibration targets).
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from diagnostics import split_rhat, ess_bulk, ess_tail
from data_pipeline import DesignMatrix, Encoding
from errors import VarianceBoundViolation
from model_core import ModelSpec, LinkKind, default_priors, log_likelihood, log_posterior_and_gradient, log_prior
from model_eval import pointwise_loglik, psis_loo, exact_loo
from prediction import posterior_predict
from reference_oracle import (finite_diff_gradient, grid_posterior_moments, default_grid, naive_log_likelihood,
                              naive_log_prior)
from sampler import SamplerConfig, PosteriorDraws, sample
from seeding import make_rng

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    """
    Outcome of one verification check.

    Attributes:
        name (str): Check identifier.
        passed (bool): Whether every measured error is within its threshold.
        measured (dict): Measured errors or counts.
        threshold (dict): Limits the measurements were held to.
        detail (str): One-line human summary.
    """
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    threshold: dict = field(default_factory=dict)
    detail: str = ''

    def to_dict(self) -> dict:
        return {'name': self.name, 'passed': self.passed, 'measured': self.measured,
                'threshold': self.threshold, 'detail': self.detail}


def synthetic_model(n: int, beta, seed: int, link: LinkKind | str = LinkKind.LOGIT, prior=None) -> ModelSpec:
    """
    Draws a standard-normal design and Bernoulli outcomes from known coefficients.

    Args:
        n (int): Rows.
        beta (array-like): True intercept and slopes.
        seed (int): Seed of the draw.
        link (LinkKind | str): Link used to generate and to model.
        prior (PriorSpec | None): Prior; defaults to the link's default prior.

    Returns:
        ModelSpec: Model bound to the synthetic data.
    """
    link = LinkKind(link)
    beta = np.asarray(beta, dtype=float)
    rng = make_rng(seed)
    design = rng.standard_normal((n, beta.shape[0] - 1))
    eta = beta[0] + design @ beta[1:]
    p = special.expit(eta) if link is LinkKind.LOGIT else special.ndtr(eta)
    target = (rng.random(n) < p).astype(float)
    return ModelSpec(link, prior or default_priors(link), design, target)


def check_gradients(seed: int, n_points: int = 100) -> CheckResult:
    """Analytic gradient vs central differences, and likelihood/prior vs loop oracles, on random instances."""
    rng = make_rng(seed)
    worst_grad, worst_value = 0.0, 0.0
    for link in LinkKind:
        for _ in range(n_points):
            n, k = int(rng.integers(1, 51)), int(rng.integers(1, 6))
            model = synthetic_model(n, rng.normal(0, 1, k + 1), int(rng.integers(2 ** 31)), link)
            beta = rng.normal(0, 1, k + 1)
            _, grad = log_posterior_and_gradient(beta, model)
            numeric = finite_diff_gradient(lambda b: log_posterior_and_gradient(b, model)[0], beta, 1e-5)
            worst_grad = max(worst_grad, np.max(np.abs(grad - numeric)) / max(np.max(np.abs(numeric)), 1.0))
            for value, reference in ((log_likelihood(beta, model),
                                      naive_log_likelihood(beta, model.design, model.target, link.value)),
                                     (log_prior(beta, model.prior), naive_log_prior(beta, model.prior))):
                worst_value = max(worst_value, abs(value - reference) / max(abs(reference), 1.0))
    passed = worst_grad < 1e-6 and worst_value < 1e-12
    return CheckResult('gradient', passed, {'gradient_rel_error': worst_grad, 'value_rel_error': worst_value},
                       {'gradient_rel_error': 1e-6, 'value_rel_error': 1e-12},
                       f"max gradient error {worst_grad:.2e}, max value error {worst_value:.2e}")


def check_sampler_against_grid(seed: int, config: SamplerConfig, n_workers: int = 1) -> CheckResult:
    """Sampler mean and sd vs grid quadrature on a 2-parameter logit posterior with 50 rows."""
    model = synthetic_model(50, [0.5, 1.0], seed)
    grid_mean, grid_sd = grid_posterior_moments(model, default_grid(model))
    draws = sample(model, config, n_workers)
    pooled = draws.pooled()
    errors, limits = {}, {}
    passed = True
    for j, name in enumerate(draws.param_names):
        ess = ess_bulk(draws.parameter(j))
        sd = pooled[:, j].std(ddof=1)
        mean_limit = max(0.05, 4.0 * sd / math.sqrt(ess))
        sd_limit = max(0.05, 4.0 * sd / math.sqrt(2.0 * ess))
        errors[f"{name}_mean"] = float(abs(pooled[:, j].mean() - grid_mean[j]))
        errors[f"{name}_sd"] = float(abs(sd - grid_sd[j]))
        limits[f"{name}_mean"], limits[f"{name}_sd"] = mean_limit, sd_limit
        passed &= errors[f"{name}_mean"] < mean_limit and errors[f"{name}_sd"] < sd_limit
    return CheckResult('sampler_vs_grid', bool(passed), errors, limits,
                       ', '.join(f"{k} {v:.3f}" for k, v in errors.items()))


def check_loo_against_exact(seed: int, config: SamplerConfig, n_rows: int = 100, n_workers: int = 1) -> CheckResult:
    """PSIS-LOO vs brute-force refits on a small synthetic logit model."""
    model = synthetic_model(n_rows, [0.3, 0.8], seed + 1)
    loo = psis_loo(pointwise_loglik(sample(model, config, n_workers), model))
    exact = exact_loo(model, config, n_workers)
    difference = abs(loo.elpd_loo - exact)
    passed = difference < 0.5 and loo.n_high_k < 2
    return CheckResult('psis_vs_exact_loo', passed, {'elpd_difference': difference, 'n_high_k': loo.n_high_k},
                       {'elpd_difference': 0.5, 'n_high_k': 2},
                       f"psis {loo.elpd_loo:.3f} vs exact {exact:.3f}")


def check_diagnostic_calibration(seed: int, n_seeds: int = 50, n_chains: int = 4, n_draws: int = 1000) -> CheckResult:
    """Rhat and ESS on iid chains (near 1 and near nominal) and on location-shifted chains (Rhat > 1.1)."""
    nominal = n_chains * n_draws
    good = 0
    worst_shifted = math.inf
    for s in range(n_seeds):
        rng = make_rng(seed, s)
        chains = rng.standard_normal((n_chains, n_draws))
        rhat = split_rhat(chains)
        bulk, tail = ess_bulk(chains), ess_tail(chains)
        if 0.99 <= rhat <= 1.01 and abs(bulk - nominal) <= 0.15 * nominal and abs(tail - nominal) <= 0.15 * nominal:
            good += 1
        shifted = rng.standard_normal((2, n_draws)) + np.array([[0.0], [5.0]])
        worst_shifted = min(worst_shifted, split_rhat(shifted))
    # Up to 4% of the iid sets may leave the band, at least one.
    required = n_seeds - math.ceil(0.04 * n_seeds)
    passed = good >= required and worst_shifted > 1.1
    return CheckResult('diagnostic_calibration', passed, {'iid_within_band': good, 'min_shifted_rhat': worst_shifted},
                       {'iid_within_band': required, 'min_shifted_rhat': 1.1},
                       f"{good}/{n_seeds} iid sets in band, shifted Rhat >= {worst_shifted:.2f}")


def check_prediction_bound(seed: int, n_samples: int = 4000, p: float = 0.257) -> CheckResult:
    """Outcome-scale predictions for a row with known predictive probability p."""
    intercept = math.log(p / (1.0 - p))
    draws = PosteriorDraws(
        draws=np.tile([intercept, 0.0], (1, n_samples, 1)), param_names=['Intercept', 'x1'],
        divergence_count=[0], divergent_iterations=[[]], step_size=[1.0], accept_rate=[1.0], seed=seed,
        link=LinkKind.LOGIT.value)
    rows = DesignMatrix(np.zeros((1, 1)), Encoding(['x1'], {}, {'x1': [0.0, 1.0]}, False))
    try:
        row = posterior_predict(draws, rows, 'outcome', seed)[0]
    except VarianceBoundViolation as e:
        return CheckResult('prediction_bound', False, detail=str(e))
    tolerance = 4.0 * math.sqrt(p * (1 - p) / n_samples)
    expected_sd = math.sqrt(p * (1 - p))
    measured = {'estimate_error': abs(row.estimate - p), 'sd_error': abs(row.est_error - expected_sd),
                'q2_5': row.q2_5, 'q97_5': row.q97_5}
    passed = (measured['estimate_error'] < tolerance and measured['sd_error'] < tolerance
              and row.q2_5 == 0.0 and row.q97_5 == 1.0)
    return CheckResult('prediction_bound', passed, measured,
                       {'estimate_error': tolerance, 'sd_error': tolerance, 'q2_5': 0.0, 'q97_5': 1.0},
                       f"estimate {row.estimate:.3f}, est_error {row.est_error:.3f}")


def run_verification_suite(seed: int = 1, quick: bool = False, n_workers: int = 1) -> list[CheckResult]:
    """
    Runs every reference check.

    Args:
        seed (int): Master seed of the synthetic problems.
        quick (bool): Shorter runs for a smoke test; thresholds are unchanged.
        n_workers (int): Threads for sampler chains.

    Returns:
        list[CheckResult]: One result per check, in a fixed order.
    """
    if quick:
        config = SamplerConfig(n_chains=2, n_warmup=300, n_draws=500, seed=seed)
        loo_config = SamplerConfig(n_chains=2, n_warmup=200, n_draws=300, seed=seed)
        loo_rows, n_points, n_seeds = 30, 10, 50
    else:
        config = SamplerConfig(seed=seed)
        loo_config = SamplerConfig(n_chains=4, n_warmup=500, n_draws=1000, seed=seed)
        loo_rows, n_points, n_seeds = 100, 100, 50

    checks = [
        lambda: check_gradients(seed, n_points),
        lambda: check_sampler_against_grid(seed, config, n_workers),
        lambda: check_loo_against_exact(seed, loo_config, loo_rows, n_workers),
        lambda: check_diagnostic_calibration(seed, n_seeds),
        lambda: check_prediction_bound(seed),
    ]
    results = []
    for check in checks:
        result = check()
        logger.info(f"verify {result.name}: {'PASS' if result.passed else 'FAIL'} ({result.detail})")
        results.append(result)
    return results
