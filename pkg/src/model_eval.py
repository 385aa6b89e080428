"""
Pointwise predictive densities, Pareto-smoothed importance-sampling leave-one-out cross-validation and the
elpd model comparison.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from errors import DimensionMismatch, DatasetMismatch, TooLarge, UsageError
from model_core import ModelSpec, pointwise_log_density
from sampler import PosteriorDraws, SamplerConfig, sample

logger = logging.getLogger(__name__)

HIGH_K = 0.7
MIN_TAIL_DRAWS = 25
EXACT_LOO_MAX_ROWS = 500


@dataclass
class LogLikMatrix:
    """
    Per-draw, per-observation log predictive densities.

    Attributes:
        values (np.ndarray): S x N matrix; every entry is finite and <= 0.
        fingerprint (str | None): Fingerprint of the observation set the columns belong to.
    """
    values: np.ndarray
    fingerprint: str | None = None

    @property
    def n_draws(self) -> int:
        return self.values.shape[0]

    @property
    def n_obs(self) -> int:
        return self.values.shape[1]


@dataclass
class LooResult:
    """
    PSIS-LOO estimate for one model.

    Attributes:
        elpd_loo (float): Sum of pointwise_elpd.
        se_elpd (float): sqrt(N * variance of pointwise_elpd).
        pointwise_elpd (np.ndarray): Leave-one-out log predictive density per observation.
        pareto_k (np.ndarray): Tail-shape estimate per observation (NaN where no tail was fit).
        n_high_k (int): Observations with k > 0.7.
        lpd (float): In-sample log pointwise predictive density.
        p_loo (float): lpd - elpd_loo, the effective number of parameters.
        fingerprint (str | None): Dataset fingerprint.
    """
    elpd_loo: float
    se_elpd: float
    pointwise_elpd: np.ndarray
    pareto_k: np.ndarray
    n_high_k: int
    lpd: float
    p_loo: float
    fingerprint: str | None = None

    @property
    def n_obs(self) -> int:
        return self.pointwise_elpd.shape[0]

    def to_dict(self) -> dict:
        return {
            'elpd_loo': self.elpd_loo,
            'se_elpd': self.se_elpd,
            'p_loo': self.p_loo,
            'lpd': self.lpd,
            'n_obs': self.n_obs,
            'n_high_k': self.n_high_k,
            'fingerprint': self.fingerprint,
        }


@dataclass
class ComparisonRow:
    name: str
    elpd_loo: float
    elpd_diff: float
    se_diff: float


@dataclass
class LooComparison:
    """Comparison rows, best model first; the first row is (0.0, 0.0)."""
    rows: list[ComparisonRow] = field(default_factory=list)

    def to_dict(self) -> list[dict]:
        return [{'model': r.name, 'elpd_loo': r.elpd_loo, 'elpd_diff': r.elpd_diff, 'se_diff': r.se_diff}
                for r in self.rows]


def _standard_error(values: np.ndarray) -> float:
    n = values.shape[0]
    if n < 2:
        return 0.0
    return float(np.sqrt(n * np.var(values, ddof=1)))


def pointwise_loglik(draws: PosteriorDraws, model: ModelSpec) -> LogLikMatrix:
    """
    Log predictive density of every observation under every pooled draw.

    Args:
        draws (PosteriorDraws): Posterior draws of the model's parameters.
        model (ModelSpec): Model and observations.

    Returns:
        LogLikMatrix: S x N matrix.
    """
    if draws.n_params != model.n_params:
        raise DimensionMismatch(f"Draws have {draws.n_params} parameters, model has {model.n_params}")
    pooled = draws.pooled()
    eta = pooled[:, :1] + pooled[:, 1:] @ model.design.T
    return LogLikMatrix(pointwise_log_density(eta, model.target, model.link), model.fingerprint())


def _gpdfit(x: np.ndarray) -> tuple[float, float]:
    """Generalized Pareto shape and scale of sorted exceedances, empirical-Bayes estimate with a weak prior on k."""
    prior_bs, prior_k = 3, 10
    n = x.shape[0]
    m_est = 30 + int(np.sqrt(n))
    b_ary = 1.0 - np.sqrt(m_est / (np.arange(1, m_est + 1) - 0.5))
    b_ary /= prior_bs * x[int(n / 4 + 0.5) - 1]
    b_ary += 1.0 / x[-1]
    k_ary = np.mean(np.log1p(-b_ary[:, None] * x), axis=1)
    len_scale = n * (np.log(-b_ary / k_ary) - k_ary - 1.0)
    weights = 1.0 / np.sum(np.exp(len_scale - len_scale[:, None]), axis=1)
    keep = weights >= 10 * np.finfo(float).eps
    weights, b_ary = weights[keep], b_ary[keep]
    weights /= weights.sum()
    b_post = np.sum(b_ary * weights)
    k_post = np.mean(np.log1p(-b_post * x))
    sigma = -k_post / b_post
    k_post = (n * k_post + prior_k * 0.5) / (n + prior_k)
    return float(k_post), float(sigma)


def _gpinv(probs: np.ndarray, k: float, sigma: float) -> np.ndarray:
    if abs(k) < np.finfo(float).eps:
        return -sigma * np.log1p(-probs)
    return sigma * np.expm1(-k * np.log1p(-probs)) / k


def psis_smooth(raw_log_weights) -> tuple[np.ndarray, float]:
    """
    Pareto-smooths the upper tail of a vector of importance log-weights.

    The largest M = ceil(min(0.2 S, 3 sqrt(S))) weights are replaced by expected order statistics of a generalized
    Pareto distribution fit to their exceedances over the cutoff, then every weight is truncated at the largest raw
    weight. Inputs with S < 25, a tail of 4 or fewer draws or a constant tail pass through unchanged with k = NaN.

    Args:
        raw_log_weights (array-like): S log-weights (unnormalized).

    Returns:
        tuple[np.ndarray, float]: Smoothed log-weights on the input scale (unnormalized) and the tail shape k.
    """
    lw = np.asarray(raw_log_weights, dtype=float).reshape(-1)
    n = lw.shape[0]
    if n < MIN_TAIL_DRAWS:
        return lw.copy(), float('nan')

    top = np.max(lw)
    x = lw - top
    tail_len = int(np.ceil(min(0.2 * n, 3.0 * np.sqrt(n))))
    order = np.argsort(x, kind='stable')
    cutoff = max(x[order[-tail_len - 1]], np.log(np.finfo(float).tiny))
    in_tail = x > cutoff
    x_tail = x[in_tail]
    n_tail = x_tail.shape[0]
    if n_tail <= 4 or np.ptp(x_tail) == 0.0:
        return lw.copy(), float('nan')

    tail_order = np.argsort(x_tail, kind='stable')
    exp_cutoff = np.exp(cutoff)
    exceedances = np.exp(x_tail[tail_order]) - exp_cutoff
    k, sigma = _gpdfit(exceedances)
    if not (np.isfinite(k) and sigma > 0):
        return lw.copy(), float('nan')

    smoothed_tail = np.log(_gpinv(np.arange(0.5, n_tail) / n_tail, k, sigma) + exp_cutoff)
    smoothed = x.copy()
    tail_values = np.empty(n_tail)
    tail_values[tail_order] = smoothed_tail
    smoothed[in_tail] = tail_values
    smoothed = np.minimum(smoothed, 0.0)
    return smoothed + top, k


def _loo_columns(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pointwise elpd, Pareto k and in-sample lpd for each column of an S x N log-likelihood block."""
    n_draws, n_obs = values.shape
    elpd = np.empty(n_obs)
    k = np.empty(n_obs)
    for i in range(n_obs):
        smoothed, k[i] = psis_smooth(-values[:, i])
        log_w = smoothed - special.logsumexp(smoothed)
        elpd[i] = special.logsumexp(log_w + values[:, i])
    lpd = special.logsumexp(values, axis=0) - np.log(n_draws)
    return elpd, k, lpd


def _loo_result(elpd: np.ndarray, k: np.ndarray, lpd: np.ndarray, fingerprint: str | None) -> LooResult:
    elpd_loo = float(np.sum(elpd))
    n_high = int(np.sum(k > HIGH_K))
    if n_high:
        logger.warning(f"{n_high} observation(s) with Pareto k > {HIGH_K}; LOO estimate may be unreliable there")
    total_lpd = float(np.sum(lpd))
    return LooResult(elpd_loo, _standard_error(elpd), elpd, k, n_high, total_lpd, total_lpd - elpd_loo, fingerprint)


def psis_loo(loglik: LogLikMatrix) -> LooResult:
    """
    PSIS-LOO from a full log-likelihood matrix.

    Args:
        loglik (LogLikMatrix): S x N log predictive densities.

    Returns:
        LooResult: Aggregate and pointwise estimates.
    """
    values = np.asarray(loglik.values, dtype=float)
    elpd, k, lpd = _loo_columns(values)
    return _loo_result(elpd, k, lpd, loglik.fingerprint)


def psis_loo_model(draws: PosteriorDraws, model: ModelSpec, chunk: int = 1000) -> LooResult:
    """
    PSIS-LOO computed over blocks of observations so the full S x N matrix never exists at once.

    Args:
        draws (PosteriorDraws): Posterior draws.
        model (ModelSpec): Model and observations.
        chunk (int): Observations per block.

    Returns:
        LooResult: Identical to psis_loo(pointwise_loglik(draws, model)).
    """
    if chunk < 1:
        raise UsageError(f"Chunk size must be positive, got {chunk}")
    if draws.n_params != model.n_params:
        raise DimensionMismatch(f"Draws have {draws.n_params} parameters, model has {model.n_params}")
    pooled = draws.pooled()
    parts = []
    for start in range(0, model.n_rows, chunk):
        rows = slice(start, min(start + chunk, model.n_rows))
        eta = pooled[:, :1] + pooled[:, 1:] @ model.design[rows].T
        parts.append(_loo_columns(pointwise_log_density(eta, model.target[rows], model.link)))
    if parts:
        elpd, k, lpd = (np.concatenate(p) for p in zip(*parts))
    else:
        elpd, k, lpd = np.zeros(0), np.zeros(0), np.zeros(0)
    return _loo_result(elpd, k, lpd, model.fingerprint())


def compare(results: dict[str, LooResult]) -> LooComparison:
    """
    Ranks models by elpd_loo.

    Args:
        results (dict[str, LooResult]): Model name -> LOO result, all on the same observations.

    Returns:
        LooComparison: Best model first with (0.0, 0.0); others with elpd_diff = sum of pointwise differences
            and se_diff = sqrt(N * variance of pointwise differences).

    Raises:
        DatasetMismatch: Observation counts or fingerprints differ.
    """
    if not results:
        raise UsageError("Nothing to compare")
    items = list(results.items())
    n_obs = {r.n_obs for _, r in items}
    prints = {r.fingerprint for _, r in items if r.fingerprint is not None}
    if len(n_obs) > 1 or len(prints) > 1:
        raise DatasetMismatch("LOO results were computed on different observation sets")

    ranked = sorted(items, key=lambda item: (-item[1].elpd_loo, item[0]))
    best_name, best = ranked[0]
    rows = [ComparisonRow(best_name, best.elpd_loo, 0.0, 0.0)]
    for name, result in ranked[1:]:
        diff = result.pointwise_elpd - best.pointwise_elpd
        rows.append(ComparisonRow(name, result.elpd_loo, float(np.sum(diff)), _standard_error(diff)))
    return LooComparison(rows)


def exact_loo_pointwise(model: ModelSpec, config: SamplerConfig, n_workers: int = 1) -> np.ndarray:
    """
    Brute-force leave-one-out: refits the model without each row and scores the row.

    Args:
        model (ModelSpec): Model with at most 500 observations.
        config (SamplerConfig): Sampler configuration for every refit.
        n_workers (int): Threads per refit.

    Returns:
        np.ndarray: log mean predictive density of each left-out row.
    """
    if model.n_rows > EXACT_LOO_MAX_ROWS:
        raise TooLarge(f"Exact LOO is limited to {EXACT_LOO_MAX_ROWS} rows, model has {model.n_rows}")
    pointwise = np.empty(model.n_rows)
    for i in range(model.n_rows):
        refit = sample(model.without_row(i), config, n_workers)
        pooled = refit.pooled()
        eta = pooled[:, 0] + pooled[:, 1:] @ model.design[i]
        loglik = pointwise_log_density(eta, model.target[i], model.link)
        pointwise[i] = special.logsumexp(loglik) - np.log(loglik.shape[0])
        logger.debug(f"Exact LOO row {i}: {pointwise[i]:.4f}")
    return pointwise


def exact_loo(model: ModelSpec, config: SamplerConfig, n_workers: int = 1) -> float:
    """Sum of exact leave-one-out log predictive densities; deterministic for a fixed config."""
    return float(np.sum(exact_loo_pointwise(model, config, n_workers)))
