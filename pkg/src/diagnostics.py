"""
Posterior summaries and convergence diagnostics: mean, sd, central 95% interval, split rank-normalized Rhat,
bulk ESS and tail ESS.
"""
import logging
from dataclasses import dataclass, asdict

import numpy as np
from scipy import fft, stats

from errors import EmptyInput, TooFewDraws, DegenerateDiagnostic, UsageError
from sampler import PosteriorDraws

logger = logging.getLogger(__name__)

MIN_DRAWS = 4
RHAT_WARN = 1.01
ESS_CAP_FACTOR = 2.0
TAIL_PROBS = (0.05, 0.95)


@dataclass
class ParamSummary:
    """
    One row of the coefficient table.

    Attributes:
        name (str): Parameter label.
        estimate (float): Posterior mean.
        est_error (float): Posterior sd (denominator n - 1).
        ci_lower (float): 2.5% quantile.
        ci_upper (float): 97.5% quantile.
        rhat (float): Split rank-normalized Rhat, NaN when degenerate.
        ess_bulk (float): Bulk ESS, NaN when degenerate.
        ess_tail (float): Tail ESS, NaN when degenerate.
    """
    name: str
    estimate: float
    est_error: float
    ci_lower: float
    ci_upper: float
    rhat: float
    ess_bulk: float
    ess_tail: float

    def to_dict(self) -> dict:
        """Full-precision record; NaN becomes None (JSON null)."""
        return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in asdict(self).items()}


def quantile(samples, p: float) -> float:
    """
    Empirical quantile with linear interpolation at index (n - 1) * p.

    Args:
        samples (array-like): Non-empty sample.
        p (float): Probability in [0, 1].

    Returns:
        float: The quantile.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size == 0:
        raise EmptyInput("Cannot take a quantile of an empty sample")
    if not 0.0 <= p <= 1.0:
        raise UsageError(f"Quantile probability must be in [0, 1], got {p}")
    return float(np.quantile(samples, p))


def _as_chains(draws) -> np.ndarray:
    """Coerces per-chain draws of one parameter to a chains x draws array and checks its length."""
    ary = np.asarray(draws, dtype=float)
    if ary.ndim == 1:
        ary = ary[np.newaxis, :]
    if ary.ndim != 2 or ary.shape[0] < 1:
        raise UsageError("Expected a chains x draws array")
    if ary.shape[1] < MIN_DRAWS:
        raise TooFewDraws(f"Need at least {MIN_DRAWS} draws per chain, got {ary.shape[1]}")
    if np.ptp(ary) == 0.0:
        raise DegenerateDiagnostic("All draws are identical")
    return ary


def _split_chains(ary: np.ndarray) -> np.ndarray:
    half = ary.shape[1] // 2
    return np.vstack((ary[:, :half], ary[:, -half:]))


def _z_scale(ary: np.ndarray) -> np.ndarray:
    """Average ranks mapped through the normal quantile function with the (r - 3/8) / (S + 1/4) offset."""
    ranks = stats.rankdata(ary, method='average').reshape(ary.shape)
    return stats.norm.ppf((ranks - 3.0 / 8.0) / (ary.size + 0.25))


def _rhat(ary: np.ndarray) -> float:
    n = ary.shape[1]
    between = n * np.var(ary.mean(axis=1), ddof=1)
    within = np.mean(np.var(ary, axis=1, ddof=1))
    if within == 0.0:
        return float('inf')
    return float(np.sqrt(((n - 1) / n * within + between / n) / within))


def autocovariance(x, method: str = 'direct') -> np.ndarray:
    """
    Biased sample autocovariance at lags 0..n-1 (divisor n).

    Args:
        x (array-like): One chain.
        method (str): 'direct' sums lagged products; 'fft' uses a zero-padded transform. Both agree to rounding.

    Returns:
        np.ndarray: Autocovariances, length n.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    centered = x - x.mean()
    if method == 'direct':
        return np.correlate(centered, centered, mode='full')[n - 1:] / n
    if method == 'fft':
        size = fft.next_fast_len(2 * n)
        spectrum = fft.rfft(centered, n=size)
        return fft.irfft(spectrum * np.conjugate(spectrum), n=size)[:n] / n
    raise UsageError(f"Unknown autocovariance method '{method}'")


def _ess(ary: np.ndarray, method: str = 'direct') -> float:
    """Multi-chain ESS with Geyer's initial positive and initial monotone sequence truncation."""
    n_chain, n_draw = ary.shape
    if np.ptp(ary) < np.finfo(float).resolution:
        return float(ary.size)
    acov = np.stack([autocovariance(chain, method) for chain in ary])
    mean_var = np.mean(acov[:, 0]) * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += np.var(ary.mean(axis=1), ddof=1)

    rho = np.zeros(n_draw)
    rho_even, rho_odd = 1.0, 1.0 - (mean_var - np.mean(acov[:, 1])) / var_plus
    rho[0], rho[1] = rho_even, rho_odd

    t = 1
    while t < n_draw - 3 and rho_even + rho_odd > 0.0:
        rho_even = 1.0 - (mean_var - np.mean(acov[:, t + 1])) / var_plus
        rho_odd = 1.0 - (mean_var - np.mean(acov[:, t + 2])) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1], rho[t + 2] = rho_even, rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0:
        rho[max_t + 1] = rho_even

    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = rho[t + 2] = (rho[t - 1] + rho[t]) / 2.0
        t += 2

    total = n_chain * n_draw
    tau = -1.0 + 2.0 * np.sum(rho[:max_t + 1]) + np.sum(rho[max_t + 1:max_t + 2])
    tau = max(tau, 1.0 / np.log10(total))
    if np.isnan(rho).any():
        return float('nan')
    return float(min(total / tau, ESS_CAP_FACTOR * total))


def split_rhat(draws) -> float:
    """
    Rank-normalized split Rhat of one parameter.

    Args:
        draws (array-like): chains x draws (or one chain as a vector).

    Returns:
        float: Rhat; about 1 for well-mixed chains.

    Raises:
        TooFewDraws: Fewer than 4 draws per chain.
        DegenerateDiagnostic: All draws identical.
    """
    ary = _as_chains(draws)
    return _rhat(_z_scale(_split_chains(ary)))


def ess_bulk(draws, method: str = 'direct') -> float:
    """Bulk ESS: ESS of the rank-normalized split chains, capped at twice the draw count."""
    ary = _as_chains(draws)
    return _ess(_z_scale(_split_chains(ary)), method)


def ess_tail(draws, method: str = 'direct') -> float:
    """Tail ESS: the smaller ESS of the 5% and 95% quantile indicator draws."""
    ary = _as_chains(draws)
    values = []
    for p in TAIL_PROBS:
        indicator = (ary <= quantile(ary, p)).astype(float)
        values.append(_ess(_split_chains(indicator), method))
    return float(min(values))


def _guarded(estimator, ary: np.ndarray) -> float:
    try:
        return estimator(ary)
    except (DegenerateDiagnostic, TooFewDraws) as e:
        logger.debug(f"Diagnostic reported as NA: {e}")
        return float('nan')


def summarize(draws: PosteriorDraws) -> list[ParamSummary]:
    """
    One summary row per parameter, in param_names order.

    Args:
        draws (PosteriorDraws): Posterior draws.

    Returns:
        list[ParamSummary]: Pooled mean, sd, 95% interval and diagnostics; degenerate diagnostics are NaN.
    """
    pooled = draws.pooled()
    rows = []
    for j, name in enumerate(draws.param_names):
        values = pooled[:, j]
        per_chain = draws.parameter(j)
        rows.append(ParamSummary(
            name=name,
            estimate=float(values.mean()),
            est_error=float(values.std(ddof=1)) if values.size > 1 else float('nan'),
            ci_lower=quantile(values, 0.025),
            ci_upper=quantile(values, 0.975),
            rhat=_guarded(split_rhat, per_chain),
            ess_bulk=_guarded(ess_bulk, per_chain),
            ess_tail=_guarded(ess_tail, per_chain),
        ))
    return rows


def convergence_warnings(summaries: list[ParamSummary], draws: PosteriorDraws | None = None) -> list[str]:
    """
    Human-readable warnings for the fit banner.

    Args:
        summaries (list[ParamSummary]): Output of summarize.
        draws (PosteriorDraws | None): Draws, for the divergence check.

    Returns:
        list[str]: Empty when the run looks healthy.
    """
    warnings = []
    high = [s.name for s in summaries if np.isfinite(s.rhat) and s.rhat > RHAT_WARN]
    if high:
        warnings.append(f"Rhat > {RHAT_WARN} for: {', '.join(high)}")
    missing = [s.name for s in summaries if not (np.isfinite(s.rhat) and np.isfinite(s.ess_bulk)
                                                 and np.isfinite(s.ess_tail))]
    if missing:
        warnings.append(f"Diagnostics not available (NA) for: {', '.join(missing)}")
    if draws is not None and draws.too_many_divergences:
        total = int(draws.divergence_count.sum())
        warnings.append(f"{total} divergent transitions ({100 * draws.divergence_fraction:.1f}% of draws)")
    for warning in warnings:
        logger.warning(warning)
    return warnings
