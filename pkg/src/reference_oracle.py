"""
Brute-force reference computations used to check the sampler, the gradients and PSIS-LOO.

Nothing here calls into model_core: the likelihood, prior and link functions are re-derived with plain loops
so an error in the production code cannot hide in its own oracle.
"""
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import special

from errors import DimensionTooHigh, DimensionMismatch, NonFiniteEvaluation, GridTooCoarse, UsageError

logger = logging.getLogger(__name__)

MAX_GRID_DIMENSION = 3
MAX_GRID_POINTS = 10_000_000
WIDEN_FACTOR = 1.5
MOMENT_TOLERANCE = 1e-3
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class GridAxis(BaseModel):
    model_config = ConfigDict(frozen=True)

    lower: float
    upper: float
    n_points: int = Field(ge=3)

    @model_validator(mode='after')
    def _ordered(self) -> 'GridAxis':
        if not self.upper > self.lower:
            raise ValueError(f"Axis upper bound {self.upper} must exceed lower bound {self.lower}")
        return self

    def points(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.n_points)

    def widened(self, factor: float) -> 'GridAxis':
        """Same spacing, bounds pushed out so the half-width grows by ``factor``."""
        center = 0.5 * (self.lower + self.upper)
        half = 0.5 * (self.upper - self.lower) * factor
        n_points = int(round((self.n_points - 1) * factor)) + 1
        return GridAxis(lower=center - half, upper=center + half, n_points=n_points)


class GridSpec(BaseModel):
    """
    Tensor grid for quadrature over the parameters, intercept axis first.

    Attributes:
        axes (list[GridAxis]): One (lower, upper, n_points) axis per parameter.
        max_points (int): Cap on the total number of grid points.
    """
    model_config = ConfigDict(frozen=True)

    axes: list[GridAxis]
    max_points: int = Field(MAX_GRID_POINTS, ge=1, le=MAX_GRID_POINTS)

    @model_validator(mode='after')
    def _capped(self) -> 'GridSpec':
        if self.total_points > self.max_points:
            raise ValueError(f"Grid has {self.total_points} points, cap is {self.max_points}")
        return self

    @property
    def total_points(self) -> int:
        return int(np.prod([a.n_points for a in self.axes]))

    @classmethod
    def uniform(cls, bounds: list[tuple[float, float]], n_points: int) -> 'GridSpec':
        return cls(axes=[GridAxis(lower=lo, upper=hi, n_points=n_points) for lo, hi in bounds])


def _log_sigmoid(eta):
    """log(1 / (1 + exp(-eta))), elementwise."""
    return np.where(eta >= 0, -np.log1p(np.exp(-np.abs(eta))), eta - np.log1p(np.exp(-np.abs(eta))))


def _log_phi_cdf(eta):
    """log of the standard normal CDF via erfc."""
    with np.errstate(divide='ignore'):
        return np.log(0.5 * special.erfc(-np.asarray(eta) / math.sqrt(2.0)))


def _naive_log_phi_cdf(eta: float) -> float:
    if eta > -30.0:
        return math.log(0.5 * math.erfc(-eta / math.sqrt(2.0)))
    # Asymptotic series for the far lower tail.
    inv2 = 1.0 / (eta * eta)
    return -0.5 * eta * eta - math.log(-eta) - HALF_LOG_2PI + math.log(1.0 - inv2 + 3.0 * inv2 * inv2)


def _link_name(link) -> str:
    return str(getattr(link, 'value', link))


def _prior_tuple(prior) -> tuple[float, float, float, float]:
    if hasattr(prior, 'as_tuple'):
        return prior.as_tuple()
    return tuple(float(v) for v in prior)


def naive_log_likelihood(beta, design, target, link: str) -> float:
    """
    Bernoulli log-likelihood by explicit loops over rows and columns.

    Args:
        beta (array-like): Intercept followed by slopes.
        design (array-like): n x k predictors.
        target (array-like): n outcomes in {0, 1}.
        link (str): 'logit' or 'probit'.

    Returns:
        float: Log-likelihood.
    """
    beta = [float(b) for b in np.asarray(beta).reshape(-1)]
    design = np.asarray(design, dtype=float)
    total = 0.0
    for i in range(design.shape[0]):
        eta = beta[0]
        for j in range(design.shape[1]):
            eta += beta[j + 1] * float(design[i, j])
        if _link_name(link) == 'logit':
            log_p = -math.log1p(math.exp(-eta)) if eta >= 0 else eta - math.log1p(math.exp(eta))
            log_q = -math.log1p(math.exp(eta)) if eta <= 0 else -eta - math.log1p(math.exp(-eta))
        else:
            log_p, log_q = _naive_log_phi_cdf(eta), _naive_log_phi_cdf(-eta)
        total += log_p if float(target[i]) > 0.5 else log_q
    return total


def naive_log_prior(beta, prior) -> float:
    """Sum of normal log-densities written out term by term."""
    m0, s0, m, s = _prior_tuple(prior)
    beta = [float(b) for b in np.asarray(beta).reshape(-1)]
    total = -0.5 * ((beta[0] - m0) / s0) ** 2 - math.log(s0) - HALF_LOG_2PI
    for b in beta[1:]:
        total += -0.5 * ((b - m) / s) ** 2 - math.log(s) - HALF_LOG_2PI
    return total


def finite_diff_gradient(f, beta, h: float = 1e-5) -> np.ndarray:
    """
    Central-difference gradient (f(b + h e_j) - f(b - h e_j)) / 2h.

    Args:
        f (callable): Scalar function of a parameter vector.
        beta (array-like): Point of evaluation.
        h (float): Step.

    Returns:
        np.ndarray: Gradient estimate.

    Raises:
        NonFiniteEvaluation: f is not finite at some evaluation point.
    """
    if h <= 0:
        raise UsageError(f"Step must be positive, got {h}")
    beta = np.asarray(beta, dtype=float).reshape(-1)
    grad = np.empty_like(beta)
    for j in range(beta.shape[0]):
        step = np.zeros_like(beta)
        step[j] = h
        upper, lower = float(f(beta + step)), float(f(beta - step))
        if not (math.isfinite(upper) and math.isfinite(lower)):
            raise NonFiniteEvaluation(f"Function is not finite around coordinate {j}")
        grad[j] = (upper - lower) / (2.0 * h)
    return grad


def _grid_log_posterior(points: np.ndarray, design: np.ndarray, target: np.ndarray, link: str,
                        prior: tuple[float, float, float, float]) -> np.ndarray:
    m0, s0, m, s = prior
    log_post = -0.5 * ((points[:, 0] - m0) / s0) ** 2 - math.log(s0) - HALF_LOG_2PI
    for j in range(1, points.shape[1]):
        log_post += -0.5 * ((points[:, j] - m) / s) ** 2 - math.log(s) - HALF_LOG_2PI
    log_cdf = _log_sigmoid if _link_name(link) == 'logit' else _log_phi_cdf
    for i in range(design.shape[0]):
        eta = points[:, 0].copy()
        for j in range(design.shape[1]):
            eta += points[:, j + 1] * design[i, j]
        log_post += log_cdf(eta) if target[i] > 0.5 else log_cdf(-eta)
    return log_post


def _moments(model, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    mesh = np.meshgrid(*[axis.points() for axis in grid.axes], indexing='ij')
    points = np.column_stack([m.reshape(-1) for m in mesh])
    log_post = _grid_log_posterior(points, np.asarray(model.design, dtype=float),
                                   np.asarray(model.target, dtype=float), _link_name(model.link),
                                   _prior_tuple(model.prior))
    top = np.max(log_post)
    if not np.isfinite(top):
        raise NonFiniteEvaluation("Log-posterior is not finite anywhere on the grid")
    weights = np.exp(log_post - top)
    weights /= weights.sum()
    mean = weights @ points
    sd = np.sqrt(weights @ (points - mean) ** 2)
    return mean, sd


def grid_posterior_moments(model, grid: GridSpec, self_check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """
    Posterior mean and sd by Riemann summation over a tensor grid.

    Args:
        model (ModelSpec): Model with at most 3 parameters.
        grid (GridSpec): One axis per parameter.
        self_check (bool): Recompute on a grid widened by 50% at the same spacing and require the moments to
            move by less than 1e-3.

    Returns:
        tuple[np.ndarray, np.ndarray]: (mean vector, sd vector).

    Raises:
        DimensionTooHigh: More than 3 parameters.
        GridTooCoarse: The widened grid moves the moments by 1e-3 or more.
    """
    n_params = model.design.shape[1] + 1
    if n_params > MAX_GRID_DIMENSION:
        raise DimensionTooHigh(f"Grid quadrature supports at most {MAX_GRID_DIMENSION} parameters, got {n_params}")
    if len(grid.axes) != n_params:
        raise DimensionMismatch(f"Grid has {len(grid.axes)} axes for {n_params} parameters")

    mean, sd = _moments(model, grid)
    if self_check:
        wide_axes = [axis.widened(WIDEN_FACTOR) for axis in grid.axes]
        wide = GridSpec(axes=wide_axes, max_points=MAX_GRID_POINTS)
        wide_mean, wide_sd = _moments(model, wide)
        drift = max(np.max(np.abs(wide_mean - mean)), np.max(np.abs(wide_sd - sd)))
        if drift >= MOMENT_TOLERANCE:
            raise GridTooCoarse(f"Moments moved by {drift:.2e} when the grid was widened")
        logger.debug(f"Grid self-check drift {drift:.2e}")
    return mean, sd


def default_grid(model, n_points: int = 201, half_width: float = 6.0) -> GridSpec:
    """
    Grid centred on a rough posterior mode, covering +/- half_width prior-or-data scale units per axis.

    Args:
        model (ModelSpec): Low-dimensional model.
        n_points (int): Points per axis.
        half_width (float): Half-width in units of each axis' scale estimate.

    Returns:
        GridSpec: The grid.
    """
    m0, s0, m, s = _prior_tuple(model.prior)
    n_params = model.design.shape[1] + 1
    # Coarse search for the mode on a prior-scaled grid.
    coarse = GridSpec.uniform([(m0 - 5 * s0, m0 + 5 * s0)] + [(m - 5 * s, m + 5 * s)] * (n_params - 1), 41)
    mean, sd = _moments(model, coarse)
    sd = np.maximum(sd, 1e-3)
    return GridSpec.uniform([(mu - half_width * sigma, mu + half_width * sigma) for mu, sigma in zip(mean, sd)],
                            n_points)
