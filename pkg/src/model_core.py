"""
Logit and probit likelihoods, normal priors and the unnormalized log-posterior with its exact gradient.

The intercept is always a separate parameter (never a design column) because it carries its own prior.
Parameter vectors are laid out as [intercept, slope_1, ..., slope_k].
"""
import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveFloat
from scipy import special

from errors import DimensionMismatch, DataError

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
# Probabilities are kept inside the open unit interval; only the floating-point boundary is clamped.
_PROB_FLOOR = np.finfo(float).tiny
_PROB_CEIL = 1.0 - np.finfo(float).epsneg


class LinkKind(str, Enum):
    LOGIT = 'logit'
    PROBIT = 'probit'


@dataclass
class Coefficients:
    """
    One value of the regression parameters.

    Attributes:
        intercept (float): beta_0.
        slopes (np.ndarray): beta_1..beta_k, in design-column order.
    """
    intercept: float
    slopes: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        self.intercept = float(self.intercept)
        self.slopes = np.asarray(self.slopes, dtype=float).reshape(-1)
        if not (np.isfinite(self.intercept) and np.all(np.isfinite(self.slopes))):
            raise DataError("Coefficients must be finite")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.slopes])

    @classmethod
    def from_vector(cls, theta) -> 'Coefficients':
        theta = np.asarray(theta, dtype=float).reshape(-1)
        return cls(theta[0], theta[1:])


class PriorSpec(BaseModel):
    """Independent normal priors: one for the intercept, one shared by every slope."""
    model_config = ConfigDict(frozen=True)

    intercept_mean: float
    intercept_sd: PositiveFloat
    slope_mean: float
    slope_sd: PositiveFloat

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.intercept_mean, self.intercept_sd, self.slope_mean, self.slope_sd)


def default_priors(link: LinkKind | str) -> PriorSpec:
    """
    Default prior hyperparameters for each link.

    Args:
        link (LinkKind | str): Link of the model.

    Returns:
        PriorSpec: logit -> intercept N(3.5, 1), slopes N(0, 0.5); probit -> intercept N(0, 5), slopes N(0, 2).
    """
    if LinkKind(link) is LinkKind.LOGIT:
        return PriorSpec(intercept_mean=3.5, intercept_sd=1.0, slope_mean=0.0, slope_sd=0.5)
    return PriorSpec(intercept_mean=0.0, intercept_sd=5.0, slope_mean=0.0, slope_sd=2.0)


def _clamp(p):
    return np.clip(p, _PROB_FLOOR, _PROB_CEIL)


def logit_link(eta):
    """
    Logistic sigmoid exp(eta) / (1 + exp(eta)) in the branch-stable form.

    Args:
        eta (float | np.ndarray): Linear predictor.

    Returns:
        float | np.ndarray: Probabilities in (0, 1).
    """
    eta = np.asarray(eta, dtype=float)
    e = np.exp(-np.abs(eta))
    p = _clamp(np.where(eta >= 0, 1.0 / (1.0 + e), e / (1.0 + e)))
    return float(p) if p.ndim == 0 else p


def probit_link(eta):
    """Standard normal CDF of eta, in (0, 1)."""
    p = _clamp(special.ndtr(np.asarray(eta, dtype=float)))
    return float(p) if p.ndim == 0 else p


def inverse_link(eta, link: LinkKind | str):
    return logit_link(eta) if LinkKind(link) is LinkKind.LOGIT else probit_link(eta)


def log_link_pair(eta: np.ndarray, link: LinkKind | str) -> tuple[np.ndarray, np.ndarray]:
    """
    log(pi) and log(1 - pi) without forming pi, finite for every finite eta.

    Args:
        eta (np.ndarray): Linear predictor.
        link (LinkKind | str): Link function.

    Returns:
        tuple[np.ndarray, np.ndarray]: (log pi, log(1 - pi)).
    """
    eta = np.asarray(eta, dtype=float)
    if LinkKind(link) is LinkKind.LOGIT:
        return -np.logaddexp(0.0, -eta), -np.logaddexp(0.0, eta)
    return special.log_ndtr(eta), special.log_ndtr(-eta)


def pointwise_log_density(eta: np.ndarray, y: np.ndarray, link: LinkKind | str) -> np.ndarray:
    """Bernoulli log-probability of each y given eta (broadcasting over leading axes)."""
    log_p, log_q = log_link_pair(eta, link)
    return np.where(y > 0.5, log_p, log_q)


def _d_log_density(eta: np.ndarray, y: np.ndarray, link: LinkKind) -> np.ndarray:
    """Derivative of the pointwise Bernoulli log-density with respect to eta."""
    if link is LinkKind.LOGIT:
        return y - logit_link(eta)
    # Inverse Mills ratio phi(s)/Phi(s) with s = +eta (y = 1) or -eta (y = 0), on the log scale.
    sign = np.where(y > 0.5, 1.0, -1.0)
    s = sign * eta
    mills = np.exp(-0.5 * s * s - 0.5 * LOG_2PI - special.log_ndtr(s))
    return sign * mills


@dataclass
class ModelSpec:
    """
    A binary-response regression model bound to its data.

    Attributes:
        link (LinkKind): Link function.
        prior (PriorSpec): Normal priors.
        design (np.ndarray): n x k predictor matrix (read-only use).
        target (np.ndarray): n-vector of 0/1 outcomes.
        column_names (list[str]): k predictor names.
    """
    link: LinkKind
    prior: PriorSpec
    design: np.ndarray
    target: np.ndarray
    column_names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.link = LinkKind(self.link)
        self.design = np.asarray(self.design, dtype=float)
        self.target = np.asarray(self.target, dtype=float).reshape(-1)
        if self.design.ndim != 2:
            raise DimensionMismatch(f"Design must be a matrix, got {self.design.ndim} dimension(s)")
        if self.design.shape[0] != self.target.shape[0]:
            raise DimensionMismatch(
                f"Target length {self.target.shape[0]} does not match design rows {self.design.shape[0]}")
        if not self.column_names:
            self.column_names = [f"x{j + 1}" for j in range(self.design.shape[1])]
        if len(self.column_names) != self.design.shape[1]:
            raise DimensionMismatch("column_names length does not match design columns")

    @property
    def n_rows(self) -> int:
        return self.design.shape[0]

    @property
    def n_params(self) -> int:
        return self.design.shape[1] + 1

    @property
    def param_names(self) -> list[str]:
        return ['Intercept'] + list(self.column_names)

    def linear_predictor(self, theta: np.ndarray) -> np.ndarray:
        return theta[0] + self.design @ theta[1:]

    def log_density(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        """Sampler-facing alias of log_posterior_and_gradient on a flat parameter vector."""
        return log_posterior_and_gradient(theta, self)

    def without_row(self, index: int) -> 'ModelSpec':
        keep = np.arange(self.n_rows) != index
        return ModelSpec(self.link, self.prior, self.design[keep], self.target[keep], list(self.column_names))

    def fingerprint(self) -> str:
        """
        Order-independent hash of the observation set: row count, dimensions and the sorted (row, target) records.

        Returns:
            str: Hex digest shared by every model fit on the same observations, whatever the link or prior.
        """
        records = np.column_stack([self.design, self.target]) if self.n_rows else np.zeros((0, self.n_params))
        if self.n_rows:
            records = records[np.lexsort(records.T[::-1])]
        digest = hashlib.sha256()
        digest.update(f"{self.n_rows}x{self.design.shape[1]}".encode('ascii'))
        digest.update(np.ascontiguousarray(records, dtype='<f8').tobytes())
        return digest.hexdigest()


def _as_vector(beta, n_params: int) -> np.ndarray:
    theta = beta.to_vector() if isinstance(beta, Coefficients) else np.asarray(beta, dtype=float).reshape(-1)
    if theta.shape[0] != n_params:
        raise DimensionMismatch(f"Expected {n_params} parameters, got {theta.shape[0]}")
    return theta


def log_likelihood(beta, model: ModelSpec) -> float:
    """
    Bernoulli log-likelihood sum_i [y_i log pi_i + (1 - y_i) log(1 - pi_i)].

    Args:
        beta (Coefficients | np.ndarray): Parameters.
        model (ModelSpec): Model and data.

    Returns:
        float: Log-likelihood; finite for every finite beta.
    """
    theta = _as_vector(beta, model.n_params)
    eta = model.linear_predictor(theta)
    return float(np.sum(pointwise_log_density(eta, model.target, model.link)))


def log_prior(beta, prior: PriorSpec) -> float:
    """
    Sum of independent normal log-densities, normalization constants included.

    Args:
        beta (Coefficients | np.ndarray): Parameters, intercept first.
        prior (PriorSpec): Hyperparameters.

    Returns:
        float: Log prior density.
    """
    theta = beta.to_vector() if isinstance(beta, Coefficients) else np.asarray(beta, dtype=float).reshape(-1)
    z0 = (theta[0] - prior.intercept_mean) / prior.intercept_sd
    z = (theta[1:] - prior.slope_mean) / prior.slope_sd
    value = -0.5 * z0 * z0 - np.log(prior.intercept_sd) - 0.5 * LOG_2PI
    value += np.sum(-0.5 * z * z) - z.size * (np.log(prior.slope_sd) + 0.5 * LOG_2PI)
    return float(value)


def log_posterior_and_gradient(beta, model: ModelSpec) -> tuple[float, np.ndarray]:
    """
    Unnormalized log-posterior and its exact gradient.

    Args:
        beta (Coefficients | np.ndarray): Parameters.
        model (ModelSpec): Model and data.

    Returns:
        tuple[float, np.ndarray]: (log_likelihood + log_prior, gradient of length k + 1).
    """
    theta = _as_vector(beta, model.n_params)
    eta = model.linear_predictor(theta)
    loglik = float(np.sum(pointwise_log_density(eta, model.target, model.link)))
    value = loglik + log_prior(theta, model.prior)

    d_eta = _d_log_density(eta, model.target, model.link)
    grad = np.empty_like(theta)
    grad[0] = np.sum(d_eta) - (theta[0] - model.prior.intercept_mean) / model.prior.intercept_sd ** 2
    grad[1:] = model.design.T @ d_eta - (theta[1:] - model.prior.slope_mean) / model.prior.slope_sd ** 2
    return value, grad
