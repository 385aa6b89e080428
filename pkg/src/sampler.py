"""
No-U-Turn Hamiltonian Monte Carlo over a differentiable log-density.

Each chain runs the multinomial variant of NUTS with a diagonal metric. Warmup adapts the step size by dual
averaging toward ``target_accept`` and re-estimates the metric at the end of doubling windows (75 initial
step-size-only iterations, windows starting at 25, 50 terminal iterations; shrunk proportionally for short
warmups). Chains are independent and may run on a thread pool; results are assembled in chain order and do not
depend on the number of threads.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from errors import NonFiniteGradient, AdaptationFailure, DataError
from model_core import Coefficients
from seeding import make_rng, chain_rng, CHAIN_INIT_STREAM

logger = logging.getLogger(__name__)

MIN_STEP_SIZE = 1e-12
INIT_ATTEMPTS = 100
DIVERGENCE_WARN_FRACTION = 0.01


class LogDensity(Protocol):
    """Anything the sampler can draw from: a ModelSpec or a test target."""
    n_params: int
    param_names: list[str]

    def log_density(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        ...


class SamplerConfig(BaseModel):
    """Tuning of a sampling run; every field has a default."""
    model_config = ConfigDict(frozen=True)

    n_chains: int = Field(4, ge=1)
    n_warmup: int = Field(1000, ge=0)
    n_draws: int = Field(1000, ge=1)
    seed: int = 1
    target_accept: float = Field(0.8, gt=0.0, lt=1.0)
    max_tree_depth: int = Field(10, ge=1, le=15)
    init_radius: float = Field(2.0, ge=0.0)
    max_energy_error: float = Field(1000.0, gt=0.0)


@dataclass
class PosteriorDraws:
    """
    Post-warmup draws of every chain with the sampler's per-chain bookkeeping.

    Attributes:
        draws (np.ndarray): n_chains x n_draws x n_params array.
        param_names (list[str]): 'Intercept' first, then design columns in order.
        divergence_count (np.ndarray): Divergent post-warmup transitions per chain.
        divergent_iterations (list[list[int]]): Post-warmup iteration indices of those transitions.
        step_size (np.ndarray): Adapted step size per chain.
        accept_rate (np.ndarray): Mean acceptance statistic per chain.
        seed (int): Master seed.
        config (SamplerConfig | None): Sampler configuration of the run.
        inv_metric (np.ndarray | None): Adapted diagonal inverse metric per chain.
        link (str | None): Link of the model the draws belong to.
        prior (dict | None): Prior hyperparameters of that model.
        fingerprint (str | None): Dataset fingerprint of the training observations.
        encoding (dict | None): Encoding metadata of the training design.
        run_config (dict | None): Run configuration that produced the draws.
        model_name (str | None): Label used in comparison tables, e.g. 'logit_model'.
    """
    draws: np.ndarray
    param_names: list[str]
    divergence_count: np.ndarray
    divergent_iterations: list[list[int]]
    step_size: np.ndarray
    accept_rate: np.ndarray
    seed: int
    config: SamplerConfig | None = None
    inv_metric: np.ndarray | None = None
    link: str | None = None
    prior: dict | None = None
    fingerprint: str | None = None
    encoding: dict | None = None
    run_config: dict | None = None
    model_name: str | None = None

    def __post_init__(self) -> None:
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 3:
            raise DataError(f"Draws must be chains x draws x params, got shape {self.draws.shape}")
        if self.draws.shape[2] != len(self.param_names):
            raise DataError("param_names does not match the parameter axis of the draws")
        if not np.all(np.isfinite(self.draws)):
            raise DataError("Draws contain non-finite values")
        self.divergence_count = np.asarray(self.divergence_count, dtype=np.int64)
        self.step_size = np.asarray(self.step_size, dtype=float)
        self.accept_rate = np.asarray(self.accept_rate, dtype=float)

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    @property
    def n_params(self) -> int:
        return self.draws.shape[2]

    def pooled(self) -> np.ndarray:
        """(n_chains * n_draws) x n_params, chain-major."""
        return self.draws.reshape(-1, self.n_params)

    def parameter(self, index: int) -> np.ndarray:
        """n_chains x n_draws array of one parameter."""
        return self.draws[:, :, index]

    @property
    def divergence_fraction(self) -> float:
        return float(self.divergence_count.sum()) / (self.n_chains * self.n_draws)

    @property
    def too_many_divergences(self) -> bool:
        return self.divergence_fraction > DIVERGENCE_WARN_FRACTION


@dataclass
class _Point:
    theta: np.ndarray
    logp: float
    grad: np.ndarray


@dataclass
class _Tree:
    minus: _Point
    p_minus: np.ndarray
    plus: _Point
    p_plus: np.ndarray
    proposal: _Point
    log_weight: float
    rho: np.ndarray
    sum_accept: float
    n_leapfrog: int
    turning: bool = False
    divergent: bool = False


@dataclass
class TransitionInfo:
    accept_stat: float
    divergent: bool
    depth: int
    n_leapfrog: int


class DualAveraging:
    """
    Step-size adaptation by dual averaging of the acceptance statistic.

    Attributes:
        target_accept (float): Acceptance statistic the step size is tuned toward.
        mu (float): Shrinkage point, log(10 * initial step size).
        log_step (float): Current log step size.
        log_step_bar (float): Averaged log step size, used after warmup.
    """
    gamma = 0.05
    t0 = 10.0
    kappa = 0.75

    def __init__(self, step_size: float, target_accept: float) -> None:
        self.target_accept = target_accept
        self.restart(step_size)

    def restart(self, step_size: float) -> None:
        self.mu = np.log(10.0 * step_size)
        self.h_bar = 0.0
        self.log_step = np.log(step_size)
        self.log_step_bar = 0.0
        self.t = 0

    def update(self, accept_stat: float) -> float:
        self.t += 1
        eta = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target_accept - accept_stat)
        self.log_step = self.mu - np.sqrt(self.t) / self.gamma * self.h_bar
        weight = self.t ** (-self.kappa)
        self.log_step_bar = weight * self.log_step + (1.0 - weight) * self.log_step_bar
        return float(np.exp(self.log_step))

    @property
    def final_step_size(self) -> float:
        return float(np.exp(self.log_step_bar))


def warmup_windows(n_warmup: int, init_buffer: int = 75, term_buffer: int = 50,
                   base_window: int = 25) -> list[tuple[int, int]]:
    """
    Slow (metric) adaptation windows as (start, end) warmup-iteration ranges.

    Args:
        n_warmup (int): Warmup length.
        init_buffer (int): Initial step-size-only iterations.
        term_buffer (int): Terminal step-size-only iterations.
        base_window (int): First window length; later windows double.

    Returns:
        list[tuple[int, int]]: Windows; empty when warmup is too short for metric adaptation.
    """
    if n_warmup < 20:
        return []
    if init_buffer + base_window + term_buffer > n_warmup:
        init_buffer = int(0.15 * n_warmup)
        term_buffer = int(0.1 * n_warmup)
        base_window = n_warmup - (init_buffer + term_buffer)
    windows = []
    start, size, last = init_buffer, base_window, n_warmup - term_buffer
    while start < last:
        end = start + size
        if end + 2 * size > last:
            end = last
        windows.append((start, end))
        start, size = end, 2 * size
    return windows


class NutsKernel:
    """
    One chain's NUTS transition with a diagonal metric.

    Attributes:
        target (LogDensity): Log-density and gradient.
        rng (np.random.Generator): Generator owned by this chain.
        step_size (float): Leapfrog step size.
        inv_metric (np.ndarray): Diagonal inverse metric (posterior variance estimate).
        max_tree_depth (int): Trajectory doubling limit.
        max_energy_error (float): Energy error that marks a transition divergent.
    """
    def __init__(self, target: LogDensity, rng: np.random.Generator, max_tree_depth: int = 10,
                 max_energy_error: float = 1000.0) -> None:
        self.target = target
        self.rng = rng
        self.step_size = 1.0
        self.inv_metric = np.ones(target.n_params)
        self.max_tree_depth = max_tree_depth
        self.max_energy_error = max_energy_error

    def point(self, theta: np.ndarray) -> _Point:
        logp, grad = self.target.log_density(theta)
        return _Point(np.asarray(theta, dtype=float), float(logp), np.asarray(grad, dtype=float))

    def _kinetic(self, p: np.ndarray) -> float:
        return 0.5 * float(np.dot(p, self.inv_metric * p))

    def _momentum(self) -> np.ndarray:
        return self.rng.standard_normal(self.inv_metric.shape[0]) / np.sqrt(self.inv_metric)

    def _leapfrog(self, point: _Point, p: np.ndarray, step: float) -> tuple[_Point, np.ndarray]:
        p_half = p + 0.5 * step * point.grad
        new = self.point(point.theta + step * self.inv_metric * p_half)
        return new, p_half + 0.5 * step * new.grad

    def _energy(self, point: _Point, p: np.ndarray) -> float:
        h = -point.logp + self._kinetic(p)
        return h if np.isfinite(h) else np.inf

    def _is_turning(self, rho: np.ndarray, p_left: np.ndarray, p_right: np.ndarray) -> bool:
        return not (np.dot(self.inv_metric * p_left, rho) > 0 and np.dot(self.inv_metric * p_right, rho) > 0)

    def _merge(self, old: _Tree, new: _Tree, direction: int, biased: bool) -> _Tree:
        sum_accept = old.sum_accept + new.sum_accept
        n_leapfrog = old.n_leapfrog + new.n_leapfrog
        if new.turning or new.divergent:
            return replace(old, sum_accept=sum_accept, n_leapfrog=n_leapfrog,
                           turning=new.turning, divergent=new.divergent)

        log_weight = np.logaddexp(old.log_weight, new.log_weight)
        # biased progressive sampling at the top level, uniform multinomial inside subtrees
        log_accept = new.log_weight - (old.log_weight if biased else log_weight)
        proposal = new.proposal if np.log(self.rng.random()) < log_accept else old.proposal

        left, right = (old, new) if direction > 0 else (new, old)
        rho = left.rho + right.rho
        turning = (self._is_turning(rho, left.p_minus, right.p_plus)
                   or self._is_turning(left.rho + right.p_minus, left.p_minus, right.p_minus)
                   or self._is_turning(right.rho + left.p_plus, left.p_plus, right.p_plus))
        return _Tree(left.minus, left.p_minus, right.plus, right.p_plus, proposal, float(log_weight), rho,
                     sum_accept, n_leapfrog, turning, False)

    def _build(self, point: _Point, p: np.ndarray, direction: int, depth: int, h0: float) -> _Tree:
        if depth == 0:
            new, p_new = self._leapfrog(point, p, direction * self.step_size)
            delta = self._energy(new, p_new) - h0
            return _Tree(new, p_new, new, p_new, new, -delta, p_new.copy(), float(np.exp(min(0.0, -delta))), 1,
                         False, bool(delta > self.max_energy_error))
        first = self._build(point, p, direction, depth - 1, h0)
        if first.turning or first.divergent:
            return first
        start, p_start = (first.plus, first.p_plus) if direction > 0 else (first.minus, first.p_minus)
        second = self._build(start, p_start, direction, depth - 1, h0)
        return self._merge(first, second, direction, biased=False)

    def transition(self, current: _Point) -> tuple[_Point, TransitionInfo]:
        """
        One NUTS transition from ``current``.

        Args:
            current (_Point): Current state with its log-density and gradient.

        Returns:
            tuple[_Point, TransitionInfo]: Next state and transition statistics.
        """
        p0 = self._momentum()
        h0 = self._energy(current, p0)
        tree = _Tree(current, p0, current, p0, current, 0.0, p0.copy(), 0.0, 0)
        depth = 0
        while depth < self.max_tree_depth:
            direction = 1 if self.rng.random() < 0.5 else -1
            start, p_start = (tree.plus, tree.p_plus) if direction > 0 else (tree.minus, tree.p_minus)
            subtree = self._build(start, p_start, direction, depth, h0)
            depth += 1
            tree = self._merge(tree, subtree, direction, biased=True)
            if tree.turning or tree.divergent:
                break
        accept_stat = tree.sum_accept / max(tree.n_leapfrog, 1)
        return tree.proposal, TransitionInfo(accept_stat, tree.divergent, depth, tree.n_leapfrog)

    def find_reasonable_step_size(self, current: _Point, step_size: float = 1.0) -> float:
        """Doubles or halves the step size until a single leapfrog's acceptance crosses 1/2."""
        p = self._momentum()
        h0 = self._energy(current, p)
        threshold = np.log(0.5)

        def log_accept(step: float) -> float:
            new, p_new = self._leapfrog(current, p, step)
            return -(self._energy(new, p_new) - h0)

        direction = 1 if log_accept(step_size) > threshold else -1
        for _ in range(100):
            candidate = step_size * 2.0 ** direction
            accept = log_accept(candidate)
            if (direction > 0 and not accept > threshold) or (direction < 0 and not accept < threshold):
                break
            step_size = candidate
            if direction < 0 and step_size < MIN_STEP_SIZE:
                break
        return step_size


@dataclass
class ChainResult:
    """Output of one chain."""
    chain_index: int
    draws: np.ndarray
    step_size: float
    accept_rate: float
    divergent_iterations: list[int] = field(default_factory=list)
    inv_metric: np.ndarray | None = None


def initialize_chain(model: LogDensity, chain_index: int, config: SamplerConfig) -> Coefficients:
    """
    Draws a starting point uniformly from [-init_radius, init_radius] per coordinate.

    Args:
        model (LogDensity): Target density.
        chain_index (int): Chain number; selects the chain's initialisation substream.
        config (SamplerConfig): Supplies seed and init_radius.

    Returns:
        Coefficients: A start with finite log-density and gradient.

    Raises:
        NonFiniteGradient: No finite start after 100 attempts.
    """
    rng = make_rng(config.seed, CHAIN_INIT_STREAM + chain_index)
    for _ in range(INIT_ATTEMPTS):
        theta = rng.uniform(-config.init_radius, config.init_radius, size=model.n_params)
        logp, grad = model.log_density(theta)
        if np.isfinite(logp) and np.all(np.isfinite(grad)):
            return Coefficients.from_vector(theta)
    raise NonFiniteGradient(f"Chain {chain_index}: no finite starting point after {INIT_ATTEMPTS} attempts")


class ChainWorker:
    """
    Runs warmup and sampling for one chain. Owns its generator and adaptation state exclusively.

    Attributes:
        model (LogDensity): Target density, shared read-only between workers.
        config (SamplerConfig): Sampler configuration.
        chain_index (int): Chain number.
        name (str): Label used in logs.
    """
    def __init__(self, model: LogDensity, config: SamplerConfig, chain_index: int) -> None:
        self.model = model
        self.config = config
        self.chain_index = chain_index
        self.name = f"chain-{chain_index}"

    def _checked(self, step_size: float) -> float:
        if not np.isfinite(step_size) or step_size < MIN_STEP_SIZE:
            raise AdaptationFailure(f"{self.name}: step size collapsed to {step_size:.3g}")
        return step_size

    def run(self) -> ChainResult:
        config = self.config
        kernel = NutsKernel(self.model, chain_rng(config.seed, self.chain_index), config.max_tree_depth,
                            config.max_energy_error)
        start = initialize_chain(self.model, self.chain_index, config)
        current = kernel.point(start.to_vector())
        kernel.step_size = self._checked(kernel.find_reasonable_step_size(current))
        adapter = DualAveraging(kernel.step_size, config.target_accept)

        windows = warmup_windows(config.n_warmup)
        window_ends = {end: begin for begin, end in windows}
        window_draws: list[np.ndarray] = []
        for it in range(config.n_warmup):
            current, info = kernel.transition(current)
            kernel.step_size = self._checked(adapter.update(info.accept_stat))
            if any(begin <= it < end for begin, end in windows):
                window_draws.append(current.theta)
            if it + 1 in window_ends:
                samples = np.asarray(window_draws)
                n = samples.shape[0]
                variance = samples.var(axis=0, ddof=1) if n > 1 else np.ones(self.model.n_params)
                kernel.inv_metric = (n / (n + 5.0)) * variance + 1e-3 * (5.0 / (n + 5.0))
                kernel.step_size = self._checked(kernel.find_reasonable_step_size(current, kernel.step_size))
                adapter.restart(kernel.step_size)
                window_draws = []
                logger.debug(f"{self.name}: metric window ending at {it + 1}, step size {kernel.step_size:.4g}")
        if config.n_warmup > 0:
            kernel.step_size = self._checked(adapter.final_step_size)

        draws = np.empty((config.n_draws, self.model.n_params))
        accept = np.empty(config.n_draws)
        divergent = []
        for it in range(config.n_draws):
            current, info = kernel.transition(current)
            draws[it] = current.theta
            accept[it] = info.accept_stat
            if info.divergent:
                divergent.append(it)

        result = ChainResult(self.chain_index, draws, float(kernel.step_size), float(accept.mean()), divergent,
                             kernel.inv_metric.copy())
        logger.info(f"{self.name}: step size {result.step_size:.4g}, accept {result.accept_rate:.3f}, "
                    f"{len(divergent)} divergent")
        return result


def sample(model: LogDensity, config: SamplerConfig, n_workers: int = 1) -> PosteriorDraws:
    """
    Runs n_chains independent NUTS chains.

    Args:
        model (LogDensity): Target density (a ModelSpec or any object with log_density, n_params, param_names).
        config (SamplerConfig): Sampler configuration.
        n_workers (int): Threads used to run chains; never changes the result.

    Returns:
        PosteriorDraws: Post-warmup draws in chain order.
    """
    workers = [ChainWorker(model, config, c) for c in range(config.n_chains)]
    logger.info(f"Sampling {config.n_chains} chains x {config.n_draws} draws "
                f"({config.n_warmup} warmup) on {n_workers} thread(s)")
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(ChainWorker.run, workers))
    else:
        results = [w.run() for w in workers]
    results.sort(key=lambda r: r.chain_index)

    link = getattr(model, 'link', None)
    prior = getattr(model, 'prior', None)
    fingerprint = model.fingerprint() if hasattr(model, 'fingerprint') else None
    return PosteriorDraws(
        draws=np.stack([r.draws for r in results]),
        param_names=list(model.param_names),
        divergence_count=np.array([len(r.divergent_iterations) for r in results]),
        divergent_iterations=[list(r.divergent_iterations) for r in results],
        step_size=np.array([r.step_size for r in results]),
        accept_rate=np.array([r.accept_rate for r in results]),
        seed=config.seed,
        config=config,
        inv_metric=np.stack([r.inv_metric for r in results]),
        link=link.value if link is not None else None,
        prior=prior.model_dump() if prior is not None else None,
        fingerprint=fingerprint,
        model_name=f"{link.value}_model" if link is not None else None,
    )
