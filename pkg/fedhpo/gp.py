"""Gaussian-process surrogate over log10(eta) with UCB acquisition."""

import logging

import numpy as np
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from .errors import ConditioningError
from .models import BOConfig, GPState, KernelParams

logger = logging.getLogger(__name__)

JITTER_SCALE = 1e-10
MAX_JITTER_DOUBLINGS = 6


def squared_exponential(a: np.ndarray, b: np.ndarray, kernel: KernelParams) -> np.ndarray:
    """sigma_f^2 * exp(-(a - b)^2 / (2 l^2)) for every pair of inputs."""
    diff = np.subtract.outer(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    return kernel.signal_variance * np.exp(-(diff**2) / (2.0 * kernel.lengthscale**2))


def _cholesky_with_jitter(matrix: np.ndarray) -> np.ndarray:
    """Cholesky factor, adding a growing diagonal jitter while the matrix is not PD.

    The first attempt uses no jitter; later ones add 1e-10 * mean(diag),
    doubled each time, at most MAX_JITTER_DOUBLINGS doublings.

    Raises:
        ConditioningError: If every attempt fails
    """
    scale = JITTER_SCALE * float(np.mean(np.diag(matrix)))
    identity = np.eye(matrix.shape[0])
    try:
        for attempt in Retrying(
            retry=retry_if_exception_type(np.linalg.LinAlgError),
            stop=stop_after_attempt(MAX_JITTER_DOUBLINGS + 2),
            reraise=True,
        ):
            with attempt:
                number = attempt.retry_state.attempt_number
                jitter = 0.0 if number == 1 else scale * 2 ** (number - 2)
                if jitter:
                    logger.debug("kernel matrix not positive definite, retrying with jitter %.3g", jitter)
                factor = np.linalg.cholesky(matrix + jitter * identity)
                if not np.all(np.isfinite(factor)):
                    raise np.linalg.LinAlgError("non-finite Cholesky factor")
                return factor
    except np.linalg.LinAlgError as e:
        raise ConditioningError(
            f"kernel matrix of size {matrix.shape[0]} is singular after jitter up to "
            f"{scale * 2**MAX_JITTER_DOUBLINGS:.3g}"
        ) from e
    raise ConditioningError("kernel matrix factorization did not run")


def posterior(state: GPState, queries) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form GP posterior mean and standard deviation at query points.

    Args:
        state: Observations and kernel parameters
        queries: Query inputs in log10(eta) space (scalar or array)

    Returns:
        Tuple of (mean, stddev) arrays shaped like the flattened queries

    Raises:
        ConditioningError: If the kernel matrix cannot be factorized
    """
    kernel = state.kernel
    points = np.atleast_1d(np.asarray(queries, dtype=np.float64))
    if not state.observations:
        return np.zeros_like(points), np.full_like(points, np.sqrt(kernel.signal_variance))

    inputs = np.array([u for u, _ in state.observations], dtype=np.float64)
    values = np.array([a for _, a in state.observations], dtype=np.float64)
    gram = squared_exponential(inputs, inputs, kernel) + kernel.noise_variance * np.eye(inputs.shape[0])
    factor = _cholesky_with_jitter(gram)
    alpha = np.linalg.solve(factor.T, np.linalg.solve(factor, values))

    cross = squared_exponential(points, inputs, kernel)
    mean = cross @ alpha
    v = np.linalg.solve(factor, cross.T)
    variance = kernel.signal_variance - np.sum(v**2, axis=0)
    return mean, np.sqrt(np.maximum(variance, 0.0))


def gp_fit_posterior(state: GPState, u: float) -> tuple[float, float]:
    """Posterior (mean, stddev) at a single log10(eta) input."""
    mean, std = posterior(state, [u])
    return float(mean[0]), float(std[0])


def ucb(mu, sigma, beta: float):
    """Upper confidence bound mu + beta * sigma."""
    if np.any(np.asarray(sigma) < 0):
        raise ValueError("sigma must be non-negative")
    return mu + beta * sigma


def maximize_acquisition(state: GPState, cfg: BOConfig) -> float:
    """Next sample point: UCB argmax over an even grid in log10-eta space.

    Ties go to the smallest input.
    """
    low, high = cfg.log_bounds
    candidates = np.linspace(low, high, cfg.acquisition_points)
    mean, std = posterior(state, candidates)
    scores = ucb(mean, std, cfg.ucb_beta)
    return float(candidates[int(np.argmax(scores))])
