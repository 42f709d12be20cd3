"""Sandwich covariance ``4 Gamma^-1 Sigma Gamma^-1 / n`` and Wald intervals.

The empirical kernel between observations is ``h*(Z_i, Z_j) = (M H M')_ij``.
``Gamma_n`` is the Hessian of ``g_n`` at ``theta_n``; ``Sigma_n`` is the
(centered, ``1/n``-normalized) covariance of the per-observation gradients
``v_i = (1/n) sum_j d h*(Z_i, Z_j) / d theta``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import InferenceUnavailableError, InvalidArgumentError
from .estimator import AssembledWeights, FitResult, Objective, Variant, scaled_weights
from .stein import SteinGram

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class SandwichEstimate:
    gamma: np.ndarray
    sigma: np.ndarray
    covariance: np.ndarray
    half_widths: np.ndarray  # 95% Wald half-widths
    condition_number: float
    n: int


def influence_gradients(weights: AssembledWeights, gram: SteinGram, variant=Variant.DR,
                        idx=None) -> np.ndarray:
    """``(n, p)`` matrix of ``v_i``; row sums of ``M dH_k M'`` divided by ``n``."""
    if gram.dH is None:
        raise InvalidArgumentError("gram must carry first derivatives")
    _, M = weights.combination(variant)
    if idx is not None:
        M = M[:, idx]
    w = scaled_weights(weights, variant, idx)
    if M.shape[1] != gram.n:
        raise InvalidArgumentError("gram size does not match the weights")
    return np.stack([M @ (dHk @ w) for dHk in gram.dH], axis=1)


def sandwich(weights: AssembledWeights, gram: SteinGram, variant=Variant.DR,
             idx=None) -> SandwichEstimate:
    if gram.d2H is None:
        raise InvalidArgumentError("gram must be built with order=2")
    n = weights.n
    w = scaled_weights(weights, variant, idx)
    gamma = np.einsum("i,klij,j->kl", w, gram.d2H, w)
    gamma = 0.5 * (gamma + gamma.T)
    V = influence_gradients(weights, gram, variant, idx)
    sigma = np.atleast_2d(np.cov(V, rowvar=False, bias=True))
    sigma = 0.5 * (sigma + sigma.T)

    evals, evecs = np.linalg.eigh(gamma)
    if not np.all(np.isfinite(evals)) or evals[0] <= 0:
        raise InferenceUnavailableError("Gamma_n is not positive definite", gamma)
    condition = float(evals[-1] / evals[0])
    if condition > MAX_CONDITION:
        raise InferenceUnavailableError(f"Gamma_n is ill-conditioned (cond={condition:.3e})", gamma)
    gamma_inv = (evecs / evals) @ evecs.T
    cov = 4.0 * gamma_inv @ sigma @ gamma_inv / n
    cov = 0.5 * (cov + cov.T)
    half = norm.ppf(0.975) * np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return SandwichEstimate(gamma, sigma, cov, half, condition, n)


def sandwich_at(objective: Objective, theta) -> SandwichEstimate:
    """Sandwich at ``theta`` for the nuisances frozen inside ``objective``."""
    gram = objective.gram(theta, order=2)
    return sandwich(objective.weights, gram, objective.variant, objective.idx)


def normal_quantile(level: float) -> float:
    """Two-sided multiplier ``z_{(1 + level) / 2}``."""
    if not 0.0 < level < 1.0:
        raise InvalidArgumentError(f"level must lie in (0, 1), got {level}")
    return float(norm.ppf(0.5 + 0.5 * level))


def confidence_interval(fit: FitResult, estimate: SandwichEstimate, level: float = 0.95) -> np.ndarray:
    """``(p, 2)`` array of per-coordinate ``theta_n -+ z sqrt(cov_kk)``."""
    z = normal_quantile(level)
    half = z * np.sqrt(np.clip(np.diag(estimate.covariance), 0.0, None))
    theta = np.asarray(fit.theta, dtype=float)
    return np.column_stack([theta - half, theta + half])


def standardized_error(theta_n, theta_star, estimate: SandwichEstimate) -> np.ndarray:
    """``Sigma_n^{-1/2} Gamma_n (theta_n - theta_*) sqrt(n) / 2``, asymptotically ``N(0, I)``."""
    evals, evecs = np.linalg.eigh(estimate.sigma)
    if evals[0] <= 0:
        raise InferenceUnavailableError("Sigma_n is singular", estimate.gamma)
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    diff = np.asarray(theta_n, float) - np.asarray(theta_star, float)
    return inv_sqrt @ estimate.gamma @ diff * np.sqrt(estimate.n) / 2.0
