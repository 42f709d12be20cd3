"""Radial base kernels with the analytic derivatives needed by the Stein kernel.

Both kernels are written as a profile of the squared distance,
``k(x, y) = kappa(rho)`` with ``rho = ||x - y||^2``.  Every derivative the
Stein kernel needs follows from ``kappa'`` and ``kappa''``:

* ``grad_y k(x, y) = -2 kappa'(rho) (x - y)``
* ``sum_i d^2 k / dx_i dy_i = -2 d kappa'(rho) - 4 rho kappa''(rho)``
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import DegenerateBandwidthError, InvalidArgumentError


class KernelFamily(str, Enum):
    IMQ = "imq"
    RBF = "rbf"


@dataclass(frozen=True)
class KernelConfig:
    """Immutable kernel description.

    ``IMQ``: ``k(x, y) = (c^2 + ||x - y||^2 / l^2)^beta`` with ``-1 < beta < 0``.
    ``RBF``: ``k(x, y) = exp(-||x - y||^2 / (2 l^2))``; ``c`` and ``beta`` unused.
    """

    family: KernelFamily = KernelFamily.IMQ
    c: float = 1.0
    lengthscale: float = 0.1
    beta: float = -0.5

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if not self.lengthscale > 0:
            raise InvalidArgumentError(f"lengthscale must be positive, got {self.lengthscale}")
        if self.family is KernelFamily.IMQ:
            if not self.c > 0:
                raise InvalidArgumentError(f"IMQ offset c must be positive, got {self.c}")
            if not -1.0 < self.beta < 0.0:
                raise InvalidArgumentError(f"IMQ exponent must lie in (-1, 0), got {self.beta}")

    @classmethod
    def imq(cls, c=1.0, lengthscale=0.1, beta=-0.5):
        return cls(KernelFamily.IMQ, c, lengthscale, beta)

    @classmethod
    def rbf(cls, lengthscale=1.0):
        return cls(KernelFamily.RBF, 1.0, lengthscale, -0.5)

    # radial profile and its first two derivatives in rho = ||x - y||^2
    def profile(self, rho):
        rho = np.asarray(rho, dtype=float)
        l2 = self.lengthscale**2
        if self.family is KernelFamily.IMQ:
            u = self.c**2 + rho / l2
            k = u**self.beta
            dk = self.beta / l2 * u ** (self.beta - 1.0)
            d2k = self.beta * (self.beta - 1.0) / l2**2 * u ** (self.beta - 2.0)
        else:
            k = np.exp(-rho / (2.0 * l2))
            dk = -k / (2.0 * l2)
            d2k = k / (4.0 * l2**2)
        return k, dk, d2k


def _pair(x, y):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.ndim != 1 or x.shape != y.shape:
        raise InvalidArgumentError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return x, y


def kernel_eval(cfg: KernelConfig, x, y) -> float:
    x, y = _pair(x, y)
    r = x - y
    k, _, _ = cfg.profile(r @ r)
    return float(k)


def kernel_grad_second(cfg: KernelConfig, x, y) -> np.ndarray:
    """Gradient of ``k(x, y)`` with respect to ``y``."""
    x, y = _pair(x, y)
    r = x - y
    _, dk, _ = cfg.profile(r @ r)
    return -2.0 * dk * r


def kernel_mixed_trace(cfg: KernelConfig, x, y) -> float:
    """``sum_i d^2 k(x, y) / dx_i dy_i``."""
    x, y = _pair(x, y)
    r = x - y
    rho = r @ r
    _, dk, d2k = cfg.profile(rho)
    return float(-2.0 * x.size * dk - 4.0 * rho * d2k)


def kernel_matrix(cfg: KernelConfig, X, Y=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    rho = sq_distances(X, Y)
    return cfg.profile(rho)[0]


def sq_distances(X, Y) -> np.ndarray:
    if X.shape[1] != Y.shape[1]:
        raise InvalidArgumentError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    return cdist(X, Y, "sqeuclidean")


def median_heuristic(points) -> float:
    """Median pairwise Euclidean distance over all pairs ``i < j``."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[0] < 2:
        raise InvalidArgumentError("median heuristic needs at least two points")
    med = float(np.median(pdist(points)))
    if med <= 0.0:
        raise DegenerateBandwidthError("median pairwise distance is zero")
    return med
