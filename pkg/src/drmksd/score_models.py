"""Parametric families known up to normalization, exposed through their scores.

A model never evaluates ``log q_theta`` itself; everything downstream uses the
score ``s_theta(y) = grad_y log q_theta(y)`` and its theta-derivatives.  All
methods accept either a single point ``y`` of shape ``(d,)`` or a batch of
shape ``(n, d)`` and return matching leading axes.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgumentError


class ScoreModel:
    """Base interface.  Subclasses implement the batched ``_score``/``_jac``/``_hess``."""

    dim_y: int
    dim_theta: int
    linear_in_theta: bool = False

    def _check(self, theta, y):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.dim_theta,):
            raise InvalidArgumentError(
                f"theta must have shape ({self.dim_theta},), got {theta.shape}")
        y = np.asarray(y, dtype=float)
        single = y.ndim <= 1
        Y = np.atleast_2d(y) if single else y
        if single and self.dim_y == 1 and y.ndim == 1 and y.size != 1:
            raise InvalidArgumentError(f"expected a point in R^1, got shape {y.shape}")
        if Y.ndim != 2 or Y.shape[1] != self.dim_y:
            raise InvalidArgumentError(f"points must live in R^{self.dim_y}, got shape {y.shape}")
        return theta, Y, single

    def score(self, theta, y) -> np.ndarray:
        theta, Y, single = self._check(theta, y)
        out = self._score(theta, Y)
        return out[0] if single else out

    def score_jac_theta(self, theta, y) -> np.ndarray:
        """``d s_theta(y) / d theta`` with shape ``(d, p)`` per point."""
        theta, Y, single = self._check(theta, y)
        out = self._jac(theta, Y)
        return out[0] if single else out

    def score_hess_theta(self, theta, y) -> np.ndarray:
        """Second theta-derivatives, shape ``(p, p, d)`` per point."""
        theta, Y, single = self._check(theta, y)
        out = self._hess(theta, Y)
        return out[0] if single else out

    def _score(self, theta, Y):
        raise NotImplementedError

    def _jac(self, theta, Y):
        raise NotImplementedError

    def _hess(self, theta, Y):
        raise NotImplementedError


class AffineScoreModel(ScoreModel):
    """Scores of the form ``s_theta(y) = offset(y) + slope(y) @ theta``."""

    linear_in_theta = True

    def offset(self, Y):
        raise NotImplementedError

    def slope(self, Y):
        raise NotImplementedError

    def _score(self, theta, Y):
        return self.offset(Y) + self.slope(Y) @ theta

    def _jac(self, theta, Y):
        return self.slope(Y)

    def _hess(self, theta, Y):
        return np.zeros((Y.shape[0], self.dim_theta, self.dim_theta, self.dim_y))


class GaussianLocation(AffineScoreModel):
    """``N(theta, I_d)``: ``s_theta(y) = theta - y``."""

    def __init__(self, dim=1):
        self.dim_y = self.dim_theta = int(dim)

    def offset(self, Y):
        return -Y

    def slope(self, Y):
        return np.broadcast_to(np.eye(self.dim_y), (Y.shape[0], self.dim_y, self.dim_y))


class RBMMarginal(AffineScoreModel):
    """Visible marginal of ``exp(h + <theta, y> - quad ||y||^2)``.

    The hidden unit enters the energy additively, so it integrates out into
    the constant and the visible score is ``theta - 2 quad y``.
    """

    def __init__(self, quad=2.0):
        self.quad = float(quad)
        self.dim_y = self.dim_theta = 2

    def offset(self, Y):
        return -2.0 * self.quad * Y

    def slope(self, Y):
        return np.broadcast_to(np.eye(2), (Y.shape[0], 2, 2))


class LinearExponentialFamily(AffineScoreModel):
    """``log q_theta(y) = <eta(theta), J(y)> + const`` with ``eta`` affine in theta.

    ``eta(theta)`` equals ``eta_base`` except at ``theta_slots``, where
    ``eta[theta_slots[k]] = eta_base[theta_slots[k]] + theta[k]``.
    ``features(Y)`` returns ``(n, m)`` and ``feature_jacobian(Y)`` returns
    ``(n, m, d)`` with entry ``[i, a, j] = dJ_a(Y_i) / dy_j``.
    """

    def __init__(self, features: Callable, feature_jacobian: Callable,
                 eta_base: Sequence[float], theta_slots: Sequence[int], dim_y: int):
        self.features = features
        self.feature_jacobian = feature_jacobian
        self.eta_base = np.asarray(eta_base, dtype=float)
        self.theta_slots = np.asarray(theta_slots, dtype=int)
        self.dim_y = int(dim_y)
        self.dim_theta = len(self.theta_slots)
        if np.any(self.theta_slots < 0) or np.any(self.theta_slots >= self.eta_base.size):
            raise InvalidArgumentError("theta_slots must index into eta_base")

    def eta(self, theta):
        eta = self.eta_base.copy()
        eta[self.theta_slots] += np.asarray(theta, dtype=float)
        return eta

    def potential(self, theta, y):
        """Unnormalized log-density ``<eta(theta), J(y)>``."""
        theta, Y, single = self._check(theta, y)
        out = self.features(Y) @ self.eta(theta)
        return out[0] if single else out

    def offset(self, Y):
        return np.einsum("ima,m->ia", self.feature_jacobian(Y), self.eta_base)

    def slope(self, Y):
        return np.transpose(self.feature_jacobian(Y)[:, self.theta_slots, :], (0, 2, 1))


class NaturalParamFamily(LinearExponentialFamily):
    """``q_theta(y) ∝ exp(<T(y), theta>)`` for a user feature map ``T: R^d -> R^p``."""

    def __init__(self, features: Callable, feature_jacobian: Callable, dim_y: int, dim_theta: int):
        super().__init__(features, feature_jacobian, np.zeros(dim_theta), np.arange(dim_theta), dim_y)


# precision matrix of the theta = 0 member of the 5-d intractable family
INTRACTABLE_PRECISION = np.array([
    [1.0, -0.6, -0.2, -0.2, -0.2],
    [-0.6, 1.0, 0.0, 0.0, 0.0],
    [-0.2, 0.0, 1.0, 0.0, 0.0],
    [-0.2, 0.0, 0.0, 1.0, 0.0],
    [-0.2, 0.0, 0.0, 0.0, 1.0],
])


def _intractable_features(Y):
    y1 = Y[:, 0]
    return np.column_stack([
        np.sum(Y**2, axis=1),
        y1 * Y[:, 1],
        y1 * Y[:, 2:].sum(axis=1),
        np.tanh(Y),
    ])


def _intractable_jacobian(Y):
    n = Y.shape[0]
    jac = np.zeros((n, 8, 5))
    jac[:, 0, :] = 2.0 * Y
    jac[:, 1, 0] = Y[:, 1]
    jac[:, 1, 1] = Y[:, 0]
    jac[:, 2, 0] = Y[:, 2:].sum(axis=1)
    jac[:, 2, 2:] = Y[:, [0]]
    idx = np.arange(5)
    jac[:, 3 + idx, idx] = 1.0 / np.cosh(Y) ** 2
    return jac


def intractable5d() -> LinearExponentialFamily:
    """The 5-d, 2-parameter family whose theta = 0 member is ``N(0, inv(INTRACTABLE_PRECISION))``.

    ``eta(theta) = (-0.5, 0.6, 0.2, 0, 0, 0, theta_1, theta_2)`` against
    ``J(y) = (sum y_i^2, y1 y2, sum_{i>=3} y1 y_i, tanh(y_1..y_5))``.
    """
    eta_base = [-0.5, 0.6, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0]
    return LinearExponentialFamily(_intractable_features, _intractable_jacobian,
                                   eta_base, theta_slots=[6, 7], dim_y=5)
