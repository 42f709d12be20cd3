"""Nuisance estimators: propensity models and weight-form outcome regressors.

Outcome regressors never see outcomes.  They are fitted on the covariates of
the treated units of one fold and return, for any query ``x``, a weight row
over those units; the estimator then pairs the row with the units' Stein
features.  This keeps every outcome regressor in the weighted-sum form that
the closed-form statistic needs.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.special import expit

from .errors import (ConvergenceError, DegenerateBandwidthError, EstimationImpossibleError,
                     InvalidArgumentError, NotFittedError)
from .kernels import KernelConfig, kernel_matrix, median_heuristic

DEFAULT_CLIP = 0.01


def _as_matrix(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidArgumentError(f"expected an (m, q) matrix, got shape {X.shape}")
    return X


# --------------------------------------------------------------------------
# logistic regression
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LogisticFit:
    coef: np.ndarray  # intercept first
    converged: bool
    n_iter: int


def _logistic_objective(D, y, w, l2):
    eta = D @ w
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta) + 0.5 * l2 * (w @ w))


def fit_logistic(features, labels, l2: float = 1e-5, max_iter: int = 1000,
                 tol: float = 1e-8) -> LogisticFit:
    """Penalized maximum likelihood by damped Newton (IRLS).

    Minimizes ``sum_i logloss_i + (l2 / 2) ||coef||^2``, i.e. ``C = 1 / l2``.
    The intercept is penalized too so that single-class data stays
    well-posed whenever ``l2 > 0``.  Convergence means the gradient of the
    per-sample objective has Euclidean norm ``<= tol``.
    """
    X = _as_matrix(features)
    y = np.asarray(labels, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise InvalidArgumentError("features and labels differ in length")
    if X.shape[0] < 2:
        raise InvalidArgumentError("logistic regression needs at least two samples")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("features contain NaN or infinite values")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidArgumentError("labels must be binary 0/1")
    if l2 < 0:
        raise InvalidArgumentError("l2 must be non-negative")
    if l2 == 0 and np.unique(y).size < 2:
        raise ConvergenceError("single-class labels without penalty have no finite MLE")

    m = X.shape[0]
    D = np.column_stack([np.ones(m), X])
    w = np.zeros(D.shape[1])
    ridge = l2 * np.eye(D.shape[1])
    f = _logistic_objective(D, y, w, l2)
    steps = 0
    while True:
        mu = expit(D @ w)
        grad = D.T @ (mu - y) + l2 * w
        if np.linalg.norm(grad) / m <= tol or steps >= max_iter:
            break
        hess = (D * (mu * (1.0 - mu))[:, None]).T @ D + ridge
        try:
            direction = scipy.linalg.solve(hess, grad, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            direction = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        for _ in range(60):
            w_new = w - t * direction
            f_new = _logistic_objective(D, y, w_new, l2)
            if f_new <= f:
                break
            t *= 0.5
        else:
            break  # no descent left at machine precision
        w, f = w_new, f_new
        steps += 1
    converged = np.linalg.norm(grad) / m <= tol
    return LogisticFit(w, bool(converged), steps)


# --------------------------------------------------------------------------
# propensity models
# --------------------------------------------------------------------------

class PropensityModel:
    """Base class: ``fit(X, A)`` then ``predict(X)`` returns clipped probabilities."""

    def __init__(self, clip: float = DEFAULT_CLIP):
        if not 0.0 < clip < 0.5:
            raise InvalidArgumentError(f"clip must lie in (0, 0.5), got {clip}")
        self.clip = float(clip)
        self.fitted = False

    def fit(self, X, A):
        self.fitted = True
        return self

    def _raw(self, X):
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        if not self.fitted:
            raise NotFittedError(f"{type(self).__name__} used before fit")
        X = _as_matrix(X)
        return np.clip(self._raw(X), self.clip, 1.0 - self.clip)

    def __call__(self, x) -> float:
        return float(self.predict(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def clone(self):
        return copy.deepcopy(self)


class LogisticPropensity(PropensityModel):
    """Logistic regression on identity or elementwise-squared covariates."""

    feature_maps = {"identity": lambda X: X, "squares": lambda X: X**2}

    def __init__(self, features: str = "identity", l2: float = 1e-5, max_iter: int = 1000,
                 tol: float = 1e-8, clip: float = DEFAULT_CLIP):
        super().__init__(clip)
        if features not in self.feature_maps:
            raise InvalidArgumentError(f"unknown feature map {features!r}")
        self.features, self.l2, self.max_iter, self.tol = features, l2, max_iter, tol
        self.result: LogisticFit | None = None

    def fit(self, X, A):
        phi = self.feature_maps[self.features](_as_matrix(X))
        if phi.shape[0] < 2:
            raise EstimationImpossibleError("propensity training fold has fewer than two samples")
        self.result = fit_logistic(phi, A, self.l2, self.max_iter, self.tol)
        self.fitted = True
        return self

    def _raw(self, X):
        coef = self.result.coef
        return expit(coef[0] + self.feature_maps[self.features](X) @ coef[1:])


class ConstantPropensity(PropensityModel):
    """Ignores the data; usable without calling ``fit``."""

    def __init__(self, value: float = 0.5, clip: float = DEFAULT_CLIP):
        super().__init__(clip)
        if not 0.0 < value < 1.0:
            raise InvalidArgumentError("constant propensity must lie in (0, 1)")
        self.value = float(value)
        self.fitted = True

    def _raw(self, X):
        return np.full(X.shape[0], self.value)


class OraclePropensity(PropensityModel):
    """Returns the data-generating process' true ``pi(x)``; fitting is a no-op."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], clip: float = DEFAULT_CLIP):
        super().__init__(clip)
        self.fn = fn
        self.fitted = True

    def _raw(self, X):
        return np.asarray(self.fn(X), dtype=float).ravel()


class CorruptedPropensity(PropensityModel):
    """A base propensity passed through a distortion of its probabilities.

    ``distortion`` is a callable on probability arrays, ``"flip"`` (``p -> 1 - p``)
    or a float, which replaces every probability by that constant.
    """

    def __init__(self, base: PropensityModel, distortion="flip", clip: float = DEFAULT_CLIP):
        super().__init__(clip)
        self.base = base
        if distortion == "flip":
            self.distortion = lambda p: 1.0 - p
        elif isinstance(distortion, (int, float)):
            value = float(distortion)
            self.distortion = lambda p: np.full_like(p, value)
        elif callable(distortion):
            self.distortion = distortion
        else:
            raise InvalidArgumentError(f"unknown distortion {distortion!r}")

    def fit(self, X, A):
        self.base.fit(X, A)
        self.fitted = True
        return self

    def _raw(self, X):
        return self.distortion(self.base._raw(X))


def propensity(model: PropensityModel, x) -> float:
    return model(x)


# --------------------------------------------------------------------------
# weight-form outcome regressors
# --------------------------------------------------------------------------

class OutcomeWeights:
    """Base class: fitted on treated covariates of one fold, emits weight rows over them."""

    def __init__(self):
        self.m = None

    def fit(self, X_treated):
        X = _as_matrix(X_treated)
        if X.shape[0] == 0:
            raise EstimationImpossibleError("outcome regressor needs at least one treated sample")
        if not np.all(np.isfinite(X)):
            raise InvalidArgumentError("covariates contain NaN or infinite values")
        self.m = X.shape[0]
        self._fit(X)
        return self

    def _fit(self, X):
        pass

    def weights(self, X) -> np.ndarray:
        """``(q, m)`` matrix of weight rows, one per query point."""
        if self.m is None:
            raise NotFittedError(f"{type(self).__name__} used before fit")
        return self._weights(_as_matrix(X))

    def weight_row(self, x) -> np.ndarray:
        return self.weights(np.atleast_2d(np.asarray(x, dtype=float)))[0]

    def clone(self):
        return copy.deepcopy(self)


class CMEWeights(OutcomeWeights):
    """Conditional mean embedding: ``k_X(x)' (K_X + m * ridge * I)^{-1}``.

    Covariates are standardized with the training fold's mean and standard
    deviation; the RBF bandwidth defaults to the median heuristic on the
    standardized fold (1.0 when fewer than two distinct points exist).
    """

    def __init__(self, ridge: float = 1e-3, bandwidth: float | None = None):
        super().__init__()
        if not ridge > 0:
            raise InvalidArgumentError("CME ridge must be positive")
        self.ridge = float(ridge)
        self.bandwidth = bandwidth

    def _standardize(self, X):
        return (X - self.center) / self.scale

    def _fit(self, X):
        self.center = X.mean(axis=0)
        scale = X.std(axis=0)
        self.scale = np.where(scale > 0, scale, 1.0)
        Xs = self._standardize(X)
        bw = self.bandwidth
        if bw is None:
            try:
                bw = median_heuristic(Xs)
            except (DegenerateBandwidthError, InvalidArgumentError):
                bw = 1.0
        self.kernel = KernelConfig.rbf(bw)
        self.X_train = Xs
        self.system = kernel_matrix(self.kernel, Xs) + self.m * self.ridge * np.eye(self.m)

    def _weights(self, X):
        Kq = kernel_matrix(self.kernel, self.X_train, self._standardize(X))  # (m, q)
        return scipy.linalg.solve(self.system, Kq, assume_a="sym").T


class KNNWeights(OutcomeWeights):
    """Uniform weights over the ``k`` nearest treated neighbors (ties to lowest index)."""

    def __init__(self, k: int = 1):
        super().__init__()
        if k < 1:
            raise InvalidArgumentError("k must be at least 1")
        self.k = int(k)

    def _fit(self, X):
        self.X_train = X

    def _weights(self, X):
        k = min(self.k, self.m)
        d2 = ((X[:, None, :] - self.X_train[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        W = np.zeros((X.shape[0], self.m))
        np.put_along_axis(W, nearest, 1.0 / k, axis=1)
        return W


class ZeroWeights(OutcomeWeights):
    """Deliberately inconsistent regressor: every weight row is zero."""

    def _weights(self, X):
        return np.zeros((X.shape[0], self.m))


def fit_weights(kind: str, X_train_treated, **params) -> OutcomeWeights:
    kinds = {"cme": CMEWeights, "knn": KNNWeights, "zero": ZeroWeights}
    if kind not in kinds:
        raise InvalidArgumentError(f"unknown outcome-weight kind {kind!r}")
    return kinds[kind](**params).fit(X_train_treated)


def weight_row(w: OutcomeWeights, x) -> np.ndarray:
    return w.weight_row(x)
