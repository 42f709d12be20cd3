"""Cross-fitted doubly robust minimum kernel Stein discrepancy estimation.

With clipped propensities ``pi_i``, ``a_i = A_i / pi_i`` and ``b_i = 1 - a_i``,
and a weight matrix ``W`` whose row ``i`` is the out-of-fold outcome
regressor's weight row at ``X_i`` (nonzero only on treated columns of the
other fold), the estimated influence embedding of unit ``i`` is

    phi_i = sum_j M_ij xi(., Y_j),   M = diag(a) + diag(b) W,

so its sample mean is ``(1/n) sum_j c_j xi(., Y_j)`` with ``c = M' 1`` and the
statistic collapses to ``g_n = c' H c / n^2``.  Only treated units carry
weight (``c_j = 0`` whenever ``A_j = 0``), so every Gram matrix below is built
on the treated units alone and control outcomes are never read.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.optimize

from .dgp import Dataset
from .errors import EstimationImpossibleError, InvalidArgumentError, NumericalError
from .kernels import KernelConfig
from .nuisance import OutcomeWeights, PropensityModel
from .score_models import ScoreModel
from .stein import SteinGram, stein_gram, weighted_contractions


class Variant(str, Enum):
    DR = "dr"
    IPW = "ipw"
    PI = "pi"


# --------------------------------------------------------------------------
# cross-fitting
# --------------------------------------------------------------------------

def make_folds(n: int, split: str = "random", seed: int | None = 0) -> np.ndarray:
    """Fold label (0 or 1) per index; fold 0 receives ``ceil(n / 2)`` indices.

    ``split="sequential"`` puts the first ``ceil(n / 2)`` indices in fold 0;
    ``"random"`` does the same on a seeded permutation.
    """
    if n < 2:
        raise EstimationImpossibleError("cross-fitting needs at least two observations")
    first = math.ceil(n / 2)
    folds = np.ones(n, dtype=np.int64)
    if split == "sequential":
        folds[:first] = 0
    elif split == "random":
        folds[np.random.default_rng(seed).permutation(n)[:first]] = 0
    else:
        raise InvalidArgumentError(f"unknown split {split!r}")
    return folds


@dataclass(frozen=True)
class CrossFitPlan:
    """Out-of-fold nuisance evaluations for every index.

    ``pi_hat[i]`` and row ``W[i]`` come from models trained on the fold that
    does not contain ``i``; ``W`` is ``(n, n)`` with nonzeros only in the
    treated columns of that other fold.
    """

    folds: np.ndarray
    pi_hat: np.ndarray
    W: np.ndarray

    @property
    def n(self):
        return self.folds.size


def cross_fit(dataset: Dataset, propensity: PropensityModel, outcome: OutcomeWeights,
              folds: np.ndarray | None = None, split: str = "random",
              seed: int | None = 0) -> CrossFitPlan:
    """Train one clone of each nuisance per fold and evaluate it on the other fold."""
    n = dataset.n
    folds = make_folds(n, split, seed) if folds is None else np.asarray(folds, dtype=np.int64)
    if folds.shape != (n,) or not np.all((folds == 0) | (folds == 1)):
        raise InvalidArgumentError("folds must assign every index to 0 or 1")
    X, A = dataset.X, dataset.A
    pi_hat = np.empty(n)
    W = np.zeros((n, n))
    for train_fold in (0, 1):
        train = np.flatnonzero(folds == train_fold)
        evaluate = np.flatnonzero(folds != train_fold)
        if train.size == 0 or evaluate.size == 0:
            raise EstimationImpossibleError("both folds must be non-empty")
        treated = train[A[train] == 1]
        if treated.size == 0:
            raise EstimationImpossibleError(f"fold {train_fold + 1} has no treated units")
        pi_model = propensity.clone().fit(X[train], A[train])
        pi_hat[evaluate] = pi_model.predict(X[evaluate])
        regressor = outcome.clone().fit(X[treated])
        W[np.ix_(evaluate, treated)] = regressor.weights(X[evaluate])
    return CrossFitPlan(folds, pi_hat, W)


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AssembledWeights:
    a: np.ndarray
    b: np.ndarray
    W: np.ndarray
    c: np.ndarray
    M: np.ndarray
    A: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.a.size

    def combination(self, variant=Variant.DR):
        """``(c, M)`` for the chosen variant: DR, IPW (``M = diag(a)``) or PI (``M = W``)."""
        variant = Variant(variant)
        if variant is Variant.DR:
            return self.c, self.M
        if variant is Variant.IPW:
            return self.a, np.diag(self.a)
        return self.W.sum(axis=0), self.W


def assemble_weights(A, pi_hat, W) -> AssembledWeights:
    A = np.asarray(A, dtype=float)
    pi_hat = np.asarray(pi_hat, dtype=float)
    W = np.asarray(W, dtype=float)
    n = A.size
    if pi_hat.shape != (n,) or W.shape != (n, n):
        raise InvalidArgumentError("A, pi_hat and W have inconsistent shapes")
    if np.any(pi_hat <= 0) or np.any(pi_hat > 1):
        raise InvalidArgumentError("propensities must lie in (0, 1]")
    a = A / pi_hat
    b = 1.0 - a
    c = a + W.T @ b
    M = np.diag(a) + b[:, None] * W
    return AssembledWeights(a, b, W, c, M, A)


def assemble(dataset: Dataset, plan: CrossFitPlan) -> AssembledWeights:
    treated = dataset.A == 1
    for fold in (0, 1):
        if not np.any(treated & (plan.folds == fold)):
            raise EstimationImpossibleError(f"fold {fold + 1} has no treated units")
    return assemble_weights(dataset.A, plan.pi_hat, plan.W)


def support(weights: AssembledWeights) -> np.ndarray:
    """Indices that can carry weight: treated units plus any column ``M`` touches.

    For cross-fitted weights this is exactly the treated set.
    """
    return np.flatnonzero((weights.A == 1) | np.any(weights.M != 0, axis=0))


def scaled_weights(weights: AssembledWeights, variant=Variant.DR, idx=None) -> np.ndarray:
    """``c / n`` for the variant, optionally restricted to the indices ``idx``."""
    c, _ = weights.combination(variant)
    return (c if idx is None else c[idx]) / weights.n


def _checked(weights, gram, variant, idx):
    w = scaled_weights(weights, variant, idx)
    if gram.n != w.size:
        raise InvalidArgumentError("gram size does not match the weights")
    return w


def g_n(weights: AssembledWeights, gram: SteinGram, variant=Variant.DR, idx=None) -> float:
    """``c' H c / n^2``.  ``idx`` names the points the gram was built on (default: all)."""
    w = _checked(weights, gram, variant, idx)
    return float(w @ gram.H @ w)


def grad_g_n(weights: AssembledWeights, gram: SteinGram, variant=Variant.DR, idx=None) -> np.ndarray:
    if gram.dH is None:
        raise InvalidArgumentError("gram must be built with order >= 1")
    w = _checked(weights, gram, variant, idx)
    return np.einsum("i,kij,j->k", w, gram.dH, w)


# --------------------------------------------------------------------------
# minimization
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceStep:
    theta: np.ndarray
    objective: float
    grad_norm: float


@dataclass(frozen=True)
class FitResult:
    theta: np.ndarray
    objective: float
    trace: list
    converged: bool
    variant: Variant
    method: str
    singular: bool = False
    grid_values: np.ndarray | None = None


@dataclass(frozen=True)
class OptimizerSettings:
    """``method``: ``"auto"`` (closed form when the score is affine in theta), ``"quadratic"`` or ``"gd"``."""

    method: str = "auto"
    steps: int = 1000
    step_size: float = 1e-2
    theta0: tuple | None = None
    box: float = 10.0


class Objective:
    """``g_n`` as a function of theta for fixed nuisances.

    For scores affine in theta, one order-2 gram at ``theta = 0`` gives the exact
    quadratic ``g(theta) = r + q'theta + theta' G theta / 2``; otherwise each
    evaluation rebuilds the gram.
    """

    def __init__(self, model: ScoreModel, cfg: KernelConfig, dataset: Dataset,
                 weights: AssembledWeights, variant=Variant.DR):
        self.model, self.cfg = model, cfg
        self.variant = Variant(variant)
        self.weights = weights
        self.idx = support(weights)
        self.Y = dataset.Y[self.idx]
        self.w = scaled_weights(weights, self.variant, self.idx)
        self.quadratic = None
        if model.linear_in_theta:
            gram0 = stein_gram(model, cfg, np.zeros(model.dim_theta), self.Y, order=2)
            self.quadratic = weighted_contractions(gram0, self.w)

    def gram(self, theta, order=0) -> SteinGram:
        return stein_gram(self.model, self.cfg, theta, self.Y, order=order)

    def value(self, theta) -> float:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.quadratic is not None:
            r, q, G = self.quadratic
            return float(r + q @ theta + 0.5 * theta @ G @ theta)
        gram = self.gram(theta)
        return float(self.w @ gram.H @ self.w)

    def gradient(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.quadratic is not None:
            _, q, G = self.quadratic
            return q + G @ theta
        gram = self.gram(theta, order=1)
        return np.einsum("i,kij,j->k", self.w, gram.dH, self.w)

    def values_on(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if self.quadratic is not None:
            r, q, G = self.quadratic
            return r + thetas @ q + 0.5 * np.einsum("gk,kl,gl->g", thetas, G, thetas)
        return np.array([self.value(t) for t in thetas])


def _project(theta, box):
    return np.clip(theta, -box, box)


def _closed_form(obj: Objective, box: float, variant):
    r, q, G = obj.quadratic
    p = q.size
    scale = max(np.linalg.norm(G), np.finfo(float).tiny)
    evals, evecs = np.linalg.eigh(G)
    if evals[0] < -1e-8 * scale:
        raise NumericalError(f"quadratic form has a negative eigenvalue {evals[0]:.3e}")
    singular = evals[-1] <= 0 or evals[0] <= 1e-12 * evals[-1]
    if singular:
        theta = -np.linalg.pinv(G, hermitian=True) @ q
    else:
        theta = -np.linalg.solve(G, q)
    if np.any(np.abs(theta) > box):
        res = scipy.optimize.minimize(obj.value, _project(theta, box), jac=obj.gradient,
                                      method="L-BFGS-B", bounds=[(-box, box)] * p,
                                      options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10_000})
        theta = res.x
    start = np.zeros(p)
    trace = [TraceStep(start, obj.value(start), float(np.linalg.norm(obj.gradient(start)))),
             TraceStep(theta, obj.value(theta), float(np.linalg.norm(obj.gradient(theta))))]
    return FitResult(theta, obj.value(theta), trace, not singular, Variant(variant),
                     "quadratic", singular=bool(singular))


def _gradient_descent(obj: Objective, settings: OptimizerSettings, variant):
    p = obj.model.dim_theta
    theta = np.zeros(p) if settings.theta0 is None else np.asarray(settings.theta0, dtype=float)
    theta = _project(theta, settings.box)
    value = obj.value(theta)
    if not math.isfinite(value):
        raise NumericalError("objective is not finite at the initial point")
    trace = []
    for _ in range(settings.steps):
        grad = obj.gradient(theta)
        trace.append(TraceStep(theta.copy(), value, float(np.linalg.norm(grad))))
        theta = _project(theta - settings.step_size * grad, settings.box)
        value = obj.value(theta)
        if not math.isfinite(value):
            raise NumericalError("objective diverged during gradient descent")
    grad = obj.gradient(theta)
    # projected-gradient stationarity
    step = theta - _project(theta - grad, settings.box)
    trace.append(TraceStep(theta.copy(), value, float(np.linalg.norm(grad))))
    converged = bool(np.linalg.norm(step) <= 1e-6 * max(1.0, np.linalg.norm(theta)))
    return FitResult(theta, value, trace, converged, Variant(variant), "gd")


def minimize(model: ScoreModel, cfg: KernelConfig, dataset: Dataset, plan: CrossFitPlan,
             settings: OptimizerSettings = OptimizerSettings(), variant=Variant.DR,
             objective: Objective | None = None) -> FitResult:
    """``argmin_theta g_n`` over the box ``[-box, box]^p``."""
    obj = objective or Objective(model, cfg, dataset, assemble(dataset, plan), variant)
    method = settings.method
    if method == "auto":
        method = "quadratic" if obj.quadratic is not None else "gd"
    if method == "quadratic":
        if obj.quadratic is None:
            raise InvalidArgumentError("closed-form path needs a score affine in theta")
        return _closed_form(obj, settings.box, obj.variant)
    if method == "gd":
        return _gradient_descent(obj, settings, obj.variant)
    raise InvalidArgumentError(f"unknown optimizer method {method!r}")


def minimize_grid(model: ScoreModel, cfg: KernelConfig, dataset: Dataset, plan: CrossFitPlan,
                  grid, variant=Variant.DR, objective: Objective | None = None) -> FitResult:
    """Exhaustive argmin over a finite set of theta values (ties go to the lowest index)."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise InvalidArgumentError("grid is empty")
    grid = grid.reshape(len(grid), -1)
    if grid.shape[1] != model.dim_theta:
        raise InvalidArgumentError(f"grid points must have {model.dim_theta} coordinates")
    obj = objective or Objective(model, cfg, dataset, assemble(dataset, plan), variant)
    values = obj.values_on(grid)
    best = int(np.argmin(values))
    theta = grid[best].copy()
    trace = [TraceStep(theta, float(values[best]), float("nan"))]
    return FitResult(theta, float(values[best]), trace, True, obj.variant, "grid",
                     grid_values=values)
