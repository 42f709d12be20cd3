"""Seeded simulation designs and the dataset CSV format.

Every design draws the counterfactual ``Y1``, covariates ``X`` that are a
noisy copy of ``Y1``, and a treatment ``A`` whose log-odds depend on ``X``
only.  Control units store an independent placeholder outcome so that the
dataset stays rectangular; the estimator never reads it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import InvalidArgumentError
from .score_models import INTRACTABLE_PRECISION


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    theta_true: np.ndarray | None = None
    propensity_fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        A = np.asarray(self.A)
        if not np.all((A == 0) | (A == 1)):
            raise InvalidArgumentError("treatment must be binary 0/1")
        A = A.astype(np.int64)
        if not (X.shape[0] == A.shape[0] == Y.shape[0]):
            raise InvalidArgumentError("X, A and Y must have the same number of rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InvalidArgumentError("X and Y must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Y", Y)
        if self.theta_true is not None:
            object.__setattr__(self, "theta_true", np.atleast_1d(np.asarray(self.theta_true, float)))

    @property
    def n(self):
        return self.X.shape[0]

    def with_outcomes(self, Y):
        return Dataset(self.X, self.A, Y, self.theta_true, self.propensity_fn)


class DGPKind(str, Enum):
    GAUSSIAN1D = "gaussian1d"
    INTRACTABLE5D = "intractable5d"
    RBM2D = "rbm2d"


@dataclass(frozen=True)
class DGPSpec:
    kind: DGPKind
    n: int
    seed: int = 0
    theta_true: tuple[float, ...] = (1.0, 1.0)  # RBM only
    burn_in: int = 1000  # RBM only

    def sample(self) -> Dataset:
        kind = DGPKind(self.kind)
        if kind is DGPKind.GAUSSIAN1D:
            return sample_gaussian1d(self.n, self.seed)
        if kind is DGPKind.INTRACTABLE5D:
            return sample_intractable5d(self.n, self.seed)
        return sample_rbm2d(self.n, self.theta_true, self.seed, self.burn_in)


def child_seed(seed: int, *key: int) -> int:
    """Deterministic child seed for ``(seed, key...)``, e.g. ``(base, replication)``."""
    return int(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
               .generate_state(1, np.uint64)[0])


def _check_n(n):
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n}")
    return int(n)


def _observe(Y1, Y0, A):
    return np.where(A[:, None] == 1, Y1, Y0)


def gaussian1d_propensity(X):
    return expit(np.asarray(X, dtype=float).reshape(len(X), -1)[:, 0])


def sample_gaussian1d(n: int, seed: int) -> Dataset:
    """``Y1 ~ N(0, 1)``, ``X ~ N(Y1, 1)``, ``A ~ Bernoulli(sigmoid(X))``; truth ``theta = 0``."""
    n = _check_n(n)
    rng = np.random.default_rng(seed)
    Y1 = rng.standard_normal((n, 1))
    X = Y1 + rng.standard_normal((n, 1))
    A = (rng.random(n) < gaussian1d_propensity(X)).astype(np.int64)
    Y0 = rng.standard_normal((n, 1))
    return Dataset(X, A, _observe(Y1, Y0, A), np.zeros(1), gaussian1d_propensity)


def intractable_covariance():
    return np.linalg.inv(INTRACTABLE_PRECISION)


def intractable5d_propensity(X):
    X = np.asarray(X, dtype=float)
    return expit(np.sum(X**2 - 1.0, axis=1))


def sample_intractable5d(n: int, seed: int) -> Dataset:
    """``Y1 ~ N(0, Sigma)``, ``X ~ N(Y1, I_5)``, log-odds ``sum_i (X_i^2 - 1)``; truth ``theta = (0, 0)``."""
    n = _check_n(n)
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(intractable_covariance())
    Y1 = rng.standard_normal((n, 5)) @ chol.T
    X = Y1 + rng.standard_normal((n, 5))
    A = (rng.random(n) < intractable5d_propensity(X)).astype(np.int64)
    Y0 = rng.standard_normal((n, 5))
    return Dataset(X, A, _observe(Y1, Y0, A), np.zeros(2), intractable5d_propensity)


def rbm2d_propensity(X):
    X = np.asarray(X, dtype=float)
    return expit(0.5 * np.sum(X - 0.5, axis=1))


def gibbs_rbm(theta, n: int, burn_in: int, rng, quad: float = 2.0):
    """Gibbs chain for ``exp(h + <theta, y> - quad ||y||^2)`` with ``h in {0, 1}``.

    Returns the visible and hidden states that follow ``burn_in`` discarded
    sweeps.  In this energy ``h`` and ``y`` do not interact, so ``h | y`` is
    ``Bernoulli(sigmoid(1))`` and ``y | h`` is ``N(theta / (2 quad), I / (2 quad))``.
    """
    theta = np.asarray(theta, dtype=float)
    mean = theta / (2.0 * quad)
    sd = np.sqrt(1.0 / (2.0 * quad))
    p_hidden = expit(1.0)
    visible = np.empty((n, theta.size))
    hidden = np.empty(n, dtype=np.int64)
    for t in range(burn_in + n):
        h = int(rng.random() < p_hidden)
        y = mean + sd * rng.standard_normal(theta.size)
        if t >= burn_in:
            visible[t - burn_in] = y
            hidden[t - burn_in] = h
    return visible, hidden


def sample_rbm2d(n: int, theta_true, seed: int, burn_in: int = 1000) -> Dataset:
    """RBM counterfactual, ``X ~ N(Y1, 0.25 I_2)``, log-odds ``0.5 * sum_j (X_j - 0.5)``."""
    n = _check_n(n)
    theta_true = np.asarray(theta_true, dtype=float)
    if theta_true.shape != (2,):
        raise InvalidArgumentError("RBM theta must be 2-dimensional")
    if burn_in < 0:
        raise InvalidArgumentError("burn_in must be non-negative")
    rng = np.random.default_rng(seed)
    Y1, _ = gibbs_rbm(theta_true, n, burn_in, rng)
    X = Y1 + 0.5 * rng.standard_normal((n, 2))
    A = (rng.random(n) < rbm2d_propensity(X)).astype(np.int64)
    Y0 = rng.standard_normal((n, 2))
    return Dataset(X, A, _observe(Y1, Y0, A), theta_true, rbm2d_propensity)


TRUE_PROPENSITY = {
    DGPKind.GAUSSIAN1D: gaussian1d_propensity,
    DGPKind.INTRACTABLE5D: intractable5d_propensity,
    DGPKind.RBM2D: rbm2d_propensity,
}


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def csv_header(dx: int, d: int) -> list[str]:
    return [f"x{i + 1}" for i in range(dx)] + ["a"] + [f"y{i + 1}" for i in range(d)]


def write_csv(dataset: Dataset, path) -> None:
    """Header ``x1..x{dx},a,y1..y{d}``; floats with 17 significant digits."""
    dx, d = dataset.X.shape[1], dataset.Y.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(csv_header(dx, d)) + "\n")
        for x, a, y in zip(dataset.X, dataset.A, dataset.Y):
            fields = [f"{v:.17g}" for v in x] + [str(int(a))] + [f"{v:.17g}" for v in y]
            fh.write(",".join(fields) + "\n")


def read_csv(path) -> Dataset:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidArgumentError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if "a" not in header:
            raise InvalidArgumentError(f"{path}: header lacks the treatment column 'a'")
        ia = header.index("a")
        dx, d = ia, len(header) - ia - 1
        if dx < 1 or d < 1 or header != csv_header(dx, d):
            raise InvalidArgumentError(f"{path}: header must read {','.join(csv_header(max(dx, 1), max(d, 1)))}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InvalidArgumentError(
                    f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            try:
                values = [float(v) for v in row]
            except ValueError:
                raise InvalidArgumentError(f"{path}: row {lineno} contains a non-numeric field") from None
            if values[ia] not in (0.0, 1.0):
                raise InvalidArgumentError(f"{path}: row {lineno} has treatment {row[ia]!r}, expected 0 or 1")
            if not np.all(np.isfinite(values)):
                raise InvalidArgumentError(f"{path}: row {lineno} contains a non-finite value")
            rows.append(values)
    if not rows:
        raise InvalidArgumentError(f"{path}: no data rows")
    data = np.array(rows)
    return Dataset(data[:, :dx], data[:, ia].astype(np.int64), data[:, ia + 1:])
