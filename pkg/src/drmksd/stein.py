"""Stein kernel ``h_theta``, its theta-derivative Gram stacks, and V/U statistics.

For a pair ``(y, y~)`` with scores ``s, s~`` and radial base kernel ``k``::

    h = <s, s~> k + <s~, grad_y k> + <s, grad_y~ k> + tr(grad_y grad_y~ k)

Splitting ``h`` into the bilinear score part ``Q(a, b)_ij = <a_i, b_j> k_ij``
and the part linear in the score ``L(a)_ij = psi_ij <a_j - a_i, y_i - y_j>``
(with ``psi = 2 kappa'(||y_i - y_j||^2)``) gives compact product rules::

    H     = Q(s, s) + L(s) + T
    dH_k  = Q(J_k, s) + Q(s, J_k) + L(J_k)
    d2H_kl = Q(S_kl, s) + Q(s, S_kl) + Q(J_k, J_l) + Q(J_l, J_k) + L(S_kl)

where ``J_k = ds/dtheta_k`` and ``S_kl = d^2 s/dtheta_k dtheta_l``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .kernels import KernelConfig, kernel_grad_second, kernel_mixed_trace, kernel_eval, sq_distances
from .score_models import ScoreModel


def stein_kernel(model: ScoreModel, cfg: KernelConfig, theta, y, y_tilde) -> float:
    """Single evaluation of ``h_theta(y, y~)``, term by term."""
    s = model.score(theta, y)
    s_t = model.score(theta, y_tilde)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    y_tilde = np.atleast_1d(np.asarray(y_tilde, dtype=float))
    k = kernel_eval(cfg, y, y_tilde)
    grad_first = kernel_grad_second(cfg, y_tilde, y)  # k symmetric: grad_y k(y, y~)
    grad_second = kernel_grad_second(cfg, y, y_tilde)
    return float(s @ s_t * k + s_t @ grad_first + s @ grad_second
                 + kernel_mixed_trace(cfg, y, y_tilde))


@dataclass(frozen=True)
class SteinGram:
    """Dense Gram of ``h_theta`` over ``Y`` plus optional derivative stacks.

    ``dH`` has shape ``(p, n, n)`` and ``d2H`` shape ``(p, p, n, n)``; each is
    ``None`` when not requested.
    """

    theta: np.ndarray
    H: np.ndarray
    dH: np.ndarray | None = None
    d2H: np.ndarray | None = None

    @property
    def n(self):
        return self.H.shape[0]

    @property
    def order(self):
        return 0 if self.dH is None else (1 if self.d2H is None else 2)


class _PairGeometry:
    """Kernel pieces of an ``(n, d)`` sample reused by every product-rule term."""

    def __init__(self, cfg: KernelConfig, Y):
        self.Y = Y
        rho = sq_distances(Y, Y)
        self.K, dk, d2k = cfg.profile(rho)
        self.psi = 2.0 * dk
        self.trace = -2.0 * Y.shape[1] * dk - 4.0 * rho * d2k

    def Q(self, a, b):
        return (a @ b.T) * self.K

    def L(self, a):
        # <a_j - a_i, y_i - y_j> = y_i.a_j - a_j.y_j - a_i.y_i + a_i.y_j
        Ya = self.Y @ a.T
        diag = np.einsum("ij,ij->i", a, self.Y)
        return self.psi * (Ya - diag[None, :] - diag[:, None] + Ya.T)


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def stein_gram(model: ScoreModel, cfg: KernelConfig, theta, Y, order: int = 0) -> SteinGram:
    """Gram of ``h_theta(Y_i, Y_j)``; ``order`` 1 and 2 add theta-derivative stacks."""
    if order not in (0, 1, 2):
        raise InvalidArgumentError(f"order must be 0, 1 or 2, got {order}")
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] < 1:
        raise InvalidArgumentError("Y must be a non-empty (n, d) array")
    if Y.shape[1] != model.dim_y:
        raise InvalidArgumentError(f"model expects d={model.dim_y}, data has d={Y.shape[1]}")
    theta = np.atleast_1d(np.asarray(theta, dtype=float)).copy()
    theta.setflags(write=False)

    geo = _PairGeometry(cfg, Y)
    s = model.score(theta, Y)
    H = _sym(geo.Q(s, s) + geo.L(s) + geo.trace)
    if order == 0:
        return SteinGram(theta, H)

    p = model.dim_theta
    J = model.score_jac_theta(theta, Y)  # (n, d, p)
    dH = np.empty((p,) + H.shape)
    for k in range(p):
        Jk = J[:, :, k]
        dH[k] = geo.Q(Jk, s) + geo.Q(s, Jk) + geo.L(Jk)
    dH = _sym(dH)
    if order == 1:
        return SteinGram(theta, H, dH)

    S = model.score_hess_theta(theta, Y)  # (n, p, p, d)
    nonlinear = bool(np.any(S))
    d2H = np.empty((p, p) + H.shape)
    for k in range(p):
        for l in range(k, p):
            block = geo.Q(J[:, :, k], J[:, :, l])
            block = block + block.T
            if nonlinear:
                Skl = S[:, k, l, :]
                block += geo.Q(Skl, s) + geo.Q(s, Skl) + geo.L(Skl)
            d2H[k, l] = d2H[l, k] = block
    return SteinGram(theta, H, dH, _sym(d2H))


def v_statistic(gram: SteinGram) -> float:
    return float(gram.H.mean())


def u_statistic(gram: SteinGram) -> float:
    n = gram.n
    if n < 2:
        raise InvalidArgumentError("U-statistic needs n >= 2")
    H = gram.H
    return float((H.sum() - np.trace(H)) / (n * (n - 1)))


def weighted_contractions(gram: SteinGram, w) -> tuple[float, np.ndarray, np.ndarray]:
    """``(w'Hw, [w'dH_k w]_k, [w'd2H_kl w]_kl)`` for a weight vector over the gram's points.

    With ``w = c / n``, scores affine in theta and a gram built at ``theta = 0``
    these give ``g(theta) = r + q @ theta + 0.5 theta' G theta`` exactly.
    """
    if gram.d2H is None:
        raise InvalidArgumentError("gram must be built with order=2")
    w = np.asarray(w, dtype=float)
    r = float(w @ gram.H @ w)
    q = np.einsum("i,kij,j->k", w, gram.dH, w)
    G = np.einsum("i,klij,j->kl", w, gram.d2H, w)
    return r, q, 0.5 * (G + G.T)
