"""
Multivariate q-exponential distribution q-ED_J(mu, C) and its white-noise map.

With ``r = (xi - mu)^T C^{-1} (xi - mu)`` the density is

    p(xi) = q/2 (2 pi)^{-J/2} |C|^{-1/2} r^{(q/2 - 1) J/2} exp(-r^{q/2} / 2)

and ``xi = mu + R L S`` with ``S`` uniform on the sphere, ``R^q ~ chi2(J)``.
The map ``Lambda(zeta) = L zeta |zeta|^{2/q - 1}`` pushes N(0, I_J) forward
to q-ED_J(0, L L^T).

The whitening functions accept a single vector of shape ``(J,)`` or a matrix
of shape ``(J, n)`` whose columns are transformed independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import DegeneratePointError

TINY = 1e-300


@dataclass(frozen=True)
class QedParams:
    q: float
    chol: np.ndarray  # lower-triangular L with C = L L^T
    mean: np.ndarray | None = None

    def __post_init__(self):
        chol = np.atleast_2d(np.asarray(self.chol, dtype=float))
        object.__setattr__(self, "chol", chol)
        if not 1.0 <= self.q <= 2.0:
            raise ValueError(f"q must lie in [1, 2], got {self.q}")
        if chol.shape[0] != chol.shape[1] or np.any(np.diag(chol) <= 0):
            raise ValueError("chol must be square lower-triangular with positive diagonal")
        if self.mean is not None:
            object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))

    @property
    def J(self) -> int:
        return self.chol.shape[0]

    @property
    def logdet_chol(self) -> float:
        return float(np.sum(np.log(np.diag(self.chol))))

    @classmethod
    def from_cov(cls, q, cov, mean=None):
        return cls(q, np.linalg.cholesky(np.atleast_2d(cov)), mean)


def _center(xi, p: QedParams):
    xi = np.asarray(xi, dtype=float)
    if p.mean is None:
        return xi
    return xi - (p.mean if xi.ndim == 1 else p.mean[:, None])


def mahalanobis_sq(xi, p: QedParams):
    """``r = (xi - mu)^T C^{-1} (xi - mu)`` per column."""
    w = solve_triangular(p.chol, _center(xi, p), lower=True)
    return np.sum(w * w, axis=0)


def qed_log_density(xi, p: QedParams):
    """Log density of q-ED_J(mu, C); vectorized over columns of a ``(J, n)`` input."""
    r = mahalanobis_sq(xi, p)
    J = p.J
    out = np.log(p.q / 2) - 0.5 * J * np.log(2 * np.pi) - p.logdet_chol - 0.5 * r ** (p.q / 2)
    if p.q != 2:
        if np.any(r <= 0):
            raise DegeneratePointError("density is singular at xi = mu for q < 2")
        out = out + (p.q / 2 - 1) * (J / 2) * np.log(r)
    return out


def qed_sample(rng: np.random.Generator, p: QedParams, size: int | None = None) -> np.ndarray:
    """
    Draw from q-ED_J(mu, C) via its stochastic representation.

    Returns shape ``(J,)`` for ``size=None`` else ``(size, J)``.
    """
    n = 1 if size is None else int(size)
    z = rng.standard_normal((n, p.J))
    S = z / np.linalg.norm(z, axis=1, keepdims=True)
    R = rng.gamma(p.J / 2, 2.0, size=n) ** (1.0 / p.q)  # R^q ~ chi2(J)
    xi = (R[:, None] * S) @ p.chol.T
    if p.mean is not None:
        xi = xi + p.mean
    return xi[0] if size is None else xi


def _norms(zeta):
    n = np.linalg.norm(zeta, axis=0)
    return np.where(n < TINY, 0.0, n)


def whiten_forward(zeta, p: QedParams):
    """``xi = L zeta |zeta|^{2/q - 1}``; a zero column maps to zero."""
    zeta = np.asarray(zeta, dtype=float)
    a = 2.0 / p.q - 1.0
    if a == 0:
        return p.chol @ zeta
    n = _norms(zeta)
    scale = np.zeros_like(n)
    np.power(n, a, out=scale, where=n > 0)
    return (p.chol @ zeta) * scale


def whiten_inverse(xi, p: QedParams):
    """``zeta = L^{-1} xi |L^{-1} xi|^{q/2 - 1}``; a zero column maps to zero."""
    w = solve_triangular(p.chol, np.asarray(xi, dtype=float), lower=True)
    b = p.q / 2 - 1.0
    if b == 0:
        return w
    n = _norms(w)
    scale = np.zeros_like(n)
    np.power(n, b, out=scale, where=n > 0)
    return w * scale


def _nonzero_norms(zeta, p: QedParams):
    n = _norms(zeta)
    if p.q != 2 and np.any(n == 0):
        raise DegeneratePointError("Jacobian of the whitening map is singular at zeta = 0")
    return n


def whiten_logdet_jacobian(zeta, p: QedParams):
    """
    ``log|det dLambda(zeta)| = log(2/q) + (2/q - 1) J log|zeta| + log det L``.

    The Jacobian is ``|zeta|^a L (I + a zeta zeta^T / |zeta|^2)`` with
    ``a = 2/q - 1``; the rank-one factor has determinant ``1 + a = 2/q``.
    """
    zeta = np.asarray(zeta, dtype=float)
    if p.q == 2:
        n = _norms(zeta)
        return np.full_like(n, p.logdet_chol) if np.ndim(n) else p.logdet_chol
    n = _nonzero_norms(zeta, p)
    a = 2.0 / p.q - 1.0
    return np.log(2.0 / p.q) + a * p.J * np.log(n) + p.logdet_chol


def whiten_jacobian_apply(zeta, v, p: QedParams, transpose: bool = False):
    """Apply ``dLambda(zeta)`` (or its transpose) to ``v``, column by column."""
    zeta = np.asarray(zeta, dtype=float)
    v = np.asarray(v, dtype=float)
    if p.q == 2:
        return p.chol.T @ v if transpose else p.chol @ v
    n = _nonzero_norms(zeta, p)
    a = 2.0 / p.q - 1.0
    if transpose:
        v = p.chol.T @ v
    w = v + a * zeta * (np.sum(zeta * v, axis=0) / n**2)
    w = w * n**a
    return w if transpose else p.chol @ w
