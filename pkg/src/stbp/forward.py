"""
Per-time-step linear observation operators, Gaussian noise, and the
negative log-posterior in white-noise coordinates with its gradient.

Observations are a list of ``J`` data vectors ``y_j`` (lengths may differ).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve

from .basis import SpatialGrid
from .prior import PriorSpec, prior_neg_log, prior_neg_log_grad, synthesize
from .qed import whiten_forward, whiten_jacobian_apply, whiten_logdet_jacobian
from .radon import radon_matrix


class ForwardOp:
    """
    A linear map ``A_j`` per time step, stored as (sparse) matrices.

    ``mats`` may hold a single matrix shared by every step or one per step.
    """

    def __init__(self, mats, J: int, kind: str = "selection"):
        mats = list(mats) if isinstance(mats, (list, tuple)) else [mats]
        if len(mats) not in (1, J):
            raise ValueError(f"need 1 or J={J} operator matrices, got {len(mats)}")
        self.mats = [sp.csr_matrix(M) for M in mats]
        self.J = J
        self.kind = kind
        self.shared = len(self.mats) == 1
        self.I = self.mats[0].shape[1]

    def mat(self, j: int):
        return self.mats[0] if self.shared else self.mats[j]

    def out_sizes(self) -> list[int]:
        return [self.mat(j).shape[0] for j in range(self.J)]

    def apply(self, U: np.ndarray) -> list[np.ndarray]:
        """``[A_j u_j]`` for the columns of an ``(I, J)`` field."""
        if self.shared:
            Y = self.mats[0] @ U
            return [Y[:, j] for j in range(self.J)]
        return [self.mats[j] @ U[:, j] for j in range(self.J)]

    def adjoint(self, R: Sequence[np.ndarray]) -> np.ndarray:
        """``[A_j^T r_j]`` stacked into an ``(I, J)`` array."""
        if self.shared:
            return np.asarray(self.mats[0].T @ np.column_stack(R))
        return np.column_stack([self.mats[j].T @ R[j] for j in range(self.J)])


def selection_op(I: int, J: int, indices=None) -> ForwardOp:
    """Observe the pixels in ``indices`` (all pixels by default) at every step."""
    if indices is None:
        M = sp.identity(I, format="csr")
    else:
        indices = np.asarray(indices)
        M = sp.csr_matrix((np.ones(len(indices)), (np.arange(len(indices)), indices)), shape=(len(indices), I))
    return ForwardOp(M, J, kind="selection")


def radon_op(grid: SpatialGrid, angles, n_det: int, J: int) -> ForwardOp:
    """
    Radon operator per time step.

    ``angles`` is either one angle vector shared by all steps or a ``(J, n_a)``
    array giving each step its own geometry.
    """
    angles = np.asarray(angles, dtype=float)
    if angles.ndim == 1:
        return ForwardOp(radon_matrix(grid, angles, n_det), J, kind="radon")
    if angles.shape[0] != J:
        raise ValueError(f"per-step angles need {J} rows, got {angles.shape[0]}")
    return ForwardOp([radon_matrix(grid, a, n_det) for a in angles], J, kind="radon")


class NoiseModel:
    """
    Gaussian noise with covariance ``sigma2 * I`` (scalar or one scalar per
    step) or a full SPD matrix shared by every step.
    """

    def __init__(self, sigma2=None, cov=None):
        if (sigma2 is None) == (cov is None):
            raise ValueError("give exactly one of sigma2 or cov")
        self.cov = None
        self.sigma2 = None
        if cov is not None:
            cov = np.asarray(cov, dtype=float)
            self.cov = cov
            self.chol = np.linalg.cholesky(cov)
            self._logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        else:
            self.sigma2 = np.asarray(sigma2, dtype=float)
            if np.any(self.sigma2 <= 0):
                raise ValueError("noise variance must be positive")

    @classmethod
    def isotropic(cls, sigma: float) -> "NoiseModel":
        return cls(sigma2=float(sigma) ** 2)

    def _s2(self, j):
        return float(self.sigma2) if self.sigma2.ndim == 0 else float(self.sigma2[j])

    def solve(self, r: np.ndarray, j: int) -> np.ndarray:
        """``Gamma_j^{-1} r``."""
        if self.cov is not None:
            return cho_solve((self.chol, True), r)
        return r / self._s2(j)

    def logdet(self, m: int, j: int) -> float:
        if self.cov is not None:
            if self.cov.shape[0] != m:
                raise ValueError(f"noise covariance is {self.cov.shape[0]}x{self.cov.shape[0]}, data has length {m}")
            return self._logdet
        return m * np.log(self._s2(j))

    def sample(self, rng: np.random.Generator, m: int, j: int) -> np.ndarray:
        z = rng.standard_normal(m)
        if self.cov is not None:
            return self.chol @ z
        return np.sqrt(self._s2(j)) * z


@dataclass
class Observations:
    data: list
    t_grid: np.ndarray

    def __post_init__(self):
        self.data = [np.asarray(y, dtype=float) for y in self.data]
        if len(self.data) != len(self.t_grid):
            raise ValueError("need one data vector per time step")

    @property
    def J(self) -> int:
        return len(self.data)


def simulate(rng, U: np.ndarray, op: ForwardOp, noise: NoiseModel, t_grid) -> Observations:
    clean = op.apply(U)
    return Observations([y + noise.sample(rng, y.size, j) for j, y in enumerate(clean)], t_grid)


class PosteriorTerms(NamedTuple):
    misfit: float
    noise_logdet: float
    prior: float
    jacobian: float

    @property
    def total(self) -> float:
        return self.misfit + self.noise_logdet + self.prior + self.jacobian


def misfit(U: np.ndarray, obs: Observations, op: ForwardOp, noise: NoiseModel) -> float:
    """``1/2 sum_j |y_j - A_j u_j|^2_Gamma``."""
    res = [y - Au for y, Au in zip(obs.data, op.apply(U))]
    return 0.5 * float(sum(r @ noise.solve(r, j) for j, r in enumerate(res)))


def misfit_grad_field(U, obs, op, noise) -> np.ndarray:
    """Gradient of the misfit w.r.t. the field, ``(I, J)``."""
    res = [Au - y for y, Au in zip(obs.data, op.apply(U))]
    return op.adjoint([noise.solve(r, j) for j, r in enumerate(res)])


def noise_logdet_term(obs: Observations, noise: NoiseModel) -> float:
    """``1/2 sum_j log|Gamma_j|`` (``(J/2) log|Gamma|`` for a shared covariance)."""
    return 0.5 * float(sum(noise.logdet(y.size, j) for j, y in enumerate(obs.data)))


def posterior_terms(zeta, obs, op, noise, spec: PriorSpec, jacobian: bool = False) -> PosteriorTerms:
    xi = whiten_forward(zeta, spec.qed)
    U = synthesize(xi, spec)
    jac = -float(np.sum(whiten_logdet_jacobian(zeta, spec.qed))) if jacobian else 0.0
    return PosteriorTerms(misfit(U, obs, op, noise), noise_logdet_term(obs, noise), prior_neg_log(xi, spec), jac)


def neg_log_post(zeta, obs, op, noise, spec: PriorSpec, jacobian: bool = False) -> float:
    """
    Negative log-posterior of the whitened coefficients ``Zeta`` (``J x L``).

    With ``jacobian=True`` the term ``-log|dT(Zeta)|`` is added, giving the
    density of ``Zeta`` itself; the default omits it (MAP objective).
    """
    return posterior_terms(zeta, obs, op, noise, spec, jacobian).total


def neg_log_post_xi(xi, obs, op, noise, spec: PriorSpec) -> float:
    """The same objective written in the original coefficients ``Xi``."""
    U = synthesize(xi, spec)
    return misfit(U, obs, op, noise) + noise_logdet_term(obs, noise) + prior_neg_log(xi, spec)


def grad_xi(xi, obs, op, noise, spec: PriorSpec, prior: bool = True) -> np.ndarray:
    """Gradient of the ``Xi``-form objective (misfit only when ``prior=False``)."""
    G = misfit_grad_field(synthesize(xi, spec), obs, op, noise)
    g = (G.T @ spec.basis.values) * spec.gamma
    if prior:
        g = g + prior_neg_log_grad(xi, spec)
    return g


def grad_neg_log_post(zeta, obs, op, noise, spec: PriorSpec, jacobian: bool = False) -> np.ndarray:
    """Gradient of :func:`neg_log_post` by the chain rule through ``Lambda``."""
    xi = whiten_forward(zeta, spec.qed)
    g = whiten_jacobian_apply(zeta, grad_xi(xi, obs, op, noise, spec), spec.qed, transpose=True)
    if jacobian and spec.q != 2:
        a = 2.0 / spec.q - 1.0
        g = g - a * spec.J * zeta / np.sum(zeta * zeta, axis=0)
    return g


def objective(obs, op, noise, spec: PriorSpec, jacobian: bool = False):
    """``f(z) -> (value, gradient)`` on flattened whitened coordinates."""
    shape = (spec.J, spec.L)

    def f(z):
        zeta = z.reshape(shape)
        return (neg_log_post(zeta, obs, op, noise, spec, jacobian),
                grad_neg_log_post(zeta, obs, op, noise, spec, jacobian).ravel())

    return f


def whitened_potential(obs, op, noise, spec: PriorSpec):
    """
    Potential of the posterior relative to the white-noise reference N(0, I).

    ``neg_log_post(jacobian=True) - |Zeta|^2/2`` equals the misfit plus a
    constant, so the potential handed to the sampler is the misfit alone.
    Returns ``f(zeta) -> (value, gradient)`` on ``(J, L)`` arrays.
    """

    def f(zeta):
        xi = whiten_forward(zeta, spec.qed)
        U = synthesize(xi, spec)
        val = misfit(U, obs, op, noise)
        G = misfit_grad_field(U, obs, op, noise)
        gxi = (G.T @ spec.basis.values) * spec.gamma
        return val, whiten_jacobian_apply(zeta, gxi, spec.qed, transpose=True)

    return f


def gauss_newton_apply(zeta, v, op, noise, spec: PriorSpec) -> np.ndarray:
    """Gauss-Newton Hessian of the misfit in whitened coordinates applied to ``v``."""
    dxi = whiten_jacobian_apply(zeta, v, spec.qed)
    dU = synthesize(dxi, spec)
    W = op.adjoint([noise.solve(r, j) for j, r in enumerate(op.apply(dU))])
    gxi = (W.T @ spec.basis.values) * spec.gamma
    return whiten_jacobian_apply(zeta, gxi, spec.qed, transpose=True)


def log_likelihood(U, obs, op, noise) -> float:
    """Gaussian log-likelihood of the data, all constants included."""
    m = sum(y.size for y in obs.data)
    return -misfit(U, obs, op, noise) - noise_logdet_term(obs, noise) - 0.5 * m * np.log(2 * np.pi)
