"""
Truncated spatiotemporal Besov prior.

The field on ``I`` sites and ``J`` times is

    U = Phi diag(gamma) Xi^T,        Xi = [xi_1, ..., xi_L]  (J x L)

with ``xi_l ~ q-ED_J(0, C)`` i.i.d. and ``gamma_l = l^{-(s/d + 1/2 - 1/q)}``.
In white-noise coordinates ``Xi = Lambda(Zeta)`` column-wise with
``Zeta`` standard normal. Coefficient and whitened matrices are plain
``(J, L)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisMatrix, SpatialGrid
from .exceptions import DegeneratePointError
from .qed import QedParams, whiten_forward, whiten_inverse
from .tkernel import KernelFactor, whiten

INIT_SCALE = 0.1


def gamma_weights(q: float, s: float, d: int, L: int) -> np.ndarray:
    """Decay weights ``l^{-tau}``, ``tau = s/d + 1/2 - 1/q``, for ``l = 1..L``."""
    if not 1.0 <= q <= 2.0:
        raise ValueError(f"q must lie in [1, 2], got {q}")
    if s <= 0:
        raise ValueError(f"s must be positive, got {s}")
    tau = s / d + 0.5 - 1.0 / q
    return np.arange(1, L + 1, dtype=float) ** (-tau)


@dataclass(frozen=True)
class SpaceTimeField:
    values: np.ndarray  # (I, J)
    grid: SpatialGrid
    t_grid: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.I, len(self.t_grid)):
            raise ValueError(f"field shape {self.values.shape} does not match grid {self.grid.I} x {len(self.t_grid)}")

    def frame(self, j: int) -> np.ndarray:
        return self.values[:, j].reshape(self.grid.nx, self.grid.ny)


@dataclass(frozen=True)
class PriorSpec:
    q: float
    s: float
    basis: BasisMatrix
    kernel: KernelFactor
    grid: SpatialGrid
    d: int = 2
    gamma: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "gamma", gamma_weights(self.q, self.s, self.d, self.basis.L))

    @property
    def L(self) -> int:
        return self.basis.L

    @property
    def J(self) -> int:
        return self.kernel.J

    @property
    def kappa(self) -> float:
        return self.kernel.kernel.kappa if self.kernel.kernel is not None else 1.0

    @property
    def t_grid(self) -> np.ndarray:
        return self.kernel.kernel.t_grid if self.kernel.kernel is not None else np.arange(1, self.J + 1) / self.J

    @property
    def qed(self) -> QedParams:
        return QedParams(self.q, self.kernel.chol)

    def with_kappa(self, kappa: float) -> "PriorSpec":
        return PriorSpec(self.q, self.s, self.basis, self.kernel.rescaled(kappa), self.grid, self.d)

    def field(self, xi: np.ndarray) -> SpaceTimeField:
        """``U = Phi diag(gamma) Xi^T`` wrapped with grid metadata."""
        return SpaceTimeField(synthesize(xi, self), self.grid, self.t_grid)


def synthesize(xi: np.ndarray, spec: PriorSpec) -> np.ndarray:
    return spec.basis.values @ (spec.gamma[:, None] * xi.T)


def analyze(U: np.ndarray, spec: PriorSpec) -> np.ndarray:
    """Least-squares coefficients ``Xi`` of a field; exact for orthonormal bases."""
    return (spec.basis.values.T @ U).T / spec.gamma


def prior_sample(rng: np.random.Generator, spec: PriorSpec):
    """Draw ``Xi`` with i.i.d. q-ED columns and return ``(Xi, field)``."""
    J, L = spec.J, spec.L
    z = rng.standard_normal((J, L))
    S = z / np.linalg.norm(z, axis=0)
    R = rng.gamma(J / 2, 2.0, size=L) ** (1.0 / spec.q)
    xi = spec.kernel.chol @ (S * R)
    return xi, spec.field(xi)


def radii(xi: np.ndarray, spec: PriorSpec) -> np.ndarray:
    """``r_l = xi_l^T C^{-1} xi_l`` for every column."""
    w = whiten(spec.kernel, xi)
    return np.sum(w * w, axis=0)


def prior_neg_log(xi: np.ndarray, spec: PriorSpec) -> float:
    """
    ``(L/2) log|C| - (J/2)(q/2 - 1) sum log r_l + 1/2 sum r_l^{q/2}``.

    This is ``-sum_l log q-ED(xi_l)`` minus ``L [log(q/2) - (J/2) log 2 pi]``.
    """
    J, L, q = spec.J, spec.L, spec.q
    r = radii(xi, spec)
    val = 0.5 * L * spec.kernel.logdet + 0.5 * np.sum(r ** (q / 2))
    if q != 2:
        if np.any(r <= 0):
            raise DegeneratePointError("zero coefficient column under a q < 2 prior")
        val -= 0.5 * J * (q / 2 - 1) * np.sum(np.log(r))
    return float(val)


def prior_neg_log_grad(xi: np.ndarray, spec: PriorSpec) -> np.ndarray:
    J, q = spec.J, spec.q
    r = radii(xi, spec)
    if q != 2 and np.any(r <= 0):
        raise DegeneratePointError("zero coefficient column under a q < 2 prior")
    coef = 0.5 * q * r ** (q / 2 - 1)
    if q != 2:
        coef = coef - J * (q / 2 - 1) / r
    return spec.kernel.solve(xi) * coef


def transform_T(zeta: np.ndarray, spec: PriorSpec) -> SpaceTimeField:
    """Field ``Phi diag(gamma) Lambda(Zeta)^T`` from white-noise coordinates."""
    return spec.field(whiten_forward(zeta, spec.qed))


def transform_T_inverse(xi: np.ndarray, spec: PriorSpec) -> np.ndarray:
    return whiten_inverse(xi, spec.qed)


def init_whitened(rng: np.random.Generator, spec: PriorSpec, scale: float = INIT_SCALE) -> np.ndarray:
    """Optimizer start: scaled standard normal, away from the ``zeta = 0`` singularity."""
    return scale * rng.standard_normal((spec.J, spec.L))


def kappa_posterior_params(xi: np.ndarray, alpha: float, beta: float, spec: PriorSpec):
    """``(alpha', beta')`` of the inverse-gamma law of ``kappa^{q/2}`` given ``Xi``."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    r0 = spec.kappa * radii(xi, spec)  # r_{0,l} uses C_0 = C / kappa
    return alpha + 0.5 * spec.J * spec.L, beta + 0.5 * float(np.sum(r0 ** (spec.q / 2)))


def kappa_gibbs_update(rng, xi, alpha, beta, spec: PriorSpec, mode: bool = False) -> float:
    """
    Draw ``kappa`` from its conditional given ``Xi`` (or return the mode update).

    ``kappa^{q/2} | Xi ~ InvGamma(alpha', beta')``.
    """
    a1, b1 = kappa_posterior_params(xi, alpha, beta, spec)
    if mode:
        return (b1 / (a1 + 1)) ** (2.0 / spec.q)
    kq = b1 / rng.gamma(a1, 1.0)
    return kq ** (2.0 / spec.q)


def build_prior(grid: SpatialGrid, kernel: KernelFactor, q: float = 1.0, s: float = 1.0,
                L: int | None = None, kind: str = "fourier-cosine") -> PriorSpec:
    from .basis import eval_basis

    return PriorSpec(q=q, s=s, basis=eval_basis(grid, L, kind), kernel=kernel, grid=grid)
