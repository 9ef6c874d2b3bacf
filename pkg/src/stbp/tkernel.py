"""Matern temporal covariance on a time grid, with a cached Cholesky factor."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import gamma as gamma_fn
from scipy.special import kv

from .exceptions import NumericalRankError

NUGGET_START = 1e-10
NUGGET_MAX = 1e-6


@dataclass(frozen=True)
class TemporalKernel:
    t_grid: np.ndarray
    kappa: float = 1.0
    rho: float = 0.1
    nu: float = 0.5
    s_exp: float = 1.0
    identity: bool = False
    kind: str = "matern"

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float).ravel()
        object.__setattr__(self, "t_grid", t)
        if t.size == 0 or np.any(np.diff(t) <= 0):
            raise ValueError("t_grid must be non-empty and strictly increasing")
        if self.kappa <= 0 or self.rho <= 0 or self.nu <= 0 or self.s_exp <= 0:
            raise ValueError("kappa, rho, nu and s_exp must be positive")
        if self.kind != "matern":
            raise ValueError(f"unsupported kernel kind {self.kind!r}")

    @property
    def J(self) -> int:
        return self.t_grid.size


def uniform_time_grid(J: int, t0: float = 0.0, t1: float = 1.0) -> np.ndarray:
    """``J`` equispaced points in ``(t0, t1]``."""
    return t0 + (t1 - t0) * np.arange(1, J + 1) / J


def matern_corr(dt, nu: float, rho: float, s_exp: float = 1.0):
    """Unit-variance Matern correlation at lag ``dt``."""
    w = np.sqrt(2 * nu) * (np.abs(dt) / rho) ** s_exp
    if nu == 0.5:
        return np.exp(-w)
    if nu == 1.5:
        return (1 + w) * np.exp(-w)
    if nu == 2.5:
        return (1 + w + w * w / 3) * np.exp(-w)
    out = np.ones_like(w)
    pos = w > 0
    wp = w[pos]
    out[pos] = 2 ** (1 - nu) / gamma_fn(nu) * wp**nu * kv(nu, wp)
    return out


@dataclass(frozen=True)
class KernelFactor:
    cov: np.ndarray
    chol: np.ndarray
    logdet: float
    kernel: TemporalKernel | None = None

    @property
    def J(self) -> int:
        return self.cov.shape[0]

    def solve(self, B):
        return factor_solve(self, B)

    def rescaled(self, kappa: float) -> "KernelFactor":
        """The same correlation structure at variance magnitude ``kappa``."""
        old = self.kernel.kappa if self.kernel is not None else 1.0
        c = kappa / old
        kernel = replace(self.kernel, kappa=kappa) if self.kernel is not None else None
        return KernelFactor(self.cov * c, self.chol * np.sqrt(c), self.logdet + self.J * np.log(c), kernel)

    def eigh(self):
        """Eigen-pairs of the covariance, for diagnostics only."""
        return np.linalg.eigh(self.cov)


def matern_cov(k: TemporalKernel) -> KernelFactor:
    """Assemble and factor the ``J x J`` covariance; ``identity=True`` gives ``kappa * I``."""
    J = k.J
    if k.identity:
        cov = k.kappa * np.eye(J)
        chol = np.sqrt(k.kappa) * np.eye(J)
        return KernelFactor(cov, chol, J * np.log(k.kappa), k)
    dt = k.t_grid[:, None] - k.t_grid[None, :]
    base = k.kappa * matern_corr(dt, k.nu, k.rho, k.s_exp)
    base = 0.5 * (base + base.T)
    nugget = NUGGET_START
    while True:
        cov = base + nugget * k.kappa * np.eye(J)
        try:
            chol = np.linalg.cholesky(cov)
            break
        except np.linalg.LinAlgError:
            nugget *= 2
            if nugget > NUGGET_MAX:
                raise NumericalRankError("kernel matrix is not positive definite after maximal nugget")
    return KernelFactor(cov, chol, 2.0 * float(np.sum(np.log(np.diag(chol)))), k)


def factor_solve(f: KernelFactor, B):
    """``C^{-1} B`` via two triangular solves."""
    B = np.asarray(B, dtype=float)
    if B.shape[0] != f.J:
        raise ValueError(f"dimension mismatch: factor is {f.J}x{f.J}, rhs has {B.shape[0]} rows")
    return cho_solve((f.chol, True), B)


def whiten(f: KernelFactor, B):
    """``L^{-1} B`` for the lower Cholesky factor."""
    return solve_triangular(f.chol, B, lower=True)
