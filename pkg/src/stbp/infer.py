"""
MAP estimation (limited-memory BFGS with Armijo backtracking) and
white-noise dimension-independent MCMC (wn-inf-HMC / wn-inf-mMALA).

Samplers work in white-noise coordinates where the prior is N(0, I); the
caller supplies the potential ``Phi`` relative to that reference together
with its gradient.
"""

from __future__ import annotations

import math
import sys
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class MapOptions:
    max_iter: int = 1000
    grad_tol: float = 1e-6
    step_tol: float = 1e-12
    memory: int = 10
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    err_threshold: float | None = None

    def __post_init__(self):
        if self.grad_tol <= 0 or self.step_tol <= 0 or self.memory < 1 or self.max_iter < 1:
            raise ValueError("tolerances, memory and max_iter must be positive")


@dataclass
class MapResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    n_iter: int
    converged: bool
    message: str
    objective_trace: list = field(default_factory=list)
    error_trace: list = field(default_factory=list)


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def map_optimize(fun: Callable, x0: np.ndarray, opts: MapOptions | None = None,
                 error_fn: Callable | None = None, progress=None) -> MapResult:
    """
    Minimize ``fun(x) -> (value, grad)`` from ``x0``.

    Accepted steps satisfy the Armijo condition, so the objective trace is
    monotone. ``error_fn(x)`` (e.g. relative error against a known truth) is
    recorded per iteration and triggers early stopping below
    ``opts.err_threshold``.
    """
    opts = opts or MapOptions()
    shape = np.shape(x0)
    x = np.asarray(x0, dtype=float).ravel().copy()
    f, g = fun(x.reshape(shape))
    g = np.ravel(g)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise FloatingPointError("objective or gradient is not finite at the initial point")
    pairs: deque = deque(maxlen=opts.memory)
    ftrace = [float(f)]
    etrace = [float(error_fn(x.reshape(shape)))] if error_fn else []
    converged, message, it = False, "max_iter reached", 0
    gnorm = float(np.linalg.norm(g))
    for it in range(1, opts.max_iter + 1):
        if gnorm < opts.grad_tol:
            converged, message, it = True, "gradient tolerance reached", it - 1
            break
        d = -_two_loop(g, list(pairs))
        slope = g @ d
        if not slope < 0:
            pairs.clear()
            d = -g
            slope = -gnorm**2
        t = 1.0 if pairs else min(1.0, 1.0 / gnorm)
        for _ in range(opts.max_backtracks):
            x_new = x + t * d
            f_new, g_new = fun(x_new.reshape(shape))
            if np.isfinite(f_new) and f_new <= f + opts.armijo_c * t * slope:
                break
            t *= opts.backtrack
        else:
            message = "line search failed"
            it -= 1
            break
        g_new = np.ravel(g_new)
        s, y = x_new - x, g_new - g
        sy = s @ y
        if sy > 1e-10 * np.sqrt((s @ s) * (y @ y)):
            pairs.append((s, y, 1.0 / sy))
        step = float(np.linalg.norm(s))
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        ftrace.append(float(f))
        if error_fn:
            etrace.append(float(error_fn(x.reshape(shape))))
        if progress is not None:
            progress(it, f, etrace[-1] if etrace else None)
        if error_fn and opts.err_threshold is not None and etrace[-1] < opts.err_threshold:
            converged, message = True, "error threshold reached"
            break
        if step < opts.step_tol * (1.0 + float(np.linalg.norm(x))):
            converged, message = True, "step tolerance reached"
            break
    else:
        converged = gnorm < opts.grad_tol
        if converged:
            message = "gradient tolerance reached"
    return MapResult(x.reshape(shape), float(f), gnorm, it, converged, message, ftrace, etrace)


# ---------------------------------------------------------------------------
# white-noise MCMC


@dataclass
class McmcOptions:
    step_size: float = 0.1
    leapfrog_steps: int = 1
    beta: float = 0.0
    alpha: float = 1.0
    n_samples: int = 1000
    n_burnin: int = 0
    thin: int = 1
    adapt: bool = False
    target_accept: float = 0.65
    rank: int = 20

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.leapfrog_steps < 1 or self.n_samples < 1 or self.n_burnin < 0 or self.thin < 1:
            raise ValueError("leapfrog_steps, n_samples and thin must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")

    @classmethod
    def hmc(cls, **kw):
        return cls(beta=0.0, **kw)

    @classmethod
    def mmala(cls, **kw):
        return cls(leapfrog_steps=1, **kw)


@dataclass
class Chain:
    samples: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    potential: list = field(default_factory=list)
    step_size: float = 0.0

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if self.accepted else 0.0

    def array(self) -> np.ndarray:
        return np.asarray(self.samples)


def leapfrog_step(zeta, eta, g_fun: Callable, eps: float, g0=None):
    """
    One half-kick / rotation / half-kick step.

    ``g_fun(zeta)`` returns the kick direction ``g``; ``g0`` may pass the
    already-known ``g(zeta)``. Returns ``(zeta_eps, eta_eps, g(zeta_eps))``.
    """
    if g0 is None:
        g0 = g_fun(zeta)
    eta_half = eta + 0.5 * eps * g0
    c, s = math.cos(eps), math.sin(eps)
    zeta_new = c * zeta + s * eta_half
    eta_rot = -s * zeta + c * eta_half
    g1 = g_fun(zeta_new)
    return zeta_new, eta_rot + 0.5 * eps * g1, g1


class _LowRankMetric:
    """``K = (I + beta H)^{-1}`` from a rank-``k`` eigendecomposition of ``H``."""

    def __init__(self, vecs, lams, beta):
        self.V = vecs
        self.lam = np.maximum(lams, 0.0)
        self.beta = beta
        self.d = beta * self.lam

    def K(self, v):
        return v - self.V @ ((self.d / (1 + self.d)) * (self.V.T @ v))

    def K_sqrt(self, v):
        return v + self.V @ ((1 / np.sqrt(1 + self.d) - 1) * (self.V.T @ v))

    def H(self, v):
        return self.V @ (self.lam * (self.V.T @ v))

    def half_logdet_Kinv(self):
        return 0.5 * float(np.sum(np.log1p(self.d)))


def randomized_eigh(apply: Callable, n: int, rank: int, rng, oversample: int = 10, power: int = 1):
    """Leading eigenpairs of a symmetric PSD operator from matrix-vector products."""
    k = min(n, rank + oversample)
    Q = np.linalg.qr(np.column_stack([apply(c) for c in rng.standard_normal((k, n))]))[0]
    for _ in range(power):
        Q = np.linalg.qr(np.column_stack([apply(c) for c in Q.T]))[0]
    B = Q.T @ np.column_stack([apply(c) for c in Q.T])
    lam, W = np.linalg.eigh(0.5 * (B + B.T))
    idx = np.argsort(lam)[::-1][:rank]
    return Q @ W[:, idx], lam[idx]


def wn_mcmc_run(potential: Callable, init: np.ndarray, opts: McmcOptions, rng: np.random.Generator,
                gn_hessian: Callable | None = None, progress=None) -> Chain:
    """
    White-noise dimension-independent MCMC.

    ``potential(zeta) -> (Phi, grad Phi)`` relative to the N(0, I)
    reference. With ``beta > 0`` the caller must give
    ``gn_hessian(zeta, v) -> H(zeta) v``; the metric ``K = (I + beta H)^{-1}``
    is built from a low-rank factorization and frozen along each trajectory,
    while the energy terms in ``H`` and ``log|K|`` use each endpoint's own
    metric. ``leapfrog_steps = 1`` gives wn-inf-mMALA, ``beta = 0`` wn-inf-HMC.
    """
    shape = np.shape(init)
    n = int(np.prod(shape))
    zeta = np.asarray(init, dtype=float).ravel().copy()
    beta, alpha = opts.beta, opts.alpha

    def pot(z):
        v, g = potential(z.reshape(shape))
        return float(v), np.ravel(g)

    def metric_at(z):
        if beta == 0:
            return None
        V, lam = randomized_eigh(lambda v: np.ravel(gn_hessian(z.reshape(shape), v.reshape(shape))),
                                 n, opts.rank, rng)
        return _LowRankMetric(V, lam, beta)

    def kick(metric, z, dphi):
        if metric is None:
            return -alpha * dphi
        return -metric.K(alpha * dphi - beta * metric.H(z))

    if beta > 0 and gn_hessian is None:
        raise ValueError("beta > 0 needs a Gauss-Newton Hessian handle")
    phi, dphi = pot(zeta)
    if not np.isfinite(phi):
        raise FloatingPointError("potential is not finite at the initial state")
    metric = metric_at(zeta)

    eps = opts.step_size
    adapt = _DualAveraging(eps, opts.target_accept) if opts.adapt else None
    chain = Chain()
    total = opts.n_burnin + opts.n_samples
    for it in range(total):
        z0 = zeta
        g0 = kick(metric, z0, dphi)
        z = rng.standard_normal(n)
        eta = z if metric is None else metric.K_sqrt(z)
        E = phi - eps**2 / 8 * (g0 @ g0)
        if metric is not None:
            E += 0.5 * beta * (eta @ metric.H(eta)) + metric.half_logdet_Kinv()

        cache = {}

        def g_fun(zz):
            v, d = pot(zz)
            cache["phi"], cache["dphi"] = v, d
            return kick(metric, zz, d)

        zc, ec, gc = z0, eta, g0
        ok = True
        with np.errstate(all="ignore"):
            for _ in range(opts.leapfrog_steps):
                zn, en, gn = leapfrog_step(zc, ec, g_fun, eps, g0=gc)
                E -= 0.5 * eps * ((gc @ ec) + (gn @ en))
                zc, ec, gc = zn, en, gn
                if not (np.isfinite(cache["phi"]) and np.all(np.isfinite(zc))):
                    ok = False
                    break
        if ok:
            phi1, dphi1 = cache["phi"], cache["dphi"]
            E1 = phi1 - eps**2 / 8 * (gc @ gc)
            metric1 = metric
            if metric is not None:
                metric1 = metric_at(zc)
                E1 += 0.5 * beta * (ec @ metric1.H(ec)) + metric1.half_logdet_Kinv()
            dE = E1 - E
            ok = np.isfinite(dE)
        accept = bool(ok and math.log(rng.uniform()) < min(0.0, -dE))
        if accept:
            zeta, phi, dphi, metric = zc, phi1, dphi1, metric1
        a_prob = math.exp(min(0.0, -dE)) if ok else 0.0
        if adapt is not None and it < opts.n_burnin:
            eps = adapt.update(a_prob)
            if it == opts.n_burnin - 1:
                eps = adapt.final()
        if it >= opts.n_burnin:
            chain.accepted.append(accept)
            chain.energy.append(float(dE) if ok else float("inf"))
            chain.potential.append(phi)
            if (it - opts.n_burnin) % opts.thin == 0:
                chain.samples.append(zeta.reshape(shape).copy())
        if progress is not None:
            progress(it, phi, float(np.mean(chain.accepted)) if chain.accepted else float(accept))
    chain.step_size = eps
    return chain


def energy_difference(potential: Callable, zeta, eta, eps: float, n_steps: int):
    """``Delta E`` of one ``beta = 0`` trajectory; also returns the end state."""
    shape = np.shape(zeta)

    def g_fun(z):
        return -np.ravel(potential(z.reshape(shape))[1])

    z, e = np.ravel(zeta).astype(float), np.ravel(eta).astype(float)
    phi0 = float(potential(zeta)[0])
    g = g_fun(z)
    dE = -phi0 + eps**2 / 8 * (g @ g)
    for _ in range(n_steps):
        zn, en, gn = leapfrog_step(z, e, g_fun, eps, g0=g)
        dE += 0.5 * eps * ((g @ e) + (gn @ en))
        z, e, g = zn, en, gn
    dE += float(potential(z.reshape(shape))[0]) - eps**2 / 8 * (g @ g)
    return dE, z.reshape(shape), e.reshape(shape)


class _DualAveraging:
    """Step-size adaptation toward a target acceptance probability."""

    def __init__(self, eps0, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10 * eps0)
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.h = 0.0
        self.t = 0
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0

    def update(self, accept_prob):
        self.t += 1
        w = 1.0 / (self.t + self.t0)
        self.h = (1 - w) * self.h + w * (self.target - accept_prob)
        self.log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h
        # keep the rotation angle below pi/2
        self.log_eps = min(self.log_eps, math.log(1.5))
        eta = self.t ** (-self.kappa)
        self.log_eps_bar = eta * self.log_eps + (1 - eta) * self.log_eps_bar
        return math.exp(self.log_eps)

    def final(self):
        return math.exp(self.log_eps_bar)


def stderr_progress(stream=None, every: int = 10):
    """Progress callback writing ``iter value extra`` lines to ``stream`` (default stderr)."""

    def report(it, value, extra=None):
        if it % every == 0:
            out = stream or sys.stderr
            tail = "" if extra is None else f" {extra:.6g}"
            out.write(f"{it} {value:.10g}{tail}\n")
            out.flush()

    return report
