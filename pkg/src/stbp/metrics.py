"""Reconstruction quality metrics: relative error, PSNR and global SSIM."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import UndefinedMetricError

CSV_FIELDS = ("model", "I", "J", "rle", "psnr", "ssim", "loglik", "seed")


def _values(u):
    return np.asarray(getattr(u, "values", u), dtype=float)


def infty_1_norm(U) -> float:
    """``max_i sum_j |U_ij|``: worst pixel, summed over time."""
    U = np.atleast_2d(U)
    return float(np.max(np.sum(np.abs(U), axis=1)))


def rle(estimate, truth, variant: str = "frobenius") -> float:
    """``|u* - u+| / |u+|`` in the Frobenius or the ``(inf, 1)`` norm."""
    est, tru = _values(estimate), _values(truth)
    if variant == "frobenius":
        norm = np.linalg.norm
    elif variant == "infty_1":
        norm = infty_1_norm
    else:
        raise ValueError(f"unknown norm variant {variant!r}")
    denom = norm(tru)
    if denom == 0:
        raise UndefinedMetricError("relative error is undefined for a zero truth")
    return float(norm(est - tru) / denom)


def psnr(estimate, truth) -> float:
    """``10 log10(|u+|_inf^2 / |u* - u+|_2^2)``; ``inf`` for identical inputs."""
    est, tru = _values(estimate), _values(truth)
    err = float(np.sum((est - tru) ** 2))
    if err == 0:
        return math.inf
    return 10.0 * math.log10(float(np.max(np.abs(tru))) ** 2 / err)


def ssim(estimate, truth, dynamic_range: float | None = None, k1: float = 0.01, k2: float = 0.03) -> float:
    """
    Single-window SSIM over all entries.

    ``dynamic_range`` defaults to ``max(truth) - min(truth)``, or 1 for a
    constant truth so the stabilizers stay positive.
    """
    x, y = _values(estimate).ravel(), _values(truth).ravel()
    if dynamic_range is None:
        dynamic_range = float(np.ptp(y)) or 1.0
    if dynamic_range <= 0:
        raise ValueError("dynamic_range must be positive")
    c1, c2 = (k1 * dynamic_range) ** 2, (k2 * dynamic_range) ** 2
    mx, my = x.mean(), y.mean()
    ddof = 1 if x.size > 1 else 0
    vx, vy = x.var(ddof=ddof), y.var(ddof=ddof)
    cxy = float(np.sum((x - mx) * (y - my)) / (x.size - ddof))
    return float((2 * mx * my + c1) * (2 * cxy + c2) / ((mx**2 + my**2 + c1) * (vx + vy + c2)))


@dataclass
class MetricReport:
    rle: float
    psnr: float
    ssim: float
    log_likelihood: float = float("nan")
    norm_variant: str = "frobenius"


def report(estimate, truth, log_likelihood: float = float("nan"), variant: str = "frobenius") -> MetricReport:
    return MetricReport(rle(estimate, truth, variant), psnr(estimate, truth), ssim(estimate, truth),
                        log_likelihood, variant)


def write_metrics_csv(path, rows) -> None:
    """One row per evaluation with columns ``model, I, J, rle, psnr, ssim, loglik, seed``."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for k, v in row.items() if k in CSV_FIELDS})


def metrics_row(model: str, I: int, J: int, rep: MetricReport, seed: int) -> dict:
    d = asdict(rep)
    return {"model": model, "I": I, "J": J, "rle": d["rle"], "psnr": d["psnr"], "ssim": d["ssim"],
            "loglik": d["log_likelihood"], "seed": seed}
