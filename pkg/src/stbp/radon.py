"""
Parallel-beam Radon transform on a pixel grid by Joseph's method.

A ray at angle ``theta`` and detector offset ``s`` is the line
``c + s n + t d`` with ``n = (cos theta, sin theta)``, ``d = (-sin theta, cos theta)``
and ``c`` the domain center. The ray is stepped one pixel row (or column)
at a time along whichever axis it is most aligned with, and the image is
linearly interpolated across the other axis. Weights are assembled once
into a sparse matrix so the back-projection is its exact transpose.

Sinograms have shape ``(n_det, n_angles)``; the matrix row of entry
``(m, k)`` is ``m * n_angles + k``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .basis import SpatialGrid, build_grid


def detector_offsets(grid: SpatialGrid, n_det: int) -> np.ndarray:
    """Equally spaced offsets spanning the domain diagonal, centered on 0."""
    x0, x1, y0, y1 = grid.domain
    diag = np.hypot(x1 - x0, y1 - y0)
    ds = diag / n_det
    return (np.arange(n_det) + 0.5 - n_det / 2) * ds


def _joseph_angle(grid: SpatialGrid, theta: float, offsets: np.ndarray):
    """COO triplets (det index, pixel index, weight) for a single angle."""
    x0, x1, y0, y1 = grid.domain
    dx, dy = grid.spacing
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    xs, ys = grid.axes
    c, s_ = np.cos(theta), np.sin(theta)
    S = offsets[:, None]
    if abs(c) >= abs(s_):
        # ray runs mostly along y: visit every pixel row
        t = (ys[None, :] - cy - S * s_) / c
        across = cx + S * c - t * s_
        f = (across - x0) / dx - 0.5
        length = dy / abs(c)
        n_across = grid.nx
        drive_idx = np.broadcast_to(np.arange(grid.ny)[None, :], f.shape)

        def pixel(ia, idrive):
            return ia * grid.ny + idrive
    else:
        t = -(xs[None, :] - cx - S * c) / s_
        across = cy + S * s_ + t * c
        f = (across - y0) / dy - 0.5
        length = dx / abs(s_)
        n_across = grid.ny
        drive_idx = np.broadcast_to(np.arange(grid.nx)[None, :], f.shape)

        def pixel(ia, idrive):
            return idrive * grid.ny + ia

    i0 = np.floor(f).astype(np.int64)
    w1 = f - i0
    det = np.broadcast_to(np.arange(len(offsets))[:, None], f.shape)
    rows, cols, vals = [], [], []
    for ia, w in ((i0, 1.0 - w1), (i0 + 1, w1)):
        ok = (ia >= 0) & (ia < n_across) & (w > 0)
        rows.append(det[ok])
        cols.append(pixel(ia[ok], drive_idx[ok]))
        vals.append(length * w[ok])
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


@lru_cache(maxsize=64)
def _radon_matrix_cached(grid: SpatialGrid, angles: tuple, n_det: int) -> sp.csr_matrix:
    offsets = detector_offsets(grid, n_det)
    n_a = len(angles)
    rows, cols, vals = [], [], []
    for k, theta in enumerate(angles):
        r, c, v = _joseph_angle(grid, theta, offsets)
        rows.append(r * n_a + k)
        cols.append(c)
        vals.append(v)
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_det * n_a, grid.I),
    ).tocsr()
    A.sum_duplicates()
    return A


def radon_matrix(grid: SpatialGrid, angles, n_det: int) -> sp.csr_matrix:
    """Sparse ``(n_det * n_angles, I)`` projection matrix."""
    if n_det < 1:
        raise ValueError("n_det must be positive")
    return _radon_matrix_cached(grid, tuple(float(a) for a in np.ravel(angles)), int(n_det))


def radon_project(image, angles, n_det: int, domain=(-1.0, 1.0, -1.0, 1.0)) -> np.ndarray:
    """Sinogram ``(n_det, n_angles)`` of an ``(nx, ny)`` image on ``domain``."""
    image = np.asarray(image, dtype=float)
    grid = build_grid(image.shape[0], image.shape[1], domain)
    A = radon_matrix(grid, angles, n_det)
    return (A @ image.ravel()).reshape(n_det, -1)


def radon_backproject(sino, angles, grid: SpatialGrid) -> np.ndarray:
    """Exact adjoint of :func:`radon_project`; returns an ``(nx, ny)`` image."""
    sino = np.asarray(sino, dtype=float)
    angles = np.ravel(angles)
    if sino.ndim != 2 or sino.shape[1] != len(angles):
        raise ValueError(f"sinogram shape {sino.shape} does not match {len(angles)} angles")
    A = radon_matrix(grid, angles, sino.shape[0])
    return (A.T @ sino.ravel()).reshape(grid.nx, grid.ny)
