"""
Spatial grids and truncated spatial bases.

Sites are stored in row-major order: site ``i = ix * ny + iy`` sits at
``(x[ix], y[iy])``, so an ``(nx, ny)`` image reshapes to and from a length
``I = nx * ny`` vector with plain ``reshape``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

KINDS = ("fourier-cosine", "haar-wavelet")
DEFAULT_L = 2000


@dataclass(frozen=True)
class SpatialGrid:
    nx: int
    ny: int
    domain: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)

    @property
    def I(self) -> int:  # noqa: E743
        return self.nx * self.ny

    @property
    def spacing(self) -> tuple[float, float]:
        x0, x1, y0, y1 = self.domain
        return (x1 - x0) / self.nx, (y1 - y0) / self.ny

    @property
    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates along x and y."""
        x0, _, y0, _ = self.domain
        dx, dy = self.spacing
        return x0 + dx * (np.arange(self.nx) + 0.5), y0 + dy * (np.arange(self.ny) + 0.5)

    @property
    def coords(self) -> np.ndarray:
        """``(I, 2)`` array of site coordinates, row-major."""
        x, y = self.axes
        X, Y = np.meshgrid(x, y, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])


def build_grid(nx: int, ny: int, domain=(-1.0, 1.0, -1.0, 1.0)) -> SpatialGrid:
    """Regular grid of ``nx * ny`` cells over the rectangle ``(x0, x1, y0, y1)``."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"grid dimensions must be positive integers, got ({nx}, {ny})")
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate domain {domain}")
    return SpatialGrid(int(nx), int(ny), (x0, x1, y0, y1))


@dataclass(frozen=True)
class BasisMatrix:
    values: np.ndarray  # (I, L)
    order: list[tuple[int, int]] = field(repr=False)
    kind: str = "fourier-cosine"

    @property
    def L(self) -> int:
        return self.values.shape[1]


def _cosine_1d(n: int) -> np.ndarray:
    # orthonormal DCT-II atoms, column k = frequency k
    i = np.arange(n)[:, None] + 0.5
    k = np.arange(n)[None, :]
    C = np.cos(np.pi * k * i / n)
    C[:, 0] *= np.sqrt(1.0 / n)
    C[:, 1:] *= np.sqrt(2.0 / n)
    return C


def _haar_1d(n: int) -> np.ndarray:
    if n & (n - 1):
        raise ValueError(f"haar-wavelet basis needs power-of-two grid sizes, got {n}")
    H = np.zeros((n, n))
    H[:, 0] = 1.0 / np.sqrt(n)
    for k in range(1, n):
        level = int(np.floor(np.log2(k)))
        shift = k - 2**level
        width = n // 2**level
        start = shift * width
        amp = 1.0 / np.sqrt(width)
        H[start:start + width // 2, k] = amp
        H[start + width // 2:start + width, k] = -amp
    return H


def frequency_order(nx: int, ny: int) -> list[tuple[int, int]]:
    """All ``(kx, ky)`` pairs sorted by max, then sum, then lexicographically."""
    pairs = [(kx, ky) for kx in range(nx) for ky in range(ny)]
    pairs.sort(key=lambda k: (max(k), k[0] + k[1], k))
    return pairs


@lru_cache(maxsize=8)
def _atoms(n: int, kind: str) -> np.ndarray:
    A = _cosine_1d(n) if kind == "fourier-cosine" else _haar_1d(n)
    A.setflags(write=False)
    return A


def eval_basis(grid: SpatialGrid, L: int | None = None, kind: str = "fourier-cosine") -> BasisMatrix:
    """
    Evaluate the first ``L`` tensor-product basis functions at the grid sites.

    ``L=None`` uses ``min(2000, I)``. Columns have unit Euclidean norm over
    the grid and column 0 is the constant function.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown basis kind {kind!r}; expected one of {KINDS}")
    if L is None:
        L = min(DEFAULT_L, grid.I)
    if L < 1 or L > grid.I:
        raise ValueError(f"need 1 <= L <= I={grid.I}, got L={L}")
    Ax, Ay = _atoms(grid.nx, kind), _atoms(grid.ny, kind)
    order = frequency_order(grid.nx, grid.ny)[:L]
    kx = np.array([k[0] for k in order])
    ky = np.array([k[1] for k in order])
    # column l = kron(Ax[:, kx], Ay[:, ky]) in row-major site order
    Phi = (Ax[:, None, kx] * Ay[None, :, ky]).reshape(grid.I, L)
    return BasisMatrix(values=Phi, order=order, kind=kind)
