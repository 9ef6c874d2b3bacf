"""Synthetic ground-truth fields: the annulus regression target and dynamic CT phantoms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import SpatialGrid
from .prior import SpaceTimeField


def phantom_annulus(grid: SpatialGrid, t_grid) -> SpaceTimeField:
    """``u(x, t) = t * 1[sin(pi |x|) >= t]``: an annulus that rises and shrinks."""
    t = np.asarray(t_grid, dtype=float)
    r = np.linalg.norm(grid.coords, axis=1)
    values = t[None, :] * (np.sin(np.pi * r)[:, None] >= t[None, :])
    return SpaceTimeField(values, grid, t)


@dataclass
class Shape:
    kind: str  # "disk" or "rect"
    center: tuple[float, float]
    size: tuple[float, float] | float  # radius, or half-widths
    value: float = 1.0
    velocity: tuple[float, float] = (0.0, 0.0)

    def mask(self, coords: np.ndarray, t: float) -> np.ndarray:
        c = np.asarray(self.center) + t * np.asarray(self.velocity)
        d = coords - c
        if self.kind == "disk":
            return np.hypot(d[:, 0], d[:, 1]) <= float(self.size)
        if self.kind == "rect":
            hw = np.broadcast_to(np.asarray(self.size, dtype=float), (2,))
            return (np.abs(d[:, 0]) <= hw[0]) & (np.abs(d[:, 1]) <= hw[1])
        raise ValueError(f"unknown shape kind {self.kind!r}")


@dataclass
class CtPhantomSpec:
    shapes: list = field(default_factory=list)

    @classmethod
    def default(cls) -> "CtPhantomSpec":
        """Static body and insert plus one small disk moving to the right."""
        return cls([
            Shape("disk", (0.0, 0.0), 0.8, 0.5),
            Shape("rect", (-0.1, -0.35), (0.3, 0.12), 0.5),
            Shape("disk", (-0.35, 0.3), 0.2, 0.5, velocity=(0.5, 0.0)),
        ])

    @classmethod
    def from_dicts(cls, items) -> "CtPhantomSpec":
        return cls([Shape(d["kind"], tuple(d["center"]),
                          d["size"] if np.isscalar(d["size"]) else tuple(d["size"]),
                          d.get("value", 1.0), tuple(d.get("velocity", (0.0, 0.0)))) for d in items])


def phantom_dynamic_ct(grid: SpatialGrid, t_grid, spec: CtPhantomSpec | None = None) -> SpaceTimeField:
    """Piecewise-constant shapes in linear motion; values add where shapes overlap."""
    spec = spec or CtPhantomSpec.default()
    t = np.asarray(t_grid, dtype=float)
    X = grid.coords
    values = np.zeros((grid.I, t.size))
    for j, tj in enumerate(t):
        for s in spec.shapes:
            values[s.mask(X, tj), j] += s.value
    return SpaceTimeField(values, grid, t)
