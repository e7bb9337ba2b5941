"""Square region, cluster grid and Poisson point process sampling.

Cells are indexed row-major from the origin corner: cell ``m`` covers
column ``m % k`` and row ``m // k`` of a ``k x k`` grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Region:
    """Axis-aligned square ``[0, side_length]^2``."""

    side_length: float

    def __post_init__(self):
        if not self.side_length > 0:
            raise ValueError(f"side_length must be positive, got {self.side_length}")

    @property
    def area(self) -> float:
        return self.side_length**2

    @property
    def center(self) -> np.ndarray:
        return np.array([self.side_length / 2, self.side_length / 2])

    def contains(self, point) -> bool:
        x, y = np.asarray(point, dtype=float)
        return 0.0 <= x <= self.side_length and 0.0 <= y <= self.side_length


@dataclass(frozen=True)
class ClusterLayout:
    """``grid_dim x grid_dim`` equal square clusters with CHs at cell centers."""

    region: Region
    grid_dim: int

    def __post_init__(self):
        if int(self.grid_dim) != self.grid_dim or self.grid_dim < 1:
            raise ValueError(f"grid_dim must be a positive integer, got {self.grid_dim}")

    @classmethod
    def square(cls, side_length: float = 100.0, grid_dim: int = 1) -> "ClusterLayout":
        return cls(Region(side_length), int(grid_dim))

    @property
    def n_clusters(self) -> int:
        return self.grid_dim**2

    @property
    def cell_side(self) -> float:
        return self.region.side_length / self.grid_dim

    @property
    def cell_area(self) -> float:
        return self.cell_side**2

    def cell_bounds(self, m: int) -> tuple[float, float, float, float]:
        """``(x0, y0, x1, y1)`` of cell ``m``."""
        if not 0 <= m < self.n_clusters:
            raise IndexError(f"cluster index {m} out of range [0, {self.n_clusters})")
        ix, iy = m % self.grid_dim, m // self.grid_dim
        s = self.cell_side
        return (ix * s, iy * s, (ix + 1) * s, (iy + 1) * s)

    @property
    def all_cell_bounds(self) -> np.ndarray:
        return np.array([self.cell_bounds(m) for m in range(self.n_clusters)])

    @property
    def ch_positions(self) -> np.ndarray:
        b = self.all_cell_bounds
        return np.column_stack([(b[:, 0] + b[:, 2]) / 2, (b[:, 1] + b[:, 3]) / 2])

    @property
    def fc_position(self) -> np.ndarray:
        return self.region.center


@dataclass
class PointSample:
    """SN coordinates grouped by cluster; ``points[m]`` has shape ``(n_m, 2)``."""

    points: list[np.ndarray] = field(default_factory=list)

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(p) for p in self.points], dtype=int)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def empty(cls, n_clusters: int) -> "PointSample":
        return cls([np.empty((0, 2)) for _ in range(n_clusters)])


def per_cluster_intensity(intensity, n_clusters: int) -> np.ndarray:
    """Broadcast a scalar or per-cluster intensity to an ``(M,)`` array."""
    lam = np.asarray(intensity, dtype=float)
    if lam.ndim == 0:
        lam = np.full(n_clusters, float(lam))
    if lam.shape != (n_clusters,):
        raise ValueError(f"expected {n_clusters} intensities, got shape {lam.shape}")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("intensities must be finite and non-negative")
    return lam


def sample_ppp(layout: ClusterLayout, intensity, rng: np.random.Generator) -> PointSample:
    """Homogeneous PPP in every cell, with intensity ``intensity[m]`` in cell ``m``."""
    lam = per_cluster_intensity(intensity, layout.n_clusters)
    counts = rng.poisson(lam * layout.cell_area)
    bounds = layout.all_cell_bounds
    points = []
    for m, n in enumerate(counts):
        x0, y0, x1, y1 = bounds[m]
        u = rng.random((n, 2))
        points.append(np.column_stack([x0 + (x1 - x0) * u[:, 0], y0 + (y1 - y0) * u[:, 1]]))
    return PointSample(points)


def sample_annulus_ppp(r_inner: float, r_outer: float, intensity: float,
                       rng: np.random.Generator, center=(0.0, 0.0)) -> np.ndarray:
    """Homogeneous PPP on the annulus ``r_inner <= |x - center| <= r_outer``."""
    if not 0 <= r_inner < r_outer:
        raise ValueError("need 0 <= r_inner < r_outer")
    area = math.pi * (r_outer**2 - r_inner**2)
    n = rng.poisson(intensity * area)
    r = np.sqrt(rng.uniform(r_inner**2, r_outer**2, n))
    theta = rng.uniform(0.0, 2 * math.pi, n)
    return np.column_stack([center[0] + r * np.cos(theta), center[1] + r * np.sin(theta)])


def cluster_of(point: Sequence[float], layout: ClusterLayout) -> int:
    """Index of the cell containing ``point``.

    Points on a shared edge go to the lower-index cell.
    """
    if not layout.region.contains(point):
        raise ValueError(f"point {tuple(point)} lies outside the region")
    s = layout.cell_side
    k = layout.grid_dim

    def axis_index(c: float) -> int:
        return min(max(math.ceil(c / s) - 1, 0), k - 1)

    x, y = (float(c) for c in point)
    return axis_index(y) * k + axis_index(x)


def circumscribed_radius(layout: ClusterLayout) -> np.ndarray:
    """Distance from each CH to its cell corners (half the cell diagonal)."""
    return np.full(layout.n_clusters, layout.cell_side * math.sqrt(2.0) / 2.0)
