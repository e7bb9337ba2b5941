"""Target signature, local matched-filter decisions and local error rates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .geometry import ClusterLayout, PointSample, per_cluster_intensity
from .qfunc import q, qinv


class Hypothesis(IntEnum):
    H0 = 0
    H1 = 1


@dataclass(frozen=True)
class TargetParams:
    power: float
    location: tuple[float, float]

    def __post_init__(self):
        if not self.power >= 0:
            raise ValueError(f"target power must be non-negative, got {self.power}")
        object.__setattr__(self, "location", tuple(float(c) for c in self.location))


@dataclass(frozen=True)
class SensingConfig:
    """Local detector: scalar matched filter on ``S = a(x) + N(0, noise_std^2)``."""

    noise_std: float
    threshold: float
    saturation_distance: float = 1.0
    exponent: float = 2.0

    def __post_init__(self):
        if not self.noise_std > 0:
            raise ValueError("noise_std must be positive")
        if not self.saturation_distance > 0:
            raise ValueError("saturation_distance must be positive")
        if not self.exponent > 0:
            raise ValueError("exponent must be positive")
        if math.isnan(self.threshold):
            raise ValueError("threshold must not be NaN")

    @classmethod
    def from_pfa(cls, pfa: float, noise_std: float, **kwargs) -> "SensingConfig":
        return cls(noise_std=noise_std, threshold=threshold_from_pfa(pfa, noise_std), **kwargs)

    @classmethod
    def from_snr(cls, pfa: float, snr_db: float, target_power: float, **kwargs) -> "SensingConfig":
        """Noise level from the sensing SNR ``P_t / sigma_s^2`` given in dB."""
        noise_std = math.sqrt(target_power / 10 ** (snr_db / 10))
        return cls.from_pfa(pfa, noise_std, **kwargs)

    @property
    def pfa(self) -> float:
        return local_pfa(self.threshold, self.noise_std)


def amplitude(x, target: TargetParams, cfg: SensingConfig):
    """Noise-free signature amplitude at location(s) ``x`` of shape ``(..., 2)``."""
    x = np.asarray(x, dtype=float)
    d = np.linalg.norm(x - np.asarray(target.location), axis=-1)
    return math.sqrt(target.power) / np.maximum(cfg.saturation_distance, d) ** (cfg.exponent / 2)


def threshold_from_pfa(pfa: float, noise_std: float) -> float:
    if not 0.0 < pfa < 1.0:
        raise ValueError(f"local false-alarm probability must lie in (0, 1), got {pfa}")
    return noise_std * qinv(pfa)


def local_pfa(threshold: float, noise_std: float) -> float:
    return q(threshold / noise_std)


def local_pd(x, target: TargetParams, cfg: SensingConfig):
    return q((cfg.threshold - amplitude(x, target, cfg)) / cfg.noise_std)


def simulate_decisions(points: PointSample, hypothesis: Hypothesis, target: TargetParams,
                       cfg: SensingConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """Draw each SN's observation and threshold it; one bool array per cluster."""
    decisions = []
    for pts in points.points:
        s = cfg.noise_std * rng.standard_normal(len(pts))
        if hypothesis == Hypothesis.H1 and len(pts):
            s = s + amplitude(pts, target, cfg)
        decisions.append(s > cfg.threshold)
    return decisions


def _nearest_distance(rects: np.ndarray, point) -> np.ndarray:
    px, py = point
    dx = np.maximum(np.maximum(rects[:, 0] - px, px - rects[:, 2]), 0.0)
    dy = np.maximum(np.maximum(rects[:, 1] - py, py - rects[:, 3]), 0.0)
    return np.hypot(dx, dy)


def _subcells(layout: ClusterLayout, subcell_side: float) -> tuple[np.ndarray, int]:
    n = max(1, math.ceil(layout.cell_side / subcell_side))
    h = layout.cell_side / n
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    offs = np.column_stack([i.ravel() * h, j.ravel() * h])
    rects = []
    for x0, y0, _, _ in layout.all_cell_bounds:
        lo = offs + (x0, y0)
        rects.append(np.column_stack([lo, lo + h]))
    return np.concatenate(rects), n * n


def sample_detecting(layout: ClusterLayout, intensity, hypothesis: Hypothesis,
                     target: TargetParams | None, cfg: SensingConfig,
                     rng: np.random.Generator, subcell_side: float = 5.0) -> PointSample:
    """Sample only the SNs whose local decision is 1.

    Uses the thinning property: detecting SNs form a PPP of intensity
    ``lambda_m * P_fa`` under H0 and ``lambda_m * P_d(x)`` under H1. The H1
    process is drawn by rejection from a piecewise-constant dominating
    intensity on a grid of subcells, so the result has the same law as
    :func:`sample_ppp` followed by :func:`simulate_decisions`.
    """
    lam = per_cluster_intensity(intensity, layout.n_clusters)
    if hypothesis == Hypothesis.H0 or target is None:
        counts = rng.poisson(lam * cfg.pfa * layout.cell_area)
        out = []
        for m, n in enumerate(counts):
            x0, y0, x1, y1 = layout.cell_bounds(m)
            u = rng.random((n, 2))
            out.append(np.column_stack([x0 + (x1 - x0) * u[:, 0], y0 + (y1 - y0) * u[:, 1]]))
        return PointSample(out)

    rects, per_cell = _subcells(layout, subcell_side)
    bound = q((cfg.threshold - _bound_amplitude(rects, target, cfg)) / cfg.noise_std)
    area = (rects[:, 2] - rects[:, 0]) * (rects[:, 3] - rects[:, 1])
    counts = rng.poisson(np.repeat(lam, per_cell) * bound * area)
    owner = np.repeat(np.arange(len(rects)), counts)
    u = rng.random((len(owner), 2))
    r = rects[owner]
    pts = np.column_stack([r[:, 0] + (r[:, 2] - r[:, 0]) * u[:, 0],
                           r[:, 1] + (r[:, 3] - r[:, 1]) * u[:, 1]])
    keep = rng.random(len(owner)) * bound[owner] < local_pd(pts, target, cfg)
    cluster = owner[keep] // per_cell
    pts = pts[keep]
    return PointSample([pts[cluster == m] for m in range(layout.n_clusters)])


def _bound_amplitude(rects: np.ndarray, target: TargetParams, cfg: SensingConfig) -> np.ndarray:
    d = _nearest_distance(rects, target.location)
    return math.sqrt(target.power) / np.maximum(cfg.saturation_distance, d) ** (cfg.exponent / 2)
