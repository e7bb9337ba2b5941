"""Rayleigh-faded SN-to-CH multiple access channel and the CH-to-FC relay."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

from .geometry import ClusterLayout, PointSample

PerCluster = Union[float, Sequence[float]]


class Scheme(str, Enum):
    """Distributed transmit combining performed by the SNs."""

    DMRTC = "dMRTC"
    DEGTC = "dEGTC"


def _per_cluster(value: PerCluster, n_clusters: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n_clusters, float(arr))
    if arr.shape != (n_clusters,):
        raise ValueError(f"{name}: expected {n_clusters} values, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class ChannelConfig:
    """SN-CH and CH-FC link parameters.

    The per-cluster fields (``ch_powers``, ``ch_noise``, ``fc_noise``) take a
    scalar shared by all clusters or one value per cluster. Noise variances
    may be zero (noiseless links); everything else must be positive.
    """

    scheme: Scheme = Scheme.DEGTC
    path_loss: int = 2
    fading_scale: float = 1 / math.sqrt(2)
    ref_distance: float = 1.0
    sn_power: float = 1.0
    ch_powers: PerCluster = 1.0
    ch_noise: PerCluster = 0.01
    fc_noise: PerCluster = 0.01

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.path_loss not in (2, 4):
            raise ValueError(f"path_loss must be 2 or 4, got {self.path_loss}")
        for name in ("fading_scale", "ref_distance", "sn_power"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("ch_powers", "ch_noise", "fc_noise"):
            value = getattr(self, name)
            if not np.isscalar(value):
                object.__setattr__(self, name, tuple(float(v) for v in value))
            arr = np.asarray(getattr(self, name), dtype=float)
            if name == "ch_powers" and np.any(~(arr > 0)):
                raise ValueError("ch_powers must be positive")
            if np.any(~(arr >= 0)):
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def from_snr(cls, snr_ch_db: float = 20.0, snr_fc_db: float = 20.0, *,
                 sn_power: float = 1.0, ch_power: float = 1.0, **kwargs) -> "ChannelConfig":
        """Noise variances from ``SNR_ch = P_tx / sigma_c^2`` and ``SNR_fc = P_m / sigma_f^2``."""
        return cls(sn_power=sn_power, ch_powers=ch_power,
                   ch_noise=sn_power / 10 ** (snr_ch_db / 10),
                   fc_noise=ch_power / 10 ** (snr_fc_db / 10), **kwargs)

    def ch_power_array(self, n_clusters: int) -> np.ndarray:
        return _per_cluster(self.ch_powers, n_clusters, "ch_powers")

    def ch_noise_array(self, n_clusters: int) -> np.ndarray:
        return _per_cluster(self.ch_noise, n_clusters, "ch_noise")

    def fc_noise_array(self, n_clusters: int) -> np.ndarray:
        return _per_cluster(self.fc_noise, n_clusters, "fc_noise")

    def snr_ch(self, n_clusters: int) -> np.ndarray:
        return self.sn_power / self.ch_noise_array(n_clusters)

    def snr_fc(self, n_clusters: int) -> np.ndarray:
        return self.ch_power_array(n_clusters) / self.fc_noise_array(n_clusters)

    def aggregate_power(self, n_clusters: int) -> np.ndarray:
        """``P~_m = P_tx * P_m``."""
        return self.sn_power * self.ch_power_array(n_clusters)

    def aggregate_noise(self, n_clusters: int) -> np.ndarray:
        """``sigma~_m^2 = P_m sigma_c,m^2 + sigma_f,m^2``."""
        return (self.ch_power_array(n_clusters) * self.ch_noise_array(n_clusters)
                + self.fc_noise_array(n_clusters))

    def equivalent_snr(self, n_clusters: int) -> np.ndarray:
        """``s_m = P~_m / sigma~_m^2``, the end-to-end CH-FC SNR."""
        return self.aggregate_power(n_clusters) / self.aggregate_noise(n_clusters)

    def normalize(self, z) -> np.ndarray:
        """``z~_m = z_m / sqrt(P~_m)``; ``z`` has clusters on the last axis."""
        z = np.asarray(z, dtype=float)
        return z / np.sqrt(self.aggregate_power(z.shape[-1]))


def draw_fading(rng: np.random.Generator, fading_scale: float, size=None):
    """Rayleigh magnitude with ``E|H|^2 = 2 * fading_scale`` and uniform phase."""
    if not fading_scale > 0:
        raise ValueError("fading_scale must be positive")
    magnitude = rng.rayleigh(math.sqrt(fading_scale), size)
    phase = rng.uniform(0.0, 2 * math.pi, size)
    return magnitude, phase


def combine_gain(magnitude, phase, scheme: Scheme):
    """Effective real gain ``H * G`` after SN-side pre-compensation.

    dMRTC transmits with ``G = H*`` giving ``|H|^2``; dEGTC with
    ``G = exp(-j phase)`` giving ``|H|``. The phase cancels in both cases.
    """
    del phase
    magnitude = np.asarray(magnitude, dtype=float)
    if Scheme(scheme) == Scheme.DMRTC:
        return magnitude**2
    return magnitude


def path_gain(distance, alpha: float, ref_distance: float):
    """Amplitude attenuation ``max(r0, d)^(-alpha/2)``."""
    return np.maximum(ref_distance, np.asarray(distance, dtype=float)) ** (-alpha / 2)


def _noiseless_sum(points: np.ndarray, ch_position, cfg: ChannelConfig,
                   rng: np.random.Generator) -> float:
    mag, phase = draw_fading(rng, cfg.fading_scale, len(points))
    dist = np.linalg.norm(points - np.asarray(ch_position, dtype=float), axis=-1)
    return float(np.sum(combine_gain(mag, phase, cfg.scheme)
                        * path_gain(dist, cfg.path_loss, cfg.ref_distance)))


def mac_receive(points: np.ndarray, decisions, ch_position, cfg: ChannelConfig,
                rng: np.random.Generator, m: int = 0, n_clusters: int = 1):
    """Signal at CH ``m`` from the SNs of its cluster.

    Returns ``(Y_m, Ybar_m)`` where ``Ybar_m`` is the noiseless superposition
    of detecting SNs and ``Y_m = sqrt(P_tx) Ybar_m + W_m``. Non-detecting SNs
    stay silent (OOK off). ``decisions=None`` means every point detects.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if decisions is not None:
        points = points[np.asarray(decisions, dtype=bool)]
    ybar = _noiseless_sum(points, ch_position, cfg, rng)
    noise_var = cfg.ch_noise_array(n_clusters)[m]
    y = math.sqrt(cfg.sn_power) * ybar + math.sqrt(noise_var) * rng.standard_normal()
    return y, ybar


def mac_receive_all(sample: PointSample, decisions, layout: ClusterLayout,
                    cfg: ChannelConfig, rng: np.random.Generator):
    """:func:`mac_receive` for every cluster; returns ``(Y, Ybar)`` arrays of shape ``(M,)``.

    Fading for all detecting SNs is drawn in one call, cluster by cluster,
    followed by the ``M`` CH noise samples.
    """
    n = layout.n_clusters
    pts = sample.points
    if decisions is not None:
        pts = [p[np.asarray(d, dtype=bool)] for p, d in zip(pts, decisions)]
    counts = np.array([len(p) for p in pts], dtype=int)
    flat = np.concatenate(pts) if counts.sum() else np.empty((0, 2))
    owner = np.repeat(np.arange(n), counts)
    mag, phase = draw_fading(rng, cfg.fading_scale, len(flat))
    dist = np.linalg.norm(flat - layout.ch_positions[owner], axis=-1)
    contrib = combine_gain(mag, phase, cfg.scheme) * path_gain(dist, cfg.path_loss, cfg.ref_distance)
    ybar = np.bincount(owner, weights=contrib, minlength=n)
    y = math.sqrt(cfg.sn_power) * ybar + np.sqrt(cfg.ch_noise_array(n)) * rng.standard_normal(n)
    return y, ybar


def ch_to_fc(y, cfg: ChannelConfig, rng: np.random.Generator, m: int | None = None,
             n_clusters: int | None = None):
    """Relay ``Z_m = sqrt(P_m) Y_m + V_m``.

    With ``m=None`` ``y`` is the full ``(M,)`` vector of CH signals.
    """
    if m is None:
        y = np.asarray(y, dtype=float)
        n = y.shape[-1]
        return np.sqrt(cfg.ch_power_array(n)) * y + np.sqrt(cfg.fc_noise_array(n)) * rng.standard_normal(n)
    n = n_clusters or 1
    pm = cfg.ch_power_array(n)[m]
    return math.sqrt(pm) * float(y) + math.sqrt(cfg.fc_noise_array(n)[m]) * rng.standard_normal()
