"""First and second order statistics of the CH and FC signals, moment
matching, deflection, single-cluster performance and received-power laws.

All spatial integrals clamp the SN-CH distance at ``r0``, matching the
simulator, so every kernel is bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import interpolate, signal

from .channel import ChannelConfig, Scheme
from .geometry import ClusterLayout, per_cluster_intensity
from .qfunc import q, qinv
from .quadrature import integrate_rectangle
from .sensing import SensingConfig, TargetParams, amplitude

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class CombinerMoments:
    m1: float  # E[f(H)]
    m2: float  # E[f(H)^2]

    @property
    def variance(self) -> float:
        return self.m2 - self.m1**2


def combiner_moments(scheme: Scheme, fading_scale: float) -> CombinerMoments:
    """Moments of the combined gain for Rayleigh ``|H|`` with scale^2 ``fading_scale``.

    ``|H|`` is Rayleigh, ``|H|^2`` exponential with mean ``2 fading_scale``.
    """
    if not fading_scale > 0:
        raise ValueError("fading_scale must be positive")
    if Scheme(scheme) == Scheme.DMRTC:
        return CombinerMoments(2 * fading_scale, 8 * fading_scale**2)
    return CombinerMoments(math.sqrt(fading_scale) * math.sqrt(math.pi / 2), 2 * fading_scale)


def combining_gain(scheme: Scheme) -> float:
    """Transmit combining gain ``E^2[f(H)] / E[f^2(H)]``."""
    return 0.5 if Scheme(scheme) == Scheme.DMRTC else math.pi / 4


@dataclass(frozen=True)
class ClusterIntegrals:
    """Thinned kernel integrals over one cell.

    ``mu*`` use the amplitude kernel ``max(r0, r)^(-alpha/2)``, ``sigma*`` the
    power kernel ``max(r0, r)^(-alpha)``; suffix 0/1 is the hypothesis.
    """

    mu0: float
    mu1: float
    sigma0: float
    sigma1: float

    @property
    def mu(self) -> np.ndarray:
        return np.array([self.mu0, self.mu1])

    @property
    def sigma(self) -> np.ndarray:
        return np.array([self.sigma0, self.sigma1])


def cluster_integrals(cell, ch, alpha: float, r0: float, sensing: SensingConfig,
                      target: TargetParams | None = None, tol: float = DEFAULT_TOL) -> ClusterIntegrals:
    """Integrals for a rectangular ``cell = (x0, y0, x1, y1)`` served by a CH at ``ch``.

    Under H0 the thinning probability is the constant local false-alarm
    rate; under H1 it is the local detection probability field of
    ``target``. Without a target the H1 values equal the H0 ones.
    """
    cx, cy = (float(c) for c in ch)
    pfa = sensing.pfa

    if target is None:
        def f(x, y):
            r = np.maximum(r0, np.hypot(x - cx, y - cy))
            return np.stack([r ** (-alpha / 2), r ** (-alpha)])
    else:
        def f(x, y):
            r = np.maximum(r0, np.hypot(x - cx, y - cy))
            kh, kf = r ** (-alpha / 2), r ** (-alpha)
            pd = q((sensing.threshold - amplitude(np.stack([x, y], axis=-1), target, sensing))
                   / sensing.noise_std)
            return np.stack([kh, kf, kh * pd, kf * pd])

    res = integrate_rectangle(f, cell, rtol=tol)
    mu0, sigma0 = pfa * res.value[0], pfa * res.value[1]
    if target is None:
        return ClusterIntegrals(mu0, mu0, sigma0, sigma0)
    return ClusterIntegrals(mu0, float(res.value[2]), sigma0, float(res.value[3]))


def ybar_moments(intensity: float, cm: CombinerMoments, ints: ClusterIntegrals):
    """Mean and variance of the noiseless CH signal under (H0, H1), each shape ``(2,)``."""
    return intensity * cm.m1 * ints.mu, intensity * cm.m2 * ints.sigma


def fc_moments(ybar_mean, ybar_var, sn_power, ch_power, ch_noise, fc_noise):
    """Map noiseless CH moments to moments of the FC observation ``Z_m``."""
    p_agg = sn_power * ch_power
    mean = np.sqrt(p_agg) * np.asarray(ybar_mean, dtype=float)
    var = p_agg * np.asarray(ybar_var, dtype=float) + ch_power * ch_noise + fc_noise
    return mean, var


def lognormal_match(mean, var):
    """Log-domain parameters ``(mu_hat, sigma2_hat)`` of the lognormal with the given moments."""
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    if np.any(~(mean > 0)):
        raise ValueError("lognormal fit needs a strictly positive mean")
    if np.any(var < 0):
        raise ValueError("variance must be non-negative")
    ratio = var / mean**2
    mu_hat = 2 * np.log(mean) - 0.5 * np.log(mean**2 + var)
    s2_hat = np.log1p(ratio)
    if mu_hat.ndim == 0:
        return float(mu_hat), float(s2_hat)
    return mu_hat, s2_hat


@dataclass(frozen=True)
class MomentSummary:
    """Per-cluster, per-hypothesis moments; arrays have shape ``(..., M, 2)``.

    ``log_mean`` / ``log_var`` are NaN wherever the FC mean is not positive.
    """

    ybar_mean: np.ndarray
    ybar_var: np.ndarray
    mean: np.ndarray
    var: np.ndarray

    @cached_property
    def _log(self):
        ok = self.mean > 0
        safe_mean = np.where(ok, self.mean, 1.0)
        mu_hat, s2_hat = lognormal_match(safe_mean, np.where(ok, self.var, 0.0))
        return np.where(ok, mu_hat, np.nan), np.where(ok, s2_hat, np.nan)

    @property
    def log_mean(self) -> np.ndarray:
        return self._log[0]

    @property
    def log_var(self) -> np.ndarray:
        return self._log[1]

    @property
    def n_clusters(self) -> int:
        return self.mean.shape[-2]

    @classmethod
    def from_ybar(cls, ybar_mean, ybar_var, channel: ChannelConfig) -> "MomentSummary":
        ybar_mean = np.asarray(ybar_mean, dtype=float)
        ybar_var = np.asarray(ybar_var, dtype=float)
        n = ybar_mean.shape[-2]
        mean, var = fc_moments(ybar_mean, ybar_var, channel.sn_power,
                               channel.ch_power_array(n)[:, None],
                               channel.ch_noise_array(n)[:, None],
                               channel.fc_noise_array(n)[:, None])
        return cls(ybar_mean, ybar_var, mean, var)


def layout_integrals(layout: ClusterLayout, alpha: float, r0: float, sensing: SensingConfig,
                     target: TargetParams | None, tol: float = DEFAULT_TOL) -> list[ClusterIntegrals]:
    return [cluster_integrals(layout.cell_bounds(m), layout.ch_positions[m], alpha, r0,
                              sensing, target, tol) for m in range(layout.n_clusters)]


def moment_summary(layout: ClusterLayout, intensity, sensing: SensingConfig,
                   channel: ChannelConfig, target: TargetParams | None,
                   tol: float = DEFAULT_TOL) -> MomentSummary:
    """Moments for every cluster with the target at a known location."""
    lam = per_cluster_intensity(intensity, layout.n_clusters)
    cm = combiner_moments(channel.scheme, channel.fading_scale)
    ints = layout_integrals(layout, channel.path_loss, channel.ref_distance, sensing, target, tol)
    mus, vs = zip(*(ybar_moments(lam[m], cm, ints[m]) for m in range(layout.n_clusters)))
    return MomentSummary.from_ybar(np.array(mus), np.array(vs), channel)


class ExcessIntegralTable:
    """H1-minus-H0 kernel integrals tabulated over target offsets from the CH.

    All cells of a layout are congruent with the CH at the center, so
    ``I_1(x_t) - I_0`` depends only on ``x_t - x_m``. The table is the
    midpoint-rule cross-correlation of the clamped kernel over one cell with
    the radial excess detection probability ``P_d - P_fa``, computed by FFT
    on a grid of pitch ``spacing``, then interpolated bilinearly. Accuracy is
    about 1e-4 relative at the default pitch; use :func:`cluster_integrals`
    where full accuracy matters.
    """

    def __init__(self, layout: ClusterLayout, alpha: float, r0: float, sensing: SensingConfig,
                 target_power: float, spacing: float = 0.1):
        s = layout.cell_side
        n_s = max(2, 2 * round(s / spacing / 2))
        h = s / n_s
        half_range = layout.region.side_length - s / 2
        n_d = int(round(2 * half_range / h)) + 1
        u = (np.arange(n_s) + 0.5) * h - s / 2
        r = np.maximum(r0, np.hypot(u[:, None], u[None, :]))
        n_b = n_s + n_d - 1
        v = -half_range - s / 2 + (np.arange(n_b) + 0.5) * h
        dist = np.hypot(v[:, None], v[None, :])
        a = math.sqrt(target_power) / np.maximum(sensing.saturation_distance, dist) ** (sensing.exponent / 2)
        excess = q((sensing.threshold - a) / sensing.noise_std) - sensing.pfa
        grid = -half_range + np.arange(n_d) * h
        self.offsets = grid
        self._interp = []
        for p in (alpha / 2, alpha):
            kernel = r ** (-p) * h * h
            table = signal.correlate(excess, kernel, mode="valid", method="fft")[::-1, ::-1]
            self._interp.append(interpolate.RegularGridInterpolator((grid, grid), table,
                                                                    method="linear"))

    def __call__(self, offsets):
        """Excess ``(mu, sigma)`` integrals at offsets of shape ``(..., 2)``."""
        offsets = np.asarray(offsets, dtype=float)
        return self._interp[0](offsets), self._interp[1](offsets)


def moment_summary_batch(layout: ClusterLayout, intensity, sensing: SensingConfig,
                         channel: ChannelConfig, locations, table: ExcessIntegralTable,
                         base: ClusterIntegrals | None = None) -> MomentSummary:
    """Moments for many target locations at once; shape ``(T, M, 2)``."""
    lam = per_cluster_intensity(intensity, layout.n_clusters)
    cm = combiner_moments(channel.scheme, channel.fading_scale)
    if base is None:
        base = cluster_integrals(layout.cell_bounds(0), layout.ch_positions[0],
                                 channel.path_loss, channel.ref_distance, sensing, None)
    locations = np.asarray(locations, dtype=float).reshape(-1, 2)
    offsets = locations[:, None, :] - layout.ch_positions[None, :, :]
    exc_mu, exc_sigma = table(offsets)
    mu = np.stack([np.full_like(exc_mu, base.mu0), base.mu0 + exc_mu], axis=-1)
    sg = np.stack([np.full_like(exc_sigma, base.sigma0), base.sigma0 + exc_sigma], axis=-1)
    ybar_mean = lam[None, :, None] * cm.m1 * mu
    ybar_var = lam[None, :, None] * cm.m2 * sg
    return MomentSummary.from_ybar(ybar_mean, ybar_var, channel)


def deflection(intensity: float, scheme: Scheme, ints: ClusterIntegrals) -> float:
    """Deflection coefficient ``lambda g_tc (I_mu1 - I_mu0)^2 / I_sigma1``."""
    if not ints.sigma1 > 0:
        raise ValueError("deflection undefined for a zero H1 variance integral")
    return intensity * combining_gain(scheme) * (ints.mu1 - ints.mu0) ** 2 / ints.sigma1


def single_cluster_performance(pfa_target: float, mean0: float, std0: float,
                               mean1: float, std1: float) -> tuple[float, float]:
    """Threshold and detection probability of ``Z > Gamma`` under Gaussian fits."""
    if not (std0 > 0 and std1 > 0):
        raise ValueError("standard deviations must be positive")
    gamma = std0 * qinv(pfa_target) + mean0
    return gamma, q((mean0 - mean1 + std0 * qinv(pfa_target)) / std1)


def avg_received_power(intensity: float, sn_power: float, cm: CombinerMoments,
                       ints: ClusterIntegrals) -> float:
    """Mean H0 received power ``P_tx E[Ybar^2]`` at a CH."""
    return sn_power * (intensity**2 * cm.m1**2 * ints.mu0**2 + intensity * cm.m2 * ints.sigma0)


def _power_constants(pfa: float, cm: CombinerMoments) -> tuple[float, float]:
    k1 = 2 * math.pi * pfa * cm.m2
    k2 = 4 * math.pi**2 * pfa**2 * cm.m1**2
    return k1, k2


def power_circular_exact(R: float, r0: float, intensity: float, sn_power: float, alpha: int,
                         pfa: float, cm: CombinerMoments) -> float:
    """Mean H0 received power for SNs on the annulus ``r0 <= r <= R`` around the CH."""
    if not (R >= r0 > 0):
        raise ValueError("need R >= r0 > 0")
    k1, k2 = _power_constants(pfa, cm)
    lam = intensity
    if alpha == 2:
        return lam * sn_power * (k1 * math.log(R / r0) + lam * k2 * (R - r0) ** 2)
    if alpha == 4:
        return lam * sn_power * (k1 * (R**2 - r0**2) / (2 * R**2 * r0**2)
                                 + lam * k2 * math.log(R / r0) ** 2)
    raise ValueError(f"alpha must be 2 or 4, got {alpha}")


def _approx_denominator(R, r0, intensity, alpha, pfa, cm) -> float:
    k1, k2 = _power_constants(pfa, cm)
    lam = intensity
    if alpha == 2:
        return lam * k1 * math.log(R) + lam**2 * k2 * R**2
    if alpha == 4:
        return 3 * lam * k1 / r0**2 + lam**2 * k2 * math.log(R) ** 2
    raise ValueError(f"alpha must be 2 or 4, got {alpha}")


def power_circular_approx(R: float, r0: float, intensity: float, sn_power: float, alpha: int,
                          pfa: float, cm: CombinerMoments) -> float:
    """Large-cluster (``R >> r0``) power estimate; an over-estimate for ``alpha=4``."""
    return sn_power * _approx_denominator(R, r0, intensity, alpha, pfa, cm)


def ptx_for_target_snr(snr_ch: float, ch_noise: float, intensity: float, R: float, r0: float,
                       alpha: int, pfa: float, cm: CombinerMoments) -> float:
    """SN transmit power giving ``P_rx / sigma_c^2 = snr_ch`` under the large-cluster law."""
    denom = _approx_denominator(R, r0, intensity, alpha, pfa, cm)
    if not denom > 0:
        raise ValueError(f"non-positive received-power denominator {denom}")
    return ch_noise * snr_ch / denom
