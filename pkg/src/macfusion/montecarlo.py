"""Reproducible Monte Carlo trials of the full sensing-to-FC pipeline and
the estimators built on them (moments, ROC, P_D at fixed P_FA, power).

Trial ``t`` of hypothesis ``j`` draws everything from its own generator,
seeded by a 64-bit value derived from ``(master_seed, j, t)`` through
``numpy.random.SeedSequence``; batches are therefore independent of how the
trials are split across worker processes.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import analytic, fusion
from .channel import ChannelConfig, Scheme, ch_to_fc, combine_gain, draw_fading, mac_receive_all, path_gain
from .geometry import ClusterLayout, per_cluster_intensity, sample_annulus_ppp, sample_ppp
from .sensing import Hypothesis, SensingConfig, TargetParams, sample_detecting, simulate_decisions

RULES = ("MOR-N", "MOR-L", "MER-N", "MER-L", "single-cluster-dEGTC", "single-cluster-dMRTC")
SAMPLING_MODES = ("direct", "full")
_ANNULUS_STREAM = 7
WEIGHT_TOL = 1e-6


@dataclass(frozen=True)
class SweepGrid:
    """Parameter grids used by the CLI sweeps."""

    lambdas: tuple[float, ...] = (0.5, 1.0, 2.5, 5.0)
    clusters: tuple[int, ...] = (1, 4, 9, 16)
    snr_ch_db: tuple[float, ...] = (10.0, 15.0, 20.0, 25.0, 30.0)
    schemes: tuple[Scheme, ...] = (Scheme.DEGTC, Scheme.DMRTC)
    alphas: tuple[int, ...] = (2, 4)
    pfa_global: float = 0.05
    roc_points: int = 101

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(Scheme(s) for s in self.schemes))
        if any(not lam >= 0 for lam in self.lambdas):
            raise ValueError("sweep lambdas must be non-negative")
        if any(m < 1 or math.isqrt(m) ** 2 != m for m in self.clusters):
            raise ValueError(f"cluster counts must be perfect squares, got {self.clusters}")
        if any(a not in (2, 4) for a in self.alphas):
            raise ValueError(f"alpha must be 2 or 4, got {self.alphas}")
        if not 0 < self.pfa_global < 1:
            raise ValueError("pfa_global must lie in (0, 1)")
        if self.roc_points < 2:
            raise ValueError("roc_points must be at least 2")
        if not (self.lambdas and self.clusters and self.snr_ch_db and self.schemes and self.alphas):
            raise ValueError("sweep grids must be non-empty")


@dataclass(frozen=True)
class ExperimentConfig:
    side_length: float = 100.0
    grid_dim: int = 2
    intensity: float | tuple[float, ...] = 1.0
    target_power: float = 10.0
    # None places the target uniformly in the centered placement box, per trial
    target_location: tuple[float, float] | None = (20.0, 20.0)
    placement_box: float = 85.0
    sensing: SensingConfig = field(default_factory=lambda: SensingConfig.from_snr(0.01, 12.0, 10.0))
    channel: ChannelConfig = field(default_factory=ChannelConfig.from_snr)
    rule: str = "MOR-N"
    trials: int = 10_000
    master_seed: int = 20240601
    sampling: str = "direct"
    grid: SweepGrid = field(default_factory=SweepGrid)

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials}")
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}; valid rules: {', '.join(RULES)}")
        if self.sampling not in SAMPLING_MODES:
            raise ValueError(f"sampling must be one of {SAMPLING_MODES}")
        if not 0 < self.placement_box <= self.side_length:
            raise ValueError("placement box must fit inside the region")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if not self.target_power >= 0:
            raise ValueError("target power must be non-negative")
        if self.target_location is not None and not self.layout.region.contains(self.target_location):
            raise ValueError(f"target location {self.target_location} outside the region")
        per_cluster_intensity(self.intensity, self.layout.n_clusters)

    @property
    def layout(self) -> ClusterLayout:
        return ClusterLayout.square(self.side_length, self.grid_dim)

    def placement_bounds(self) -> tuple[float, float]:
        lo = (self.side_length - self.placement_box) / 2
        return lo, lo + self.placement_box

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class TrialBatch:
    hypothesis: Hypothesis
    z: np.ndarray  # (T, M) FC observations
    ybar: np.ndarray  # (T, M) noiseless CH signals
    target_locations: np.ndarray  # (T, 2)
    seeds: np.ndarray  # (T,) uint64

    @property
    def n_trials(self) -> int:
        return len(self.z)


def trial_seed(master_seed: int, stream: int, trial: int) -> int:
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(stream), int(trial)))
    return int(ss.generate_state(1, np.uint64)[0])


def trial_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def simulate_trial(cfg: ExperimentConfig, hypothesis: Hypothesis, rng: np.random.Generator):
    """One independent draw of ``(z, ybar, target_location)``."""
    layout = cfg.layout
    if cfg.target_location is None:
        lo, hi = cfg.placement_bounds()
        loc = tuple(rng.uniform(lo, hi, 2))
    else:
        loc = cfg.target_location
    target = TargetParams(cfg.target_power, loc)
    if cfg.sampling == "direct":
        sample = sample_detecting(layout, cfg.intensity, hypothesis, target, cfg.sensing, rng)
        decisions = None
    else:
        sample = sample_ppp(layout, cfg.intensity, rng)
        decisions = simulate_decisions(sample, hypothesis, target, cfg.sensing, rng)
    y, ybar = mac_receive_all(sample, decisions, layout, cfg.channel, rng)
    z = ch_to_fc(y, cfg.channel, rng)
    return z, ybar, np.asarray(loc, dtype=float)


def _simulate_range(cfg: ExperimentConfig, hypothesis: Hypothesis, start: int, stop: int):
    m = cfg.layout.n_clusters
    n = stop - start
    z = np.empty((n, m))
    ybar = np.empty((n, m))
    locs = np.empty((n, 2))
    seeds = np.empty(n, dtype=np.uint64)
    for i, t in enumerate(range(start, stop)):
        seeds[i] = trial_seed(cfg.master_seed, hypothesis, t)
        z[i], ybar[i], locs[i] = simulate_trial(cfg, hypothesis, trial_generator(seeds[i]))
    return z, ybar, locs, seeds


def _chunks(n: int, workers: int) -> list[tuple[int, int]]:
    size = max(1, math.ceil(n / (4 * workers)))
    return [(s, min(n, s + size)) for s in range(0, n, size)]


def run_trials(cfg: ExperimentConfig, hypothesis: Hypothesis, workers: int = 1) -> TrialBatch:
    """Simulate ``cfg.trials`` trials; output is identical for any ``workers``."""
    hypothesis = Hypothesis(hypothesis)
    if workers <= 1:
        parts = [_simulate_range(cfg, hypothesis, 0, cfg.trials)]
    else:
        spans = _chunks(cfg.trials, workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_simulate_range, cfg, hypothesis, a, b) for a, b in spans]
            parts = [f.result() for f in futures]
    z, ybar, locs, seeds = (np.concatenate(p) for p in zip(*parts))
    return TrialBatch(hypothesis, z, ybar, locs, seeds)


@dataclass(frozen=True)
class SampleStats:
    mean: np.ndarray
    mean_se: np.ndarray
    var: np.ndarray
    var_se: np.ndarray


def sample_stats(x, axis: int = 0) -> SampleStats:
    """Unbiased mean/variance with their standard errors along ``axis``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[axis]
    if n < 2:
        raise ValueError("need at least two samples")
    mean = x.mean(axis=axis)
    dev = x - np.expand_dims(mean, axis)
    var = (dev**2).sum(axis=axis) / (n - 1)
    m4 = (dev**4).mean(axis=axis)
    var_of_var = np.maximum(m4 - var**2 * (n - 3) / (n - 1), 0.0) / n
    return SampleStats(mean, np.sqrt(var / n), var, np.sqrt(var_of_var))


@dataclass(frozen=True)
class EmpiricalMoments:
    ybar: SampleStats
    z: SampleStats


def empirical_moments(batch: TrialBatch) -> EmpiricalMoments:
    if batch.n_trials < 2:
        raise ValueError("need at least two trials for sample moments")
    return EmpiricalMoments(sample_stats(batch.ybar), sample_stats(batch.z))


@dataclass(frozen=True)
class Roc:
    thresholds: np.ndarray
    pfa: np.ndarray
    pd: np.ndarray

    def at(self, thresholds):
        """``(P_FA, P_D)`` of the test ``statistic > t`` for arbitrary ``t``."""
        idx = np.searchsorted(self.thresholds, np.asarray(thresholds, dtype=float), side="right") - 1
        return self.pfa[idx], self.pd[idx]


def _exceedance(sorted_stats: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    n = len(sorted_stats)
    return (n - np.searchsorted(sorted_stats, thresholds, side="right")) / n


def roc(h0_stats, h1_stats) -> Roc:
    """Empirical ROC of the test ``statistic > threshold``.

    Thresholds run from ``-inf`` through every pooled sample value, so the
    curve starts at (1, 1) and ends at (0, 0).
    """
    h0 = np.sort(np.asarray(h0_stats, dtype=float))
    h1 = np.sort(np.asarray(h1_stats, dtype=float))
    if not len(h0) or not len(h1):
        raise ValueError("both statistic samples must be non-empty")
    thr = np.concatenate([[-np.inf], np.unique(np.concatenate([h0, h1]))])
    return Roc(thr, _exceedance(h0, thr), _exceedance(h1, thr))


def roc_on_grid(h0_stats, h1_stats, n_points: int) -> Roc:
    """ROC sampled at H0 quantile thresholds for ``P_FA`` targets ``linspace(0, 1, n_points)``."""
    if n_points < 2:
        raise ValueError("need at least two ROC points")
    h0 = np.asarray(h0_stats, dtype=float)
    full = roc(h0, h1_stats)
    targets = np.linspace(0.0, 1.0, n_points)
    thr = np.quantile(h0, 1 - targets, method="higher")
    thr[-1] = -np.inf
    pfa, pd = full.at(thr)
    return Roc(thr, pfa, pd)


@dataclass(frozen=True)
class PdEstimate:
    pd: float
    se: float
    threshold: float
    pfa: float


def pd_at_pfa(h0_stats, h1_stats, target_pfa: float) -> PdEstimate:
    """P_D at the empirical H0 ``1 - target_pfa`` quantile (``higher`` rule).

    The achieved false-alarm rate never exceeds ``target_pfa``.
    """
    if not 0 < target_pfa < 1:
        raise ValueError("target_pfa must lie in (0, 1)")
    h0 = np.asarray(h0_stats, dtype=float)
    h1 = np.asarray(h1_stats, dtype=float)
    n0 = len(h0)
    if n0 * target_pfa < 1 or n0 * (1 - target_pfa) < 1:
        raise ValueError(f"{n0} H0 samples cannot resolve a false-alarm rate of {target_pfa}")
    thr = float(np.quantile(h0, 1 - target_pfa, method="higher"))
    pd = float(np.mean(h1 > thr))
    return PdEstimate(pd, math.sqrt(pd * (1 - pd) / len(h1)), thr, float(np.mean(h0 > thr)))


def empirical_power(batch: TrialBatch, sn_power: float):
    """Per-cluster mean and SE of the received power ``P_tx Ybar_m^2``."""
    p = sn_power * batch.ybar**2
    return p.mean(axis=0), p.std(axis=0, ddof=1) / math.sqrt(len(p))


def annulus_power_trials(R: float, r0: float, intensity: float, pfa: float, channel: ChannelConfig,
                         trials: int, master_seed: int) -> np.ndarray:
    """``P_tx Ybar^2`` under H0 for SNs spread on the annulus ``r0 <= r <= R`` around a CH."""
    out = np.empty(trials)
    for t in range(trials):
        rng = trial_generator(trial_seed(master_seed, _ANNULUS_STREAM, t))
        pts = sample_annulus_ppp(r0, R, intensity * pfa, rng)
        mag, phase = draw_fading(rng, channel.fading_scale, len(pts))
        ybar = np.sum(combine_gain(mag, phase, channel.scheme)
                      * path_gain(np.hypot(pts[:, 0], pts[:, 1]), channel.path_loss, r0))
        out[t] = channel.sn_power * ybar**2
    return out


def rule_config(cfg: ExperimentConfig, rule: str) -> ExperimentConfig:
    """The configuration whose trials feed ``rule``.

    The single-cluster baselines always use one cluster covering the region
    and the combining scheme named in the rule.
    """
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}; valid rules: {', '.join(RULES)}")
    if rule.startswith("single-cluster-"):
        scheme = Scheme(rule.removeprefix("single-cluster-"))
        intensity = cfg.intensity if np.ndim(cfg.intensity) == 0 else float(np.mean(cfg.intensity))
        return cfg.replace(grid_dim=1, intensity=intensity,
                           channel=dataclasses.replace(cfg.channel, scheme=scheme), rule=rule)
    return cfg.replace(rule=rule)


@lru_cache(maxsize=16)
def _excess_table(layout: ClusterLayout, alpha: int, r0: float, sensing: SensingConfig,
                  target_power: float) -> analytic.ExcessIntegralTable:
    return analytic.ExcessIntegralTable(layout, alpha, r0, sensing, target_power)


@lru_cache(maxsize=64)
def _fixed_moments(cfg: ExperimentConfig) -> analytic.MomentSummary:
    target = TargetParams(cfg.target_power, cfg.target_location)
    return analytic.moment_summary(cfg.layout, cfg.intensity, cfg.sensing, cfg.channel, target,
                                   tol=WEIGHT_TOL)


def trial_moments(cfg: ExperimentConfig, batch: TrialBatch) -> analytic.MomentSummary:
    """Moments the clairvoyant FC uses for each trial's target location."""
    if cfg.target_location is not None:
        return _fixed_moments(cfg)
    ch = cfg.channel
    table = _excess_table(cfg.layout, ch.path_loss, ch.ref_distance, cfg.sensing, cfg.target_power)
    base = _base_integrals(cfg.layout, ch.path_loss, ch.ref_distance, cfg.sensing)
    return analytic.moment_summary_batch(cfg.layout, cfg.intensity, cfg.sensing, ch,
                                         batch.target_locations, table, base)


@lru_cache(maxsize=16)
def _base_integrals(layout, alpha, r0, sensing) -> analytic.ClusterIntegrals:
    return analytic.cluster_integrals(layout.cell_bounds(0), layout.ch_positions[0], alpha, r0,
                                      sensing, None)


def rule_statistic(rule: str, cfg: ExperimentConfig, batch: TrialBatch) -> np.ndarray:
    """Per-trial fusion statistic of ``rule`` on a batch produced by ``rule_config(cfg, rule)``."""
    if rule in ("MER-N", "MER-L"):
        return fusion.mer_gaussian(batch.z) if rule == "MER-N" else fusion.mer_lognormal(batch.z)
    if rule.startswith("single-cluster-"):
        return batch.z[:, 0].copy()
    moments = trial_moments(cfg, batch)
    if rule == "MOR-N":
        return fusion.mor_gaussian(batch.z, fusion.build_gaussian_weights(moments))
    if rule == "MOR-L":
        return fusion.mor_lognormal(batch.z, fusion.build_lognormal_weights(moments))
    raise ValueError(f"unknown rule {rule!r}; valid rules: {', '.join(RULES)}")


def rule_statistics(cfg: ExperimentConfig, rules: Sequence[str], workers: int = 1):
    """``{rule: (h0_stats, h1_stats)}``, simulating each distinct configuration once."""
    batches: dict[ExperimentConfig, tuple[TrialBatch, TrialBatch]] = {}
    out = {}
    for rule in rules:
        rc = rule_config(cfg, rule)
        key = rc.replace(rule=RULES[0])
        if key not in batches:
            batches[key] = (run_trials(key, Hypothesis.H0, workers),
                            run_trials(key, Hypothesis.H1, workers))
        b0, b1 = batches[key]
        out[rule] = (rule_statistic(rule, rc, b0), rule_statistic(rule, rc, b1))
    return out
