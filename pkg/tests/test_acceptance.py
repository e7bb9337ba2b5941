"""Acceptance criteria, each run at its stated tolerance.

Every criterion prints one PASS/FAIL line (also collected in the pytest
terminal summary). Run standalone with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from acceptance_log import record  # noqa: E402
from macfusion import analytic, cli, config, fusion  # noqa: E402
from macfusion.channel import ChannelConfig, Scheme  # noqa: E402
from macfusion.montecarlo import (RULES, ExperimentConfig, annulus_power_trials, empirical_moments,  # noqa: E402
                                  pd_at_pfa, roc, rule_config, rule_statistics, run_trials)
from macfusion.qfunc import qinv  # noqa: E402
from macfusion.sensing import Hypothesis, TargetParams  # noqa: E402

TRIALS = 10_000
REF = ExperimentConfig(trials=TRIALS)  # reference operating point, M = 4, target at (20, 20)
S2 = REF.channel.fading_scale


def _with_channel(cfg, **kw):
    return cfg.replace(channel=dataclasses.replace(cfg.channel, **kw))


def check(criterion: str, ok: bool, detail: str):
    record(criterion, bool(ok), detail)
    assert ok, detail


def test_c1_combining_gains():
    exact = analytic.combining_gain(Scheme.DMRTC) == 0.5 and analytic.combining_gain(Scheme.DEGTC) == math.pi / 4
    worst = 0.0
    for s2 in (0.1, 1 / math.sqrt(2), 10.0):
        for scheme in Scheme:
            cm = analytic.combiner_moments(scheme, s2)
            worst = max(worst, abs(analytic.combining_gain(scheme) - cm.m1**2 / cm.m2))
    check("C1 combining gains", exact and worst <= 1e-12,
          f"g_tc = 0.5 / pi/4 exact={exact}; max |g_tc - m1^2/m2| = {worst:.2e} (tol 1e-12)")


def test_c2_moment_matching():
    layout = REF.layout
    target = TargetParams(REF.target_power, REF.target_location)
    worst, n_checks = 0.0, 0
    for alpha in (2, 4):
        ints = analytic.layout_integrals(layout, alpha, 1.0, REF.sensing, target)
        for scheme in Scheme:
            cm = analytic.combiner_moments(scheme, S2)
            for lam in (0.5, 1.0, 2.5, 5.0):
                cfg = _with_channel(REF.replace(intensity=lam), scheme=scheme, path_loss=alpha)
                for hyp in Hypothesis:
                    e = empirical_moments(run_trials(cfg, hyp)).ybar
                    for m, ci in enumerate(ints):
                        mean_a, var_a = analytic.ybar_moments(lam, cm, ci)
                        zm = abs(e.mean[m] - mean_a[hyp]) / e.mean_se[m]
                        zv = abs(e.var[m] - var_a[hyp]) / e.var_se[m]
                        worst = max(worst, zm, zv)
                        n_checks += 2
    check("C2 moment matching", worst <= 5.0,
          f"{n_checks} mean/variance checks at {TRIALS} trials; max deviation {worst:.2f} SE (tol 5 SE)")


def _completed_square_spread(stat, llr):
    diff = stat - llr
    return (diff.max() - diff.min()) / max(np.abs(stat).max(), np.abs(llr).max(), 1.0)


def test_c3_completed_square():
    rng = np.random.default_rng(2024)
    ms = analytic.moment_summary(REF.layout, 1.0, REF.sensing, REF.channel,
                                 TargetParams(REF.target_power, REF.target_location))
    sd0 = np.sqrt(ms.var[:, 0])
    z = ms.mean[:, 0] + rng.normal(0.0, 3.0, (100, 4)) * sd0
    zl = np.exp(ms.log_mean[:, 0] + rng.normal(0.0, 3.0, (100, 4)) * np.sqrt(ms.log_var[:, 0]))
    g = _completed_square_spread(fusion.mor_gaussian(z, fusion.build_gaussian_weights(ms)),
                                 fusion.exact_fitted_llr(z, ms, "gaussian"))
    ln = _completed_square_spread(fusion.mor_lognormal(zl, fusion.build_lognormal_weights(ms)),
                                  fusion.exact_fitted_llr(zl, ms, "lognormal"))
    check("C3 completed-square identities", g <= 1e-9 and ln <= 1e-9,
          f"relative spread of (MOR - fitted LLR) over 100 probes: gaussian {g:.1e}, lognormal {ln:.1e} "
          "(tol 1e-9)")


def test_c4_lognormal_roundtrip():
    worst = 0.0
    for mu in np.logspace(-2, 2, 10):
        for var in np.logspace(-3, 2, 10):
            mh, s2 = analytic.lognormal_match(mu, var)
            back_mean = math.exp(mh + s2 / 2)
            back_var = math.expm1(s2) * math.exp(2 * mh + s2)
            worst = max(worst, abs(back_mean / mu - 1), abs(back_var / var - 1))
    check("C4 lognormal roundtrip", worst <= 1e-12,
          f"max relative roundtrip error over 100 (mu, var) points {worst:.1e} (tol 1e-12)")


def _single_cluster_moments(cfg):
    ms = analytic.moment_summary(cfg.layout, cfg.intensity, cfg.sensing, cfg.channel,
                                 TargetParams(cfg.target_power, cfg.target_location))
    return ms.mean[0], np.sqrt(ms.var[0])


def test_c5_single_cluster_roc():
    cfg = rule_config(REF, "single-cluster-dEGTC")
    (m0, m1), (s0, s1) = _single_cluster_moments(cfg)
    rng = np.random.default_rng(cfg.master_seed)
    h0 = rng.normal(m0, s0, TRIALS)
    h1 = rng.normal(m1, s1, TRIALS)
    curve = roc(h0, h1)
    p = np.linspace(0.05, 0.95, 20)
    gamma = s0 * qinv(p) + m0
    pd_th = np.array([analytic.single_cluster_performance(pk, m0, s0, m1, s1)[1] for pk in p])
    pfa_emp, pd_emp = curve.at(gamma)
    z_fa = np.abs(pfa_emp - p) / np.sqrt(p * (1 - p) / TRIALS)
    z_d = np.abs(pd_emp - pd_th) / np.sqrt(pd_th * (1 - pd_th) / TRIALS)
    check("C5 single-cluster analytic ROC", z_fa.max() <= 3 and z_d.max() <= 3,
          f"Gaussian single-cluster statistic, 20 P_FA points: max |P_FA dev| {z_fa.max():.2f} SE, "
          f"max |P_D dev| {z_d.max():.2f} SE (tol 3 SE)")

    # diagnostic only: the simulated pipeline's Z is not Gaussian at this operating point
    b0, b1 = run_trials(cfg, Hypothesis.H0), run_trials(cfg, Hypothesis.H1)
    pfa_p, pd_p = roc(b0.z[:, 0], b1.z[:, 0]).at(gamma)
    worst = max((np.abs(pfa_p - p) / np.sqrt(p * (1 - p) / TRIALS)).max(),
                (np.abs(pd_p - pd_th) / np.sqrt(pd_th * (1 - pd_th) / TRIALS)).max())
    print(f"INFO  C5 diagnostic: simulated pipeline Z vs Gaussian Q-function curve, max deviation "
          f"{worst:.1f} SE (not gated)")


def test_c6a_annulus_power():
    R, r0, lam, pfa = 50 * math.sqrt(2), 1.0, 1.0, REF.sensing.pfa
    worst, parts = 0.0, []
    for alpha in (2, 4):
        for scheme in Scheme:
            ch = dataclasses.replace(REF.channel, scheme=scheme, path_loss=alpha)
            p = annulus_power_trials(R, r0, lam, pfa, ch, TRIALS, REF.master_seed)
            cm = analytic.combiner_moments(scheme, S2)
            exact = analytic.power_circular_exact(R, r0, lam, ch.sn_power, alpha, pfa, cm)
            z = abs(p.mean() - exact) / (p.std(ddof=1) / math.sqrt(len(p)))
            worst = max(worst, z)
            parts.append(f"{scheme.value}/a{alpha} {z:.2f}")
    check("C6a annulus power vs exact", worst <= 5, f"deviation in SE: {', '.join(parts)} (tol 5 SE)")


def test_c6b_approx_vs_exact():
    pfa, gaps, ok = REF.sensing.pfa, [], True
    for ratio in (30, 50, 100, 300, 1000):
        for scheme in Scheme:
            cm = analytic.combiner_moments(scheme, S2)
            ex = analytic.power_circular_exact(float(ratio), 1.0, 1.0, 1.0, 2, pfa, cm)
            ap = analytic.power_circular_approx(float(ratio), 1.0, 1.0, 1.0, 2, pfa, cm)
            gap = abs(ap / ex - 1)
            ok &= gap < 0.05
            gaps.append(f"R/r0={ratio} {scheme.value} {100 * gap:.2f}%")
    check("C6b approx within 5% of exact (alpha=2, R/r0>=30)", ok, "; ".join(gaps))


def test_c6c_power_scaling():
    pfa, R = REF.sensing.pfa, 100.0
    cm = analytic.combiner_moments(Scheme.DEGTC, S2)
    ok, parts = True, []
    for alpha in (2, 4):
        gaps = []
        for lam in (1.0, 10.0, 100.0):
            r = (analytic.power_circular_exact(R, 1.0, 2 * lam, 1.0, alpha, pfa, cm)
                 / analytic.power_circular_exact(R, 1.0, lam, 1.0, alpha, pfa, cm))
            gaps.append(abs(r / 4 - 1))
        ok &= bool(np.all(np.diff(gaps) < 0)) and gaps[-1] <= 0.02
        if alpha == 2:
            ok &= gaps[0] <= 0.02
        parts.append(f"alpha={alpha} |ratio/4-1| at lambda 1,10,100: " + ", ".join(f"{g:.4f}" for g in gaps))
    ln_gaps = [abs(analytic.power_circular_approx(Rv**2, 1.0, 1.0, 1.0, 4, pfa, cm)
                   / analytic.power_circular_approx(Rv, 1.0, 1.0, 1.0, 4, pfa, cm) / 4 - 1)
               for Rv in (1e2, 1e4, 1e8)]
    ok &= bool(np.all(np.diff(ln_gaps) < 0))
    parts.append("alpha=4 approx(R^2)/approx(R) gap at R=1e2,1e4,1e8: " + ", ".join(f"{g:.3f}" for g in ln_gaps))
    check("C6c power scaling", ok, "; ".join(parts))


@pytest.fixture(scope="module")
def random_target():
    return ExperimentConfig(trials=TRIALS, target_location=None)


def test_c7a_clusters_help(random_target):
    pd = {}
    for k in (1, 4):
        st = rule_statistics(random_target.replace(grid_dim=k), ["MOR-N"])
        pd[k * k] = pd_at_pfa(*st["MOR-N"], 0.05)
    check("C7a MOR-dEG-N P_D(M=16) > P_D(M=1)", pd[16].pd > pd[1].pd,
          f"P_D(M=1) = {pd[1].pd:.4f} +- {pd[1].se:.4f}, P_D(M=16) = {pd[16].pd:.4f} +- {pd[16].se:.4f}")


def test_c7b_monotone_in_lambda(random_target):
    est = {}
    for lam in (0.5, 1.0, 2.5):
        st = rule_statistics(random_target.replace(intensity=lam), list(RULES))
        for rule in RULES:
            est[rule, lam] = pd_at_pfa(*st[rule], 0.05)
    bad = []
    for rule in RULES:
        for a, b in ((0.5, 1.0), (1.0, 2.5)):
            lo, hi = est[rule, a], est[rule, b]
            if hi.pd < lo.pd - 2 * math.hypot(lo.se, hi.se):
                bad.append(f"{rule} {a}->{b}")
    detail = "; ".join(f"{r}: " + "/".join(f"{est[r, l].pd:.3f}" for l in (0.5, 1.0, 2.5)) for r in RULES)
    check("C7b P_D nondecreasing in lambda (2 SE slack)", not bad,
          (f"violations {bad}; " if bad else "") + detail)


def test_c7c_degtc_beats_dmrtc(random_target):
    st = rule_statistics(random_target, ["single-cluster-dEGTC", "single-cluster-dMRTC"])
    eg = pd_at_pfa(*st["single-cluster-dEGTC"], 0.05)
    mr = pd_at_pfa(*st["single-cluster-dMRTC"], 0.05)
    check("C7c single-cluster dEGTC >= dMRTC (2 SE)", eg.pd >= mr.pd - 2 * math.hypot(eg.se, mr.se),
          f"dEGTC {eg.pd:.4f} +- {eg.se:.4f}, dMRTC {mr.pd:.4f} +- {mr.se:.4f}")


def test_c8_determinism(tmp_path):
    resolved = config.resolve("[experiment]\ntrials = 400\n[target]\nlocation = random\n"
                              "[sweep]\nclusters = 1, 4\nroc_points = 11\n")
    runs = [("roc", {"rules": list(RULES)}), ("sweep", {"rules": ["MOR-N", "MER-L"], "vary": "clusters"}),
            ("power", {})]
    mismatched = []
    for command, options in runs:
        first = tmp_path / f"{command}-1"
        man = cli.execute(command, resolved, options, first, workers=1)
        _, bad = cli.replay(first / cli.MANIFEST, tmp_path / f"{command}-2", workers=2)
        for name in man["outputs"]:
            if (first / name).read_bytes() != (tmp_path / f"{command}-2" / name).read_bytes():
                bad.append(name)
        mismatched += bad
    check("C8 determinism", not mismatched,
          f"replayed roc/sweep/power manifests with 2 workers vs 1: mismatches {mismatched or 'none'}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
