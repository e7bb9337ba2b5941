import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macfusion import fusion
from macfusion.analytic import MomentSummary, moment_summary
from macfusion.channel import ChannelConfig
from macfusion.fusion import (DegenerateClusterError, LognormalFitError, build_gaussian_weights,
                              build_lognormal_weights, exact_fitted_llr, mer_gaussian, mer_lognormal,
                              mor_gaussian, mor_lognormal)
from macfusion.geometry import ClusterLayout
from macfusion.sensing import SensingConfig, TargetParams
from oracles import gaussian_llr, lognormal_llr


def summary(m0, v0, m1, v1) -> MomentSummary:
    mean = np.column_stack([np.atleast_1d(m0), np.atleast_1d(m1)]).astype(float)
    var = np.column_stack([np.atleast_1d(v0), np.atleast_1d(v1)]).astype(float)
    return MomentSummary(mean, var, mean, var)


def test_gaussian_weights_hand_example():
    w = build_gaussian_weights(summary(0.0, 1.0, 1.0, 2.0))
    assert w.a[0] == pytest.approx(0.25) and w.d[0] == pytest.approx(1.0)
    assert mor_gaussian([0.0], w) == pytest.approx(0.25)
    assert mor_gaussian([-1.0], w) == 0.0


def test_gaussian_equal_means():
    w = build_gaussian_weights(summary(3.0, 1.0, 3.0, 5.0))
    assert w.d[0] == pytest.approx(-3.0)


def test_degenerate_cluster_named():
    with pytest.raises(DegenerateClusterError) as info:
        build_gaussian_weights(summary([0.0, 1.0], [1.0, 2.0], [1.0, 2.0], [2.0, 2.0]))
    assert info.value.cluster == 1


def test_dimension_mismatch():
    w = build_gaussian_weights(summary([0, 0], [1, 1], [1, 1], [2, 2]))
    with pytest.raises(ValueError):
        mor_gaussian([1.0, 2.0, 3.0], w)


def test_lognormal_invalid():
    with pytest.raises(LognormalFitError):
        build_lognormal_weights(summary(-0.1, 1.0, 1.0, 2.0))


def test_mor_lognormal_examples():
    w = fusion.FusionWeights(np.array([0.5]), np.array([0.0]), "lognormal")
    assert mor_lognormal([math.e], w) == pytest.approx(0.5)
    w = build_lognormal_weights(summary([1.0, 2.0], [0.5, 1.0], [2.0, 3.0], [3.0, 1.5]))
    assert mor_lognormal(np.exp(-w.d), w) == pytest.approx(0.0, abs=1e-24)
    z = np.array([0.3, 4.0])
    assert mor_lognormal(-z, w) == mor_lognormal(z, w)


def test_lognormal_symmetric_case():
    # equal FC means but different variances give different log-means; build equal log-means directly
    ms = summary(1.0, 0.5, 1.0, 2.0)
    ms.__dict__["_log"] = (np.array([[0.3, 0.3]]), np.array([[0.2, 0.6]]))
    w = build_lognormal_weights(ms)
    assert w.d[0] == pytest.approx(-0.3)


def test_mer_examples():
    assert mer_gaussian([0.0, 0.0]) == 0.0
    assert mer_gaussian([3.0, 4.0]) == 25.0
    assert mer_lognormal(np.ones(5)) == 0.0
    assert mer_lognormal(np.full(16, math.e)) == pytest.approx(16.0)
    z = np.array([0.2, 3.0, 7.5])
    assert mer_lognormal(z) == pytest.approx(mer_lognormal(1 / z))
    assert mer_gaussian(z[::-1]) == pytest.approx(mer_gaussian(z), rel=1e-15)
    assert np.isfinite(mer_lognormal([0.0]))


def test_exact_llr_identical_moments():
    ms = summary([1.0, 2.0], [0.5, 0.7], [1.0, 2.0], [0.5, 0.7])
    z = np.random.default_rng(1).normal(size=(10, 2))
    np.testing.assert_allclose(exact_fitted_llr(z, ms), 0.0)
    np.testing.assert_allclose(exact_fitted_llr(np.abs(z), ms, "lognormal"), 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        exact_fitted_llr(z, ms, "weibull")


def _random_summary(rng, m):
    m0 = rng.uniform(0.5, 2.0, m)
    m1 = m0 + rng.uniform(0.1, 3.0, m)
    v0 = rng.uniform(0.05, 1.0, m)
    v1 = v0 + rng.uniform(0.05, 2.0, m)
    return summary(m0, v0, m1, v1)


def test_exact_llr_matches_scipy_densities(rng):
    ms = _random_summary(rng, 4)
    z = rng.uniform(0.1, 5.0, (50, 4))
    m, v = ms.mean, ms.var
    np.testing.assert_allclose(exact_fitted_llr(z, ms), gaussian_llr(z, m[:, 0], v[:, 0], m[:, 1], v[:, 1]),
                               rtol=1e-10, atol=1e-10)
    mh, vh = ms.log_mean, ms.log_var
    np.testing.assert_allclose(exact_fitted_llr(z, ms, "lognormal"),
                               lognormal_llr(z, mh[:, 0], vh[:, 0], mh[:, 1], vh[:, 1]),
                               rtol=1e-10, atol=1e-10)


def _offset_spread(stat, llr):
    diff = stat - llr
    scale = max(np.max(np.abs(stat)), np.max(np.abs(llr)), 1.0)
    return (diff.max() - diff.min()) / scale


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 16), st.integers(0, 2**31))
def test_completed_square_gaussian(m, seed):
    rng = np.random.default_rng(seed)
    ms = _random_summary(rng, m)
    z = rng.normal(1.0, 2.0, (100, m))
    w = build_gaussian_weights(ms)
    assert _offset_spread(mor_gaussian(z, w), exact_fitted_llr(z, ms)) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 16), st.integers(0, 2**31))
def test_completed_square_lognormal(m, seed):
    rng = np.random.default_rng(seed)
    ms = _random_summary(rng, m)
    z = rng.lognormal(0.0, 1.0, (100, m))
    w = build_lognormal_weights(ms)
    assert _offset_spread(mor_lognormal(z, w), exact_fitted_llr(z, ms, "lognormal")) < 1e-9


def test_permutation_equivariance(rng):
    ms = _random_summary(rng, 5)
    perm = rng.permutation(5)
    z = rng.normal(size=(20, 5))
    permuted = summary(ms.mean[perm, 0], ms.var[perm, 0], ms.mean[perm, 1], ms.var[perm, 1])
    np.testing.assert_allclose(mor_gaussian(z, build_gaussian_weights(ms)),
                               mor_gaussian(z[:, perm], build_gaussian_weights(permuted)))
    np.testing.assert_allclose(mer_gaussian(z), mer_gaussian(z[:, perm]))


def test_decision_equivalence(rng):
    """Thresholding MOR-N and the fitted LLR gives identical ROCs (affine relation)."""
    from macfusion.montecarlo import roc
    ms = _random_summary(rng, 3)
    w = build_gaussian_weights(ms)
    z0 = rng.normal(ms.mean[:, 0], np.sqrt(ms.var[:, 0]), (2000, 3))
    z1 = rng.normal(ms.mean[:, 1], np.sqrt(ms.var[:, 1]), (2000, 3))
    r_mor = roc(mor_gaussian(z0, w), mor_gaussian(z1, w))
    r_llr = roc(exact_fitted_llr(z0, ms), exact_fitted_llr(z1, ms))
    np.testing.assert_array_equal(r_mor.pfa, r_llr.pfa)
    np.testing.assert_array_equal(r_mor.pd, r_llr.pd)


def test_weights_batched(rng):
    mean = rng.uniform(1, 2, (7, 3, 2))
    var = rng.uniform(0.1, 1, (7, 3, 2))
    ms = MomentSummary(mean, var, mean, var)
    w = build_gaussian_weights(ms)
    assert w.a.shape == (7, 3)
    z = rng.normal(size=(7, 3))
    single = [mor_gaussian(z[i], build_gaussian_weights(MomentSummary(mean[i], var[i], mean[i], var[i])))
              for i in range(7)]
    np.testing.assert_allclose(mor_gaussian(z, w), single)


def test_reference_operating_point_weights():
    cfg = SensingConfig.from_snr(0.01, 12.0, 10.0)
    ms = moment_summary(ClusterLayout.square(100.0, 2), 1.0, cfg, ChannelConfig.from_snr(),
                        TargetParams(10.0, (20.0, 20.0)), tol=1e-7)
    w = build_lognormal_weights(ms)
    assert np.all(np.isfinite(w.a)) and np.all(np.isfinite(w.d))
    # the target shrinks the relative spread, so the log-variance drops under H1 and the
    # lognormal weights are negative here; their sign always follows the log-variance gap
    assert np.all(np.sign(w.a) == np.sign(ms.log_var[:, 1] - ms.log_var[:, 0]))
    assert np.all(w.a < 0)
    g = build_gaussian_weights(ms)
    assert np.all(g.a > 0) and np.all(ms.var[:, 1] > ms.var[:, 0])
