"""Fusion statistics computed at the FC from the CH observations ``z``.

Observations carry clusters on the last axis; weights may carry extra
leading axes (e.g. one set per trial) and broadcast against ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import MomentSummary

# floor for |z| inside logarithms; far below any physical signal level
LOG_FLOOR = 1e-300


class DegenerateClusterError(ValueError):
    """A cluster has equal variances under both hypotheses."""

    def __init__(self, cluster: int):
        super().__init__(f"cluster {cluster} has identical H0/H1 variances; "
                         "its quadratic weight would be zero")
        self.cluster = cluster


class LognormalFitError(ValueError):
    pass


@dataclass(frozen=True)
class FusionWeights:
    """Completed-square weights ``a_m`` and offsets ``d_m``."""

    a: np.ndarray
    d: np.ndarray
    family: str


def _log_abs(z) -> np.ndarray:
    return np.log(np.maximum(np.abs(np.asarray(z, dtype=float)), LOG_FLOOR))


def _check_distinct(v0: np.ndarray, v1: np.ndarray) -> None:
    same = v0 == v1
    if np.any(same):
        idx = np.argwhere(same)[0]
        raise DegenerateClusterError(int(idx[-1]))


def _completed_square(m0, v0, m1, v1, family: str) -> FusionWeights:
    _check_distinct(v0, v1)
    a = 1 / (2 * v0) - 1 / (2 * v1)
    d = (m1 * v0 - m0 * v1) / (v1 - v0)
    return FusionWeights(a, d, family)


def build_gaussian_weights(moments: MomentSummary) -> FusionWeights:
    m, v = moments.mean, moments.var
    return _completed_square(m[..., 0], v[..., 0], m[..., 1], v[..., 1], "gaussian")


def _lognormal_params(moments: MomentSummary):
    if np.any(~(moments.mean > 0)):
        raise LognormalFitError("lognormal fit requires positive FC means in every cluster")
    return moments.log_mean, moments.log_var


def build_lognormal_weights(moments: MomentSummary) -> FusionWeights:
    mh, vh = _lognormal_params(moments)
    return _completed_square(mh[..., 0], vh[..., 0], mh[..., 1], vh[..., 1], "lognormal")


def _check_dims(z: np.ndarray, w: FusionWeights) -> None:
    if z.shape[-1] != w.a.shape[-1]:
        raise ValueError(f"observation has {z.shape[-1]} clusters, weights have {w.a.shape[-1]}")


def mor_gaussian(z, w: FusionWeights) -> np.ndarray:
    """``sum_m a_m (z_m + d_m)^2``; larger favours H1."""
    z = np.asarray(z, dtype=float)
    _check_dims(z, w)
    return np.sum(w.a * (z + w.d) ** 2, axis=-1)


def mor_lognormal(z, w: FusionWeights) -> np.ndarray:
    """``sum_m a_m (ln|z_m| + d_m)^2``."""
    z = np.asarray(z, dtype=float)
    _check_dims(z, w)
    return np.sum(w.a * (_log_abs(z) + w.d) ** 2, axis=-1)


def mer_gaussian(z) -> np.ndarray:
    return np.sum(np.asarray(z, dtype=float) ** 2, axis=-1)


def mer_lognormal(z) -> np.ndarray:
    return np.sum(_log_abs(z) ** 2, axis=-1)


def exact_fitted_llr(z, moments: MomentSummary, family: str = "gaussian") -> np.ndarray:
    """Full log-likelihood ratio under the moment-matched densities.

    For the lognormal family the ``1/|z|`` Jacobians cancel between the two
    hypotheses and the LLR is Gaussian in ``ln|z|``.
    """
    z = np.asarray(z, dtype=float)
    if family == "gaussian":
        m, v, x = moments.mean, moments.var, z
    elif family == "lognormal":
        (m, v), x = _lognormal_params(moments), _log_abs(z)
    else:
        raise ValueError(f"unknown family {family!r}")
    if x.shape[-1] != m.shape[-2]:
        raise ValueError(f"observation has {x.shape[-1]} clusters, moments have {m.shape[-2]}")
    m0, v0, m1, v1 = m[..., 0], v[..., 0], m[..., 1], v[..., 1]
    llr = 0.5 * np.log(v0 / v1) + (x - m0) ** 2 / (2 * v0) - (x - m1) ** 2 / (2 * v1)
    return np.sum(llr, axis=-1)
