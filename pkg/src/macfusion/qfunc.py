"""Gaussian tail function and its inverse."""

import math

import numpy as np
from scipy import special

SQRT2 = math.sqrt(2.0)


def q(x):
    """Standard normal complementary CDF, Q(x) = P(N(0,1) > x).

    Accepts scalars or arrays; infinities map to 0 and 1.
    """
    out = 0.5 * special.erfc(np.asarray(x, dtype=float) / SQRT2)
    return float(out) if np.ndim(out) == 0 else out


def qinv(p):
    """Inverse of :func:`q` on the open interval (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise ValueError(f"Q^-1 is defined on (0, 1), got {p!r}")
    out = SQRT2 * special.erfcinv(2.0 * arr)
    return float(out) if np.ndim(out) == 0 else out
