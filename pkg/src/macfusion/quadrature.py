"""Adaptive tensor-product Gauss-Legendre quadrature on rectangles.

Cells are refined dyadically (each split into four) wherever the
difference between a cell's own estimate and the sum over its children is
large, so effort concentrates around kinks of the integrand. Refinement is
done level by level with every active cell evaluated in one vectorized
call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class QuadratureError(RuntimeError):
    """Refinement limit reached before the tolerance was met."""

    def __init__(self, message, estimate, error):
        super().__init__(f"{message}: estimate={estimate}, error bound={error}")
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadResult:
    value: np.ndarray
    error: np.ndarray
    n_cells: int
    n_levels: int


def _rule(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _cell_estimates(f, cells: np.ndarray, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Integral of ``f`` over each cell; returns ``(n_components, n_cells)``."""
    cx = (cells[:, 0] + cells[:, 2]) / 2
    cy = (cells[:, 1] + cells[:, 3]) / 2
    hx = (cells[:, 2] - cells[:, 0]) / 2
    hy = (cells[:, 3] - cells[:, 1]) / 2
    px = cx[:, None, None] + hx[:, None, None] * x[None, :, None]
    py = cy[:, None, None] + hy[:, None, None] * x[None, None, :]
    px, py = np.broadcast_arrays(px, py)
    vals = np.asarray(f(px.ravel(), py.ravel()), dtype=float)
    vals = np.atleast_2d(vals).reshape(-1, len(cells), len(x), len(x))
    ww = w[:, None] * w[None, :]
    return np.einsum("kcij,ij->kc", vals, ww) * (hx * hy)[None, :]


def _split(cells: np.ndarray) -> np.ndarray:
    x0, y0, x1, y1 = cells.T
    xm, ym = (x0 + x1) / 2, (y0 + y1) / 2
    kids = np.stack([
        np.column_stack([x0, y0, xm, ym]),
        np.column_stack([xm, y0, x1, ym]),
        np.column_stack([x0, ym, xm, y1]),
        np.column_stack([xm, ym, x1, y1]),
    ], axis=1)
    return kids.reshape(-1, 4)


def integrate_rectangle(f, bounds, *, rtol: float = 1e-8, atol: float = 0.0, order: int = 8,
                        initial_split: int = 4, max_levels: int = 40,
                        max_cells: int = 4_000_000) -> QuadResult:
    """Integrate ``f(x, y)`` over ``bounds = (x0, y0, x1, y1)``.

    ``f`` receives flat coordinate arrays and returns either an array of the
    same length or an ``(n_components, n)`` array for vector integrands.
    Each component must satisfy ``error <= max(atol, rtol * |value|)``.
    """
    if not rtol > 0 and not atol > 0:
        raise ValueError("need a positive rtol or atol")
    x, w = _rule(order)
    x0, y0, x1, y1 = (float(b) for b in bounds)
    gx = np.linspace(x0, x1, initial_split + 1)
    gy = np.linspace(y0, y1, initial_split + 1)
    cells = np.array([(gx[i], gy[j], gx[i + 1], gy[j + 1])
                      for j in range(initial_split) for i in range(initial_split)])
    coarse = _cell_estimates(f, cells, x, w)
    done_val = np.zeros(coarse.shape[0])
    done_err = np.zeros(coarse.shape[0])
    total_cells = len(cells)

    for level in range(1, max_levels + 1):
        kids = _split(cells)
        fine_kids = _cell_estimates(f, kids, x, w)
        fine = fine_kids.reshape(fine_kids.shape[0], -1, 4).sum(axis=2)
        err = np.abs(fine - coarse)
        total_cells += len(kids)
        value = done_val + fine.sum(axis=1)
        error = done_err + err.sum(axis=1)
        budget = np.maximum(atol, rtol * np.abs(value))
        if np.all(error <= budget):
            return QuadResult(value, error, total_cells, level)
        # scale each cell's error by the component budget, refine the worst
        # cells until the remainder fits in half the budget
        safe = np.where(budget > 0, budget, np.inf)
        score = np.max(np.where(budget[:, None] > 0, err / safe[:, None],
                                np.where(err > 0, np.inf, 0.0)), axis=0)
        order_idx = np.argsort(score)
        keep_mass = np.cumsum(score[order_idx])
        n_accept = int(np.searchsorted(keep_mass, 0.5 - (done_err / safe).max(), side="right"))
        accept = np.zeros(len(cells), dtype=bool)
        accept[order_idx[:n_accept]] = True
        done_val += fine[:, accept].sum(axis=1)
        done_err += err[:, accept].sum(axis=1)
        refine = ~accept
        cells = kids.reshape(-1, 4, 4)[refine].reshape(-1, 4)
        coarse = fine_kids.reshape(fine_kids.shape[0], -1, 4)[:, refine, :].reshape(fine_kids.shape[0], -1)
        if total_cells + 4 * len(cells) > max_cells:
            raise QuadratureError("cell limit exceeded", value, error)
    raise QuadratureError("level limit exceeded", value, error)


def integrate_annulus(f, center, r_inner: float, r_outer: float, **kwargs) -> QuadResult:
    """Integrate ``f(x, y)`` over an annulus via polar coordinates."""
    cx, cy = (float(c) for c in center)

    def polar(r, theta):
        return np.asarray(f(cx + r * np.cos(theta), cy + r * np.sin(theta))) * r

    return integrate_rectangle(polar, (r_inner, 0.0, r_outer, 2 * math.pi), **kwargs)
