"""Admissible exponential weight for the weighted-L1 contraction metric.

The weight w(x) = -exp(alpha x) + C is strictly positive, strictly decreasing
and strictly concave on the interval, and alpha is picked from the noise field
so that the combined condition F1 * lap(w) + (c+1)/2 * |F2 * grad(w)| stays
strictly negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericsError
from .grid import Grid
from .noise import NoiseField

__all__ = [
    "WeightFunction",
    "construct_weight",
    "verify_weight_conditions",
    "weighted_l1",
    "equivalence_constants",
]


@dataclass(frozen=True)
class WeightFunction:
    alpha: float
    C_shift: float
    w: np.ndarray       # values at cell centers
    w_grad: np.ndarray
    w_lap: np.ndarray
    c_low: float
    c_up: float
    grid: Grid


@dataclass(frozen=True)
class WeightSlack:
    """Minimum over cells of the three admissibility margins."""

    neg_lap: float
    neg_grad: float
    combined: float

    @property
    def all_strict(self) -> bool:
        return self.neg_lap > 0 and self.neg_grad > 0 and self.combined > 0


def construct_weight(field: NoiseField, grid: Grid, c_link: float = 0.0,
                     margin: float = 0.1) -> WeightFunction:
    """Build the exponential weight with alpha sized to the noise field."""
    if c_link < 0:
        raise ValueError("c_link must be nonnegative")
    if margin <= 0:
        raise ValueError("margin must be positive")
    if field.F1_inf <= 0.0:
        raise ConfigError("cannot build a weight for a degenerate noise field")

    alpha = max(1.0, (1.0 + margin) * (c_link + 1.0) * 2.0 * field.F2_sup / field.F1_inf)
    C_shift = float(np.exp(alpha * grid.b)) + 1.0

    x = grid.cell_centers
    expax = np.exp(alpha * x)
    wf = WeightFunction(alpha, C_shift, -expax + C_shift,
                        -alpha * expax, -alpha**2 * expax,
                        float(np.min(-expax + C_shift)),
                        float(np.max(-expax + C_shift)), grid)

    slack = verify_weight_conditions(wf, field, grid, c_link)
    if not slack.all_strict:
        bad = np.argmin(-(field.evaluate_F1(x) * wf.w_lap))
        raise NumericsError(
            f"constructed weight violates admissibility at cell {bad} (x={x[bad]:.4g}); "
            f"slacks {slack}")
    return wf


def verify_weight_conditions(wf: WeightFunction, field: NoiseField,
                             grid: Grid, c_link: float) -> WeightSlack:
    """Report the minimum slack of the three pointwise conditions over cells."""
    if wf.w.shape != grid.cell_centers.shape:
        raise ValueError("weight grids do not match the cell layout")
    slacks = per_cell_slacks(wf, field, grid, c_link)
    return WeightSlack(*(float(np.min(s)) for s in slacks))


def per_cell_slacks(wf: WeightFunction, field: NoiseField, grid: Grid, c_link: float):
    """The three condition margins cell by cell (positive = satisfied strictly)."""
    x = grid.cell_centers
    f1 = field.evaluate_F1(x)
    f2 = field.evaluate_F2(x)
    s1 = -wf.w_lap
    s2 = -wf.w_grad
    s3 = -(f1 * wf.w_lap + 0.5 * (c_link + 1.0) * np.abs(f2 * wf.w_grad))
    return s1, s2, s3


def weighted_l1(f, wf: WeightFunction) -> float:
    """Riemann cell sum of |f| against the weight."""
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != wf.w.shape[0]:
        raise ValueError(f"vector has {f.shape[-1]} cells, weight has {wf.w.shape[0]}")
    return float(np.sum(np.abs(f) * wf.w) * wf.grid.dx)


def weighted_l1_many(f, wf: WeightFunction) -> np.ndarray:
    """weighted_l1 over the last axis of a stacked array."""
    f = np.asarray(f, dtype=float)
    return np.sum(np.abs(f) * wf.w, axis=-1) * wf.grid.dx


def equivalence_constants(wf: WeightFunction) -> tuple[float, float]:
    """(c_low, c_up) sandwiching the plain L1 norm against the weighted one."""
    return wf.c_low, wf.c_up
