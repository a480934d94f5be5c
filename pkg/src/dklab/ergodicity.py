"""Measurement harness: contraction curves, rate fits, comparison ODE, sampling.

Works on synchronous-coupled ensembles produced by the solver.  Rates are
extracted by least squares in semilog / log-log coordinates; constants are
reported, never asserted, because the underlying estimates only pin down
exponents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericsError
from .grid import Grid
from .nonlinear import NonlinearTriple, gap_values
from .solver import PairEnsemble, run_synchronized
from .weight import WeightFunction, weighted_l1_many

__all__ = [
    "ContractionCurve",
    "DecayFit",
    "ObservableSamples",
    "contraction_curve",
    "estimate_super_constant",
    "fit_exponential",
    "fit_polynomial",
    "comparison_ode",
    "ode_upper_bound_check",
    "invariant_sampler",
    "w1_scalar",
]


@dataclass(frozen=True)
class ContractionCurve:
    times: np.ndarray
    mean_l1w: np.ndarray
    stderr: np.ndarray
    cum_gap_integral: np.ndarray  # Monte-Carlo mean of the running gap integral
    n_paths: int


def _cumtrapz(values, times):
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(times))
    return out


def contraction_curve(ensemble: PairEnsemble, wf: WeightFunction,
                      triple: NonlinearTriple, grid: Grid) -> ContractionCurve:
    """Ensemble mean/stderr of the weighted L1 gap plus the cumulative
    time-integral of the spatial gap functional."""
    if ensemble.n_paths < 2:
        raise ValueError("need at least two paths for ensemble statistics")
    diff = ensemble.rho1 - ensemble.rho2               # (T, P, N)
    l1w = weighted_l1_many(diff, wf)                   # (T, P)
    mean = l1w.mean(axis=1)
    stderr = l1w.std(axis=1, ddof=1) / math.sqrt(ensemble.n_paths)
    gap_spatial = np.sum(gap_values(triple, ensemble.rho1, ensemble.rho2),
                         axis=-1) * grid.dx            # (T, P)
    gap_mean = gap_spatial.mean(axis=1)
    return ContractionCurve(ensemble.times, mean, stderr,
                            _cumtrapz(gap_mean, ensemble.times), ensemble.n_paths)


def estimate_super_constant(curve: ContractionCurve) -> float:
    """Largest c >= 0 with mean(t) <= mean(0) - c * gap_integral(t) + 2 stderr(t).

    A curve with no accumulated gap (identical trajectories) reports the
    unbounded sentinel math.inf.
    """
    g = curve.cum_gap_integral
    active = g > 0
    if not np.any(active):
        return math.inf
    ratios = (curve.mean_l1w[0] - curve.mean_l1w[active] + 2.0 * curve.stderr[active]) / g[active]
    return max(0.0, float(np.min(ratios)))


@dataclass(frozen=True)
class DecayFit:
    """Fitted decay law: exponential y = c1 exp(-c2 t) or polynomial y = c t^p.

    ``prefactor`` is c1 resp. c; ``exponent`` is c2 resp. p.  ``q_star`` is the
    reporting exponent (q0+1)/q0 attached by callers that know the regime.
    """

    kind: str
    prefactor: float
    exponent: float
    r_squared: float
    window: tuple
    q_star: float | None = None


def _window_points(curve: ContractionCurve, window):
    lo, hi = window
    mask = (curve.times >= lo) & (curve.times <= hi)
    t = curve.times[mask]
    y = curve.mean_l1w[mask]
    if t.size < 5:
        raise ValueError(f"fit window {window} holds {t.size} points, need >= 5")
    if np.any(y <= 0):
        raise ValueError(f"nonpositive curve values inside window {window}; shrink the window")
    return t, y


def _least_squares_line(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res < 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def fit_exponential(curve: ContractionCurve, window, q_star=None) -> DecayFit:
    """Least squares of log(y) against t on the window."""
    t, y = _window_points(curve, window)
    slope, intercept, r2 = _least_squares_line(t, np.log(y))
    return DecayFit("exponential", math.exp(intercept), -slope, r2, tuple(window), q_star)


def fit_polynomial(curve: ContractionCurve, window, q_star=None) -> DecayFit:
    """Least squares of log(y) against log(t) on the window."""
    t, y = _window_points(curve, window)
    if np.any(t <= 0):
        raise ValueError("polynomial fit window must exclude t = 0")
    slope, intercept, r2 = _least_squares_line(np.log(t), np.log(y))
    return DecayFit("polynomial", math.exp(intercept), slope, r2, tuple(window), q_star)


# ---------------------------------------------------------------------------
# comparison ODE


def _ode_rhs(h, c_eff, q0):
    return -c_eff * h ** (q0 + 1.0)


def comparison_ode(h0: float, c: float, w_norm: float, q0: float, times,
                   rk4_check: bool = True) -> np.ndarray:
    """Closed-form solution of h' = -c w^{-(q0+1)} h^{q0+1}, h(0) = h0.

    For q0 = 0 this degenerates to the plain exponential h0 exp(-c t / w).
    The closed form is cross-checked against a fixed-step RK4 integration.
    """
    if h0 <= 0 or c <= 0 or w_norm <= 0 or q0 < 0:
        raise ValueError("comparison ODE needs positive h0, c, w_norm and q0 >= 0")
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")

    if q0 == 0.0:
        c_eff = c / w_norm
        closed = h0 * np.exp(-c_eff * times)
    else:
        c_eff = c * w_norm ** (-(q0 + 1.0))
        closed = (h0 ** (-q0) + c_eff * q0 * times) ** (-1.0 / q0)

    if rk4_check and times.size:
        rk4 = _rk4_ode(h0, c_eff, q0, times)
        err = float(np.max(np.abs(rk4 - closed)))
        if err > 1e-8:
            raise NumericsError(f"comparison ODE closed form deviates from RK4 by {err:.3g}")
    return closed


def _rk4_ode(h0: float, c_eff: float, q0: float, times, target_step: float = 5e-4):
    """Classical RK4 along the sorted time stamps with fixed substeps."""
    order = np.argsort(times)
    sorted_t = times[order]
    out = np.empty_like(sorted_t)
    h, t = h0, 0.0
    for i, ti in enumerate(sorted_t):
        span = ti - t
        if span > 0:
            n_sub = max(1, int(math.ceil(span / target_step)))
            dt = span / n_sub
            for _ in range(n_sub):
                k1 = _ode_rhs(h, c_eff, q0)
                k2 = _ode_rhs(h + 0.5 * dt * k1, c_eff, q0)
                k3 = _ode_rhs(h + 0.5 * dt * k2, c_eff, q0)
                k4 = _ode_rhs(h + dt * k3, c_eff, q0)
                h = h + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = ti
        out[i] = h
    undo = np.empty_like(out)
    undo[order] = out
    return undo


def ode_upper_bound_check(times, f_values, c: float, q0: float,
                          w_norm: float = 1.0, tol: float = 1e-9) -> bool:
    """True iff the sampled curve stays below the comparison solution started
    at the same initial value."""
    times = np.asarray(times, dtype=float)
    f_values = np.asarray(f_values, dtype=float)
    h = comparison_ode(float(f_values[0]), c, w_norm, q0, times, rk4_check=False)
    return bool(np.all(f_values <= h + tol))


# ---------------------------------------------------------------------------
# invariant-measure sampling and scalar Wasserstein distance


@dataclass(frozen=True)
class ObservableSamples:
    """Scalar observables of the state at the sampling time, one row per initial."""

    t_sample: float
    mass: np.ndarray           # (n_initials, n_paths)
    l2: np.ndarray
    sup: np.ndarray
    mean_profiles: np.ndarray  # (n_initials, N)


def invariant_sampler(initials, bd, params, triple, field, grid,
                      t_burn: float, t_sample: float, n_paths: int,
                      base_seed: int) -> ObservableSamples:
    """Sample observables of rho(t_sample) for several initial conditions.

    All initial conditions ride the same per-path noise, so distances between
    their observable samples inherit the coupled contraction bound.
    """
    if not (t_burn < t_sample <= params.t_end):
        raise ValueError("need t_burn < t_sample <= t_end")
    if t_sample not in params.save_times:
        raise ValueError("t_sample must be one of the save times")
    times, stacks, _ = run_synchronized(initials, bd, params, triple, field,
                                        grid, n_paths, base_seed)
    idx = int(np.nonzero(np.isclose(times, t_sample))[0][0])
    states = np.stack([s[idx] for s in stacks])        # (I, P, N)
    mass = states.sum(axis=-1) * grid.dx
    l2 = np.sqrt(np.sum(states**2, axis=-1) * grid.dx)
    sup = states.max(axis=-1)
    return ObservableSamples(t_sample, mass, l2, sup, states.mean(axis=1))


_W1_LCM_CAP = 1_000_000


def w1_scalar(samples_a, samples_b) -> float:
    """Exact 1-Wasserstein distance between 1-D empirical distributions.

    Both samples are sorted and resampled to a common size (least common
    multiple, quantile grid beyond the cap), then compared order statistic by
    order statistic.
    """
    a = np.sort(np.asarray(samples_a, dtype=float))
    b = np.sort(np.asarray(samples_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("w1_scalar needs non-empty samples")
    if a.size != b.size:
        lcm = math.lcm(a.size, b.size)
        if lcm <= _W1_LCM_CAP:
            a = np.repeat(a, lcm // a.size)
            b = np.repeat(b, lcm // b.size)
        else:
            u = (np.arange(_W1_LCM_CAP) + 0.5) / _W1_LCM_CAP
            a = np.quantile(a, u, method="inverted_cdf")
            b = np.quantile(b, u, method="inverted_cdf")
    return float(np.mean(np.abs(a - b)))
