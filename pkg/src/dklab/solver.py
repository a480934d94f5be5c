"""Explicit Euler-Maruyama finite-volume stepper for the Ito-form dynamics.

One step advances rho by

    rho' = rho + dt * [ div(grad phi(rho)) + div(correction) - div(nu-flux) ]
                - div(sigma(rho_face) * noise_increment)

where the correction flux is (F1 * grad Psi_reg(rho) + Sigma_reg(rho) * F2)/2
with the velocity-cutoff-regularized Psi and Sigma, the nu-flux is upwinded by
the sign of nu' at face averages, and boundary faces use the Dirichlet ghost
convention throughout.  Negative cells are clipped to zero with the clipped
mass accumulated in a ledger.

Everything is vectorized over a leading path axis, so Monte-Carlo ensembles
advance in lockstep; each path consumes its own seeded increment stream and a
coupled pair feeds identical increments to both trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError
from .grid import BoundaryData, DensityState, Grid, divergence
from .noise import (IncrementBlock, IncrementStream, NoiseField,
                    derive_path_seed, noise_face_flux)
from .nonlinear import (CutoffParams, NonlinearTriple, psi_reg_prime,
                        psi_reg_values, sigma_sigma_prime_values, low_cutoff,
                        high_cutoff)

__all__ = [
    "SolverParams",
    "CoupledPair",
    "PairEnsemble",
    "drift_rhs",
    "step",
    "select_dt",
    "simulate",
    "simulate_coupled",
    "simulate_ensemble",
    "simulate_coupled_ensemble",
]

_DT_FLOOR = 1e-12


@dataclass(frozen=True)
class SolverParams:
    t_end: float
    save_times: tuple
    cfl: float = 0.25
    cut: CutoffParams = CutoffParams()
    clip_negative: bool = True

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        ts = tuple(float(t) for t in self.save_times)
        if not ts:
            raise ValueError("need at least one save time")
        if any(t < 0 or t > self.t_end for t in ts) or any(np.diff(ts) <= 0):
            raise ValueError("save times must be ascending within [0, t_end]")
        object.__setattr__(self, "save_times", ts)


@dataclass
class CoupledPair:
    """Two states advanced with identical increment blocks."""

    state1: DensityState
    state2: DensityState
    stream: IncrementStream


# ---------------------------------------------------------------------------
# face-flux assembly, batched over a leading path axis


class _StepContext:
    """Per-run cache of boundary scalars and field arrays for the hot loop."""

    def __init__(self, triple, field, bd, grid, cut):
        self.triple = triple
        self.field = field
        self.bd = bd
        self.grid = grid
        self.cut = cut
        self.psi_left = float(psi_reg_values(triple, np.asarray(bd.rho_left), cut))
        self.psi_right = float(psi_reg_values(triple, np.asarray(bd.rho_right), cut))
        self.nu_left = float(triple.nu(bd.rho_left))
        self.nu_right = float(triple.nu(bd.rho_right))


def _face_average(rho, bd: BoundaryData):
    face = np.empty(rho.shape[:-1] + (rho.shape[-1] + 1,))
    face[..., 1:-1] = 0.5 * (rho[..., :-1] + rho[..., 1:])
    face[..., 0] = bd.rho_left
    face[..., -1] = bd.rho_right
    return face


def _ghost_face_gradient(values, left_value, right_value, dx):
    # one-sided boundary gradients consistent with the face-value ghost rule
    g = np.empty(values.shape[:-1] + (values.shape[-1] + 1,))
    g[..., 1:-1] = values[..., 1:]
    g[..., 1:-1] -= values[..., :-1]
    g[..., 0] = 2.0 * (values[..., 0] - left_value)
    g[..., -1] = 2.0 * (right_value - values[..., -1])
    g /= dx
    return g


def _deterministic_face_flux(rho, ctx: _StepContext, face_rho=None):
    """Diffusive gradient + Ito correction - upwinded nu flux, at every face."""
    triple, field, bd, grid, cut = ctx.triple, ctx.field, ctx.bd, ctx.grid, ctx.cut
    phi = np.asarray(triple.phi(rho), dtype=float)
    flux = _ghost_face_gradient(phi, bd.rho_b_left, bd.rho_b_right, grid.dx)

    if not field.is_silent:
        if face_rho is None:
            face_rho = _face_average(rho, bd)
        psi = psi_reg_values(triple, rho, cut)
        psi_grad = _ghost_face_gradient(psi, ctx.psi_left, ctx.psi_right, grid.dx)
        sigma_reg = (sigma_sigma_prime_values(triple, face_rho)
                     * low_cutoff(face_rho, cut.beta)
                     * high_cutoff(face_rho, cut.M_cap))
        flux += 0.5 * (field.F1 * psi_grad + sigma_reg * field.F2)

    if not triple.nu_is_zero:
        if face_rho is None:
            face_rho = _face_average(rho, bd)
        flux -= _upwind_nu_flux(rho, face_rho, ctx)
    return flux


def _upwind_nu_flux(rho, face_rho, ctx: _StepContext):
    triple = ctx.triple
    speed = np.asarray(triple.nu_prime(face_rho), dtype=float)
    nu = np.asarray(triple.nu(rho), dtype=float)

    left = np.empty_like(face_rho)
    left[..., 0] = ctx.nu_left
    left[..., 1:] = nu
    right = np.empty_like(face_rho)
    right[..., :-1] = nu
    right[..., -1] = ctx.nu_right
    return np.where(speed >= 0.0, left, right)


def _advance(rho, dt, dW, ctx: _StepContext, clip):
    """One Euler-Maruyama step on a (..., N) stack; returns (rho', clipped)."""
    grid = ctx.grid
    face_rho = None if (ctx.field.is_silent and ctx.triple.nu_is_zero) \
        else _face_average(rho, ctx.bd)
    flux = dt * _deterministic_face_flux(rho, ctx, face_rho)
    if dW is not None and not ctx.field.is_silent:
        xi_faces = dW @ ctx.field.f_grid  # (..., K) @ (K, N+1)
        flux -= np.asarray(ctx.triple.sigma(face_rho), dtype=float) * xi_faces
    new = rho + (flux[..., 1:] - flux[..., :-1]) / grid.dx
    if clip:
        clipped = -np.sum(np.minimum(new, 0.0), axis=-1) * grid.dx
        new = np.maximum(new, 0.0)
    else:
        clipped = np.zeros(new.shape[:-1])
    return new, clipped


# ---------------------------------------------------------------------------
# spec-level single-state operations


def drift_rhs(state: DensityState, triple: NonlinearTriple, field: NoiseField,
              bd: BoundaryData, grid: Grid, cut: CutoffParams) -> np.ndarray:
    """Deterministic part of the right-hand side (everything but the noise)."""
    ctx = _StepContext(triple, field, bd, grid, cut)
    rhs = divergence(_deterministic_face_flux(state.rho, ctx), grid)
    if not np.all(np.isfinite(rhs)):
        raise BlowUpError(f"non-finite drift at t={state.time}", last_good_time=state.time)
    return rhs


def step(state: DensityState, dt: float, inc: IncrementBlock,
         triple: NonlinearTriple, field: NoiseField, bd: BoundaryData,
         grid: Grid, cut: CutoffParams, clip_negative: bool = True) -> DensityState:
    """Advance a single state by dt using one increment block."""
    ctx = _StepContext(triple, field, bd, grid, cut)
    new, clipped = _advance(state.rho, dt, inc.dW, ctx, clip_negative)
    if not np.all(np.isfinite(new)):
        raise BlowUpError(f"blow-up in step at t={state.time}", last_good_time=state.time)
    out = DensityState(new, state.time + dt, state.clipped_mass_cum + float(clipped))
    return out


def select_dt(state_rho, triple: NonlinearTriple, field: NoiseField, grid: Grid,
              params: SolverParams, bd: BoundaryData | None = None,
              t_next: float | None = None, t_now: float = 0.0) -> float:
    """Parabolic CFL step from the stiffest cell, capped to hit t_next exactly."""
    rho = state_rho.rho if isinstance(state_rho, DensityState) else np.asarray(state_rho)
    vals = rho.reshape(-1)
    if bd is not None:
        vals = np.concatenate([vals, [bd.rho_left, bd.rho_right]])
    stiffness = float(np.max(triple.phi_prime(vals)))
    if not field.is_silent:
        f1_max = float(np.max(field.F1))
        stiffness += 0.5 * f1_max * float(np.max(psi_reg_prime(triple, vals, params.cut)))
    dt = params.cfl * grid.dx**2 / max(stiffness, _DT_FLOOR)
    if t_next is not None:
        t0 = state_rho.time if isinstance(state_rho, DensityState) else t_now
        dt = min(dt, t_next - t0)
    return dt


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class PairEnsemble:
    """Synchronous-coupled trajectory pairs recorded at the save times."""

    times: np.ndarray   # (T,)
    rho1: np.ndarray    # (T, P, N)
    rho2: np.ndarray    # (T, P, N)
    clipped1: np.ndarray
    clipped2: np.ndarray
    base_seed: int

    @property
    def n_paths(self) -> int:
        return self.rho1.shape[1]


class _EnsembleStreams:
    """Lockstep per-path normal streams with chunked refills.

    Chunked refills are stream-equivalent to per-step draws, so a path's
    increments match a standalone IncrementStream with the same seed.
    """

    def __init__(self, seeds, K, chunk=512):
        self._rngs = [np.random.default_rng(s) for s in seeds]
        self._K = K
        self._chunk = chunk
        self._buf = np.empty((chunk, len(seeds), K))
        self._pos = chunk

    def next_matrix(self) -> np.ndarray:
        if self._pos >= self._chunk:
            for i, rng in enumerate(self._rngs):
                self._buf[:, i, :] = rng.standard_normal((self._chunk, self._K))
            self._pos = 0
        out = self._buf[self._pos]
        self._pos += 1
        return out


def _run_lockstep(inits, bd, params, triple, field, grid, path_seeds):
    """Advance len(inits) state stacks sharing per-path increments.

    Returns (times, [stacks (T, P, N)], [clipped (P,)]).
    """
    n_states = len(inits)
    n_paths = len(path_seeds)
    stacks = [np.tile(np.asarray(init, dtype=float), (n_paths, 1)) for init in inits]
    clipped = [np.zeros(n_paths) for _ in range(n_states)]
    streams = _EnsembleStreams(path_seeds, max(field.K, 1))
    ctx = _StepContext(triple, field, bd, grid, params.cut)
    silent = field.is_silent

    times = list(params.save_times)
    recorded = [np.empty((len(times), n_paths, grid.N)) for _ in range(n_states)]
    t = 0.0
    for it, ts in enumerate(times):
        while t < ts:
            dt_stable = _stable_dt(stacks, ctx, params)
            capped = dt_stable >= ts - t
            dt = ts - t if capped else dt_stable
            dW = None if silent else streams.next_matrix() * np.sqrt(dt)
            for i in range(n_states):
                stacks[i], extra = _advance(stacks[i], dt, dW, ctx,
                                            params.clip_negative)
                clipped[i] += extra
            t = ts if capped else t + dt
            if not all(np.all(np.isfinite(s)) for s in stacks):
                raise BlowUpError(f"blow-up in ensemble at t={t}", last_good_time=t - dt)
        for i in range(n_states):
            recorded[i][it] = stacks[i]
    return np.asarray(times), recorded, clipped


def _stable_dt(stacks, ctx: _StepContext, params: SolverParams) -> float:
    bd = ctx.bd
    boundary = np.array([bd.rho_left, bd.rho_right])
    stiffness = max(float(np.max(ctx.triple.phi_prime(s))) for s in stacks)
    stiffness = max(stiffness, float(np.max(ctx.triple.phi_prime(boundary))))
    if not ctx.field.is_silent:
        f1_max = float(np.max(ctx.field.F1))
        psi_max = max(float(np.max(psi_reg_prime(ctx.triple, s, params.cut)))
                      for s in stacks)
        psi_max = max(psi_max, float(np.max(psi_reg_prime(ctx.triple, boundary, params.cut))))
        stiffness += 0.5 * f1_max * psi_max
    return params.cfl * ctx.grid.dx**2 / max(stiffness, _DT_FLOOR)


def simulate(initial: DensityState, bd: BoundaryData, params: SolverParams,
             triple: NonlinearTriple, field: NoiseField, grid: Grid,
             base_seed: int, path_index: int = 0) -> list[DensityState]:
    """Single-path time series at the save times; deterministic given seeds.

    Path ``path_index`` consumes the identical increment stream as slot
    ``path_index`` of an ensemble run with the same base seed.  (Trajectories
    coincide bit-for-bit only for matching ensemble layouts, because the
    adaptive step is shared across the whole ensemble.)
    """
    seeds = [derive_path_seed(base_seed, path_index)]
    times, [stack], [clipped] = _run_lockstep([initial.rho], bd, params, triple,
                                              field, grid, seeds)
    out = []
    for it, ts in enumerate(times):
        out.append(DensityState(stack[it, 0].copy(), float(ts),
                                initial.clipped_mass_cum + float(clipped[0])))
    return out


def simulate_coupled(init1: DensityState, init2: DensityState, bd: BoundaryData,
                     params: SolverParams, triple: NonlinearTriple,
                     field: NoiseField, grid: Grid, base_seed: int,
                     path_index: int = 0):
    """Coupled pair driven by the identical increment stream."""
    seeds = [derive_path_seed(base_seed, path_index)]
    times, (s1, s2), (c1, c2) = _run_lockstep([init1.rho, init2.rho], bd, params,
                                              triple, field, grid, seeds)
    series1 = [DensityState(s1[it, 0].copy(), float(ts)) for it, ts in enumerate(times)]
    series2 = [DensityState(s2[it, 0].copy(), float(ts)) for it, ts in enumerate(times)]
    return series1, series2


def simulate_ensemble(initial, bd, params, triple, field, grid,
                      n_paths: int, base_seed: int):
    """Independent paths from one initial condition; returns (times, (T,P,N), clipped)."""
    init = initial.rho if isinstance(initial, DensityState) else np.asarray(initial)
    seeds = [derive_path_seed(base_seed, p) for p in range(n_paths)]
    times, [stack], [clipped] = _run_lockstep([init], bd, params, triple, field,
                                              grid, seeds)
    return times, stack, clipped


def simulate_coupled_ensemble(init1, init2, bd, params, triple, field, grid,
                              n_paths: int, base_seed: int) -> PairEnsemble:
    """Ensemble of synchronous-coupled pairs (identical noise within a pair)."""
    r1 = init1.rho if isinstance(init1, DensityState) else np.asarray(init1)
    r2 = init2.rho if isinstance(init2, DensityState) else np.asarray(init2)
    seeds = [derive_path_seed(base_seed, p) for p in range(n_paths)]
    times, (s1, s2), (c1, c2) = _run_lockstep([r1, r2], bd, params, triple, field,
                                              grid, seeds)
    return PairEnsemble(times, s1, s2, c1, c2, base_seed)


def run_synchronized(inits, bd, params, triple, field, grid,
                     n_paths: int, base_seed: int):
    """Advance several initial conditions under shared per-path noise.

    Returns (times, list of (T, P, N) stacks, list of clipped-mass arrays).
    Used by the invariant-measure sampler so observables across initial
    conditions stay coupled.
    """
    seeds = [derive_path_seed(base_seed, p) for p in range(n_paths)]
    arrays = [init.rho if isinstance(init, DensityState) else np.asarray(init)
              for init in inits]
    return _run_lockstep(arrays, bd, params, triple, field, grid, seeds)


def total_face_fluxes(state: DensityState, inc, triple, field, bd, grid, cut):
    """(deterministic flux, noise flux) at faces; exposed for ledger checks."""
    ctx = _StepContext(triple, field, bd, grid, cut)
    det = _deterministic_face_flux(state.rho, ctx)
    noise = (np.zeros(grid.N + 1) if inc is None
             else noise_face_flux(field, state.rho, inc, triple, bd))
    return det, noise
