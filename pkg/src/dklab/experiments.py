"""The canonical experiments: building blocks from a config, CSV artifacts.

Every experiment resolves its objects from a RunConfig, writes its CSVs plus a
manifest into the output directory, and returns a summary dict.  All artifacts
stay inside the output directory and all floats are serialized with repr, so a
rerun of the same resolved config is byte-identical.
"""

from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, write_manifest
from .errors import AssumptionError, ConfigError
from .ergodicity import (contraction_curve, estimate_super_constant,
                         fit_exponential, fit_polynomial, invariant_sampler)
from .grid import DensityState, make_boundary, make_grid
from .noise import NoiseMode, NoiseSpec, build_noise, silent_field
from .nonlinear import (CutoffParams, check_assumptions, classical_triple,
                        porous_triple)
from .solver import SolverParams, simulate, simulate_coupled_ensemble
from .weight import construct_weight, per_cell_slacks

__all__ = ["run_experiment", "build_objects", "initial_profile"]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if not isinstance(v, str) else v for v in row))
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# config -> objects


def make_triple_from(cfg: RunConfig):
    if cfg["triple.regime"] == "classical":
        return classical_triple(nu=cfg["triple.nu"])
    return porous_triple(cfg["triple.m"], nu=cfg["triple.nu"])


def make_field_from(cfg: RunConfig, grid):
    if not cfg["noise.enabled"]:
        return silent_field(grid)
    modes = tuple(NoiseMode(kind=m["kind"], amplitude=float(m["amplitude"]),
                            freq=int(m.get("freq", 0)))
                  for m in cfg["noise.modes"])
    return build_noise(NoiseSpec(modes), grid)


def initial_profile(spec: str, grid):
    """Profiles: zero | const:<v> | sine:<amp>[:<offset>] | bump:<amp>[:<offset>]."""
    parts = spec.split(":")
    kind = parts[0]
    s = np.pi * (grid.cell_centers - grid.a) / (grid.b - grid.a)
    try:
        if kind == "zero" and len(parts) == 1:
            values = np.zeros(grid.N)
        elif kind == "const" and len(parts) == 2:
            values = np.full(grid.N, float(parts[1]))
        elif kind in ("sine", "bump") and len(parts) in (2, 3):
            amp = float(parts[1])
            offset = float(parts[2]) if len(parts) == 3 else 0.0
            shape = np.sin(s) if kind == "sine" else np.sin(s) ** 2
            values = offset + amp * shape
        else:
            raise ConfigError(f"unrecognized initial profile {spec!r}")
    except ValueError as exc:
        raise ConfigError(f"bad number in initial profile {spec!r}") from exc
    if np.any(values < 0):
        raise ConfigError(f"initial profile {spec!r} takes negative values")
    return values


def build_objects(cfg: RunConfig):
    """(triple, grid, bd, field, params) resolved from the config."""
    triple = make_triple_from(cfg)
    grid = make_grid(cfg["domain.a"], cfg["domain.b"], cfg["domain.N"])
    bd = make_boundary(triple, cfg["boundary.rho_b_left"], cfg["boundary.rho_b_right"])
    field = make_field_from(cfg, grid)
    params = SolverParams(
        t_end=cfg["solver.t_end"],
        save_times=tuple(cfg["solver.save_times"]),
        cfl=cfg["solver.cfl"],
        cut=CutoffParams(beta=cfg["solver.beta"], M_cap=cfg["solver.M_cap"]),
        clip_negative=cfg["solver.clip_negative"],
    )
    return triple, grid, bd, field, params


def _fit_window(cfg: RunConfig):
    lo = cfg["fit.window_lo"]
    hi = cfg["fit.window_hi"]
    t_end = cfg["solver.t_end"]
    return (0.1 * t_end if lo < 0 else lo, t_end if hi < 0 else hi)


# ---------------------------------------------------------------------------
# experiments


def _exp_heat_oracle(cfg: RunConfig, out: Path):
    triple, grid, bd, field, params = build_objects(cfg)
    rho0 = initial_profile(cfg["initial.rho1"], grid)
    series = simulate(DensityState(rho0), bd, params, triple, field, grid,
                      cfg.base_seed)
    sup0 = float(np.max(np.abs(rho0)))
    rows = []
    for st in series:
        sup = float(np.max(np.abs(st.rho)))
        ratio = sup / sup0
        expected = math.exp(-math.pi**2 * st.time)
        rel = abs(ratio - expected) / expected if expected > 0 else 0.0
        rows.append((st.time, sup, ratio, expected, rel))
    write_csv(out / "heat_oracle.csv",
              ["time", "sup_norm", "ratio", "expected_ratio", "rel_err"], rows)
    write_state_series(out / "profiles.csv", series, grid)
    worst = max(r[4] for r in rows[1:]) if len(rows) > 1 else 0.0
    return ["heat_oracle.csv", "profiles.csv"], {"max_rel_err": worst}


def write_state_series(path: Path, series, grid):
    """Serialize a single-path time series as rows (time, rho_1..rho_N)."""
    header = ["time"] + [f"rho_{i + 1}" for i in range(grid.N)]
    rows = [(st.time, *st.rho) for st in series]
    write_csv(path, header, rows)


def _exp_verify_weight(cfg: RunConfig, out: Path):
    triple, grid, bd, field, params = build_objects(cfg)
    if field.is_silent:
        raise ConfigError("weight verification needs a non-degenerate noise field")
    wf = construct_weight(field, grid, c_link=cfg["weight.c_link"],
                          margin=cfg["weight.margin"])
    s1, s2, s3 = per_cell_slacks(wf, field, grid, cfg["weight.c_link"])
    rows = [(i, grid.cell_centers[i], wf.w[i], wf.w_grad[i], wf.w_lap[i],
             s1[i], s2[i], s3[i]) for i in range(grid.N)]
    write_csv(out / "weight_check.csv",
              ["cell", "x", "w", "dw", "lap_w", "slack1", "slack2", "slack3"], rows)
    return ["weight_check.csv"], {
        "alpha": wf.alpha, "c_low": wf.c_low, "c_up": wf.c_up,
        "min_slacks": [float(np.min(s1)), float(np.min(s2)), float(np.min(s3))],
    }


def _exp_check_assumptions(cfg: RunConfig, out: Path):
    triple, grid, bd, field, params = build_objects(cfg)
    sample = np.linspace(0.0, cfg["assumptions.grid_max"], cfg["assumptions.grid_points"])
    report = check_assumptions(triple, sample, params.cut)
    rows = []
    for c in report.checks:
        rows.append((c.name, "pass" if c.passed else "fail",
                     "" if c.constant is None else _fmt(c.constant),
                     "" if c.witness is None else _fmt(c.witness[0]),
                     "" if c.witness is None else _fmt(c.witness[1])))
    write_csv(out / "assumption_report.csv",
              ["check", "status", "constant", "witness_lo", "witness_hi"], rows)
    if not report.all_passed:
        names = ", ".join(c.name for c in report.failures())
        raise AssumptionError(f"assumption checks failed: {names}")
    return ["assumption_report.csv"], {"all_passed": True}


def _coupled_ensemble(cfg: RunConfig):
    triple, grid, bd, field, params = build_objects(cfg)
    init1 = initial_profile(cfg["initial.rho1"], grid)
    init2 = initial_profile(cfg["initial.rho2"], grid)
    ens = simulate_coupled_ensemble(init1, init2, bd, params, triple, field,
                                    grid, cfg["ensemble.paths"], cfg.base_seed)
    wf = construct_weight(field, grid, c_link=cfg["weight.c_link"],
                          margin=cfg["weight.margin"]) if not field.is_silent else None
    return triple, grid, bd, field, params, ens, wf


def _curve_rows(curve):
    return [(curve.times[i], curve.mean_l1w[i], curve.stderr[i],
             curve.cum_gap_integral[i]) for i in range(curve.times.size)]


def _exp_contraction(cfg: RunConfig, out: Path):
    from .weight import weighted_l1_many

    triple, grid, bd, field, params, ens, wf = _coupled_ensemble(cfg)
    if wf is None:
        raise ConfigError("contraction experiment needs a non-degenerate noise field")
    curve = contraction_curve(ens, wf, triple, grid)
    write_csv(out / "contraction_curve.csv",
              ["time", "mean_l1w", "stderr", "gap_integral"], _curve_rows(curve))

    l1w = weighted_l1_many(ens.rho1 - ens.rho2, wf)  # (T, P)
    rows = [(ens.times[it], p, l1w[it, p])
            for it in range(ens.times.size) for p in range(ens.n_paths)]
    write_csv(out / "contraction_paths.csv", ["time", "path", "l1w_diff"], rows)

    c_hat = estimate_super_constant(curve)
    return (["contraction_curve.csv", "contraction_paths.csv"],
            {"super_constant": ("unbounded" if math.isinf(c_hat) else c_hat),
             "n_paths": ens.n_paths})


def _exp_decay_fit(cfg: RunConfig, out: Path):
    triple, grid, bd, field, params, ens, wf = _coupled_ensemble(cfg)
    if wf is None:
        raise ConfigError("decay-fit experiment needs a non-degenerate noise field")
    curve = contraction_curve(ens, wf, triple, grid)
    write_csv(out / "decay_curve.csv",
              ["time", "mean_l1w", "stderr", "gap_integral"], _curve_rows(curve))

    window = _fit_window(cfg)
    q0 = triple.q0
    q_star = math.inf if q0 == 0 else (q0 + 1.0) / q0
    fits = [fit_exponential(curve, window, q_star=q_star),
            fit_polynomial(curve, window, q_star=q_star)]
    rows = [(f.kind, f.prefactor, f.exponent, f.r_squared, f.window[0], f.window[1],
             "inf" if f.q_star is None or math.isinf(f.q_star) else _fmt(f.q_star))
            for f in fits]
    write_csv(out / "decay_fit.csv",
              ["model", "prefactor", "exponent", "r_squared",
               "window_lo", "window_hi", "q_star"], rows)
    return (["decay_curve.csv", "decay_fit.csv"],
            {"exponential_r2": fits[0].r_squared, "polynomial_r2": fits[1].r_squared,
             "polynomial_exponent": fits[1].exponent,
             "exponential_rate": fits[0].exponent})


def _exp_invariant(cfg: RunConfig, out: Path):
    triple, grid, bd, field, params = build_objects(cfg)
    initials = [initial_profile(s, grid) for s in cfg["invariant.initials"]]
    samples = invariant_sampler(initials, bd, params, triple, field, grid,
                                cfg["invariant.t_burn"], cfg["invariant.t_sample"],
                                cfg["ensemble.paths"], cfg.base_seed)
    rows = [(i, p, samples.mass[i, p], samples.l2[i, p], samples.sup[i, p])
            for i in range(samples.mass.shape[0])
            for p in range(samples.mass.shape[1])]
    write_csv(out / "observables.csv", ["initial_id", "path", "mass", "l2", "max"], rows)

    prof_rows = [(i, j, grid.cell_centers[j], samples.mean_profiles[i, j])
                 for i in range(samples.mean_profiles.shape[0])
                 for j in range(grid.N)]
    write_csv(out / "mean_profiles.csv", ["initial_id", "cell", "x", "mean_rho"], prof_rows)
    return (["observables.csv", "mean_profiles.csv"],
            {"t_sample": samples.t_sample,
             "mass_means": [float(m) for m in samples.mass.mean(axis=1)]})


_RUNNERS = {
    "heat_oracle": _exp_heat_oracle,
    "verify_weight": _exp_verify_weight,
    "check_assumptions": _exp_check_assumptions,
    "contraction": _exp_contraction,
    "decay_fit": _exp_decay_fit,
    "invariant": _exp_invariant,
}


def run_experiment(cfg: RunConfig, output_dir=None) -> dict:
    """Execute the configured experiment; returns the manifest dict."""
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    outputs, summary = _RUNNERS[cfg.experiment](cfg, out)
    wall = time.monotonic() - started
    manifest_path = write_manifest(out, cfg, outputs, wall, summary)
    return {"manifest": str(manifest_path), "outputs": outputs, "summary": summary}
