"""Flat JSON run configuration with an explicit schema, plus run manifests.

Config files are JSON objects with dotted flat keys (``"domain.N": 64``).
Unknown keys are rejected; defaults are resolved before any computation and
the resolved mapping is frozen into the run manifest so a replay sees exactly
the same inputs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

__all__ = ["RunConfig", "load_config", "resolve_config", "write_manifest", "read_manifest"]

EXPERIMENTS = ("contraction", "decay_fit", "invariant", "verify_weight",
               "check_assumptions", "heat_oracle")

_REQUIRED = object()


def _positive(x):
    return x > 0


def _nonnegative(x):
    return x >= 0


# key -> (type, default, validator or None)
_SCHEMA = {
    "experiment": (str, _REQUIRED, lambda v: v in EXPERIMENTS),
    "output_dir": (str, "runs", None),
    "base_seed": (int, 12345, _nonnegative),
    "domain.a": (float, 0.0, None),
    "domain.b": (float, 1.0, None),
    "domain.N": (int, _REQUIRED, lambda v: v >= 4),
    "boundary.rho_b_left": (float, 0.0, _nonnegative),
    "boundary.rho_b_right": (float, 0.0, _nonnegative),
    "triple.regime": (str, "classical", lambda v: v in ("classical", "porous")),
    "triple.m": (float, 2.0, lambda v: v > 1.0),
    "triple.nu": (str, "zero", None),
    "noise.enabled": (bool, True, None),
    "noise.modes": (list, [{"kind": "constant", "amplitude": 1.0}], None),
    "solver.cfl": (float, 0.25, lambda v: 0 < v <= 1),
    "solver.beta": (float, 1e-4, lambda v: 0 < v < 1),
    "solver.M_cap": (float, 1e4, lambda v: v >= 1),
    "solver.t_end": (float, 1.0, _positive),
    "solver.save_times": (list, None, None),  # default: 21 evenly spaced incl. 0
    "solver.clip_negative": (bool, True, None),
    "ensemble.paths": (int, 1, _positive),
    "weight.c_link": (float, 0.0, _nonnegative),
    "weight.margin": (float, 0.1, _positive),
    "initial.rho1": (str, "zero", None),
    "initial.rho2": (str, "zero", None),
    "fit.window_lo": (float, -1.0, None),  # negative means 0.1 * t_end
    "fit.window_hi": (float, -1.0, None),  # negative means t_end
    "invariant.t_burn": (float, 0.5, _nonnegative),
    "invariant.t_sample": (float, 1.0, _positive),
    "invariant.initials": (list, ["zero", "const:1.0"], None),
    "assumptions.grid_max": (float, 10.0, _positive),
    "assumptions.grid_points": (int, 101, lambda v: v >= 2),
}


@dataclass(frozen=True)
class RunConfig:
    """Schema-validated, fully resolved run configuration."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def experiment(self) -> str:
        return self.values["experiment"]

    @property
    def output_dir(self) -> str:
        return self.values["output_dir"]

    @property
    def base_seed(self) -> int:
        return self.values["base_seed"]


def resolve_config(raw: dict) -> RunConfig:
    """Validate a raw mapping against the schema and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    resolved = {}
    for key, (typ, default, validator) in _SCHEMA.items():
        if key in raw:
            value = raw[key]
        elif default is _REQUIRED:
            raise ConfigError(f"missing required config key: {key}")
        else:
            value = default
        if typ is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if typ is int and isinstance(value, bool):
            raise ConfigError(f"config key {key} must be {typ.__name__}, got bool")
        if value is not None and not isinstance(value, typ):
            raise ConfigError(f"config key {key} must be {typ.__name__}, "
                              f"got {type(value).__name__}")
        if value is not None and validator is not None and not validator(value):
            raise ConfigError(f"config key {key} has invalid value {value!r}")
        resolved[key] = value

    _validate_modes(resolved["noise.modes"])
    if resolved["solver.save_times"] is None:
        t_end = resolved["solver.t_end"]
        resolved["solver.save_times"] = [round(i * t_end / 20.0, 12) for i in range(21)]
    if resolved["domain.b"] <= resolved["domain.a"]:
        raise ConfigError("domain.b must exceed domain.a")
    return RunConfig(resolved)


def _validate_modes(modes):
    if not isinstance(modes, list) or not modes:
        raise ConfigError("noise.modes must be a non-empty list")
    for entry in modes:
        if not isinstance(entry, dict):
            raise ConfigError("each noise mode must be an object")
        extra = sorted(set(entry) - {"kind", "freq", "amplitude"})
        if extra:
            raise ConfigError(f"unknown noise mode keys: {', '.join(extra)}")
        if entry.get("kind") not in ("constant", "sine", "cosine"):
            raise ConfigError(f"unknown noise mode kind: {entry.get('kind')!r}")
        if not isinstance(entry.get("amplitude"), (int, float)):
            raise ConfigError("noise mode amplitude must be a number")


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return resolve_config(raw)


def write_manifest(out_dir, cfg: RunConfig, outputs, wall_time_s, summary=None) -> Path:
    """Freeze the resolved config plus run metadata next to the outputs."""
    from . import __version__

    manifest = {
        "schema_version": 1,
        "package_version": __version__,
        "created_unix": time.time(),
        "wall_time_s": wall_time_s,
        "config": cfg.values,
        "outputs": list(outputs),
        "summary": summary or {},
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest {path} is not valid JSON: {exc}") from exc
    for key in ("config", "outputs"):
        if key not in manifest:
            raise ConfigError(f"manifest {path} lacks the {key!r} entry")
    return manifest
