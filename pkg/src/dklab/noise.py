"""Spatially correlated conservative noise: mode fields, derived grids, sampling.

The field is a finite sum of analytic spatial modes (constant / sine / cosine)
driven by independent Brownian motions, so the derived quantities
F1 = sum f_k^2, F2 = sum f_k f_k' = grad(F1)/2, F3 = sum (f_k')^2 are exact.
Per-path increment streams are derived from a base seed with a splitmix-style
mixer, giving reproducible embarrassingly-parallel ensembles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import BoundaryData, Grid

__all__ = [
    "NoiseMode",
    "NoiseSpec",
    "NoiseField",
    "IncrementBlock",
    "IncrementStream",
    "build_noise",
    "silent_field",
    "derive_path_seed",
    "sample_increments",
    "noise_face_flux",
]

_DENSE_SAMPLES = 10_001  # extrema of F1/F2 are taken on this auxiliary grid


@dataclass(frozen=True)
class NoiseMode:
    kind: str  # "constant" | "sine" | "cosine"
    amplitude: float
    freq: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "sine", "cosine"):
            raise ConfigError(f"unknown mode kind {self.kind!r}")
        if self.kind != "constant" and self.freq < 1:
            raise ConfigError("sine/cosine modes need a positive integer frequency")


@dataclass(frozen=True)
class NoiseSpec:
    modes: tuple

    def __post_init__(self):
        if len(self.modes) < 1:
            raise ConfigError("noise spec needs at least one mode")
        if all(m.amplitude == 0.0 for m in self.modes):
            raise ConfigError("noise spec needs at least one nonzero amplitude")

    @property
    def K(self) -> int:
        return len(self.modes)


def _mode_values(mode: NoiseMode, x, a, b):
    x = np.asarray(x, dtype=float)
    if mode.kind == "constant":
        return np.full_like(x, mode.amplitude), np.zeros_like(x)
    omega = 2.0 * np.pi * mode.freq / (b - a)
    u = omega * (x - a)
    if mode.kind == "sine":
        return mode.amplitude * np.sin(u), mode.amplitude * omega * np.cos(u)
    return mode.amplitude * np.cos(u), -mode.amplitude * omega * np.sin(u)


@dataclass(frozen=True)
class NoiseField:
    """Immutable sampled noise field; all derived grids live at the faces."""

    spec: NoiseSpec | None
    grid: Grid
    f_grid: np.ndarray        # (K, N+1)
    f_prime_grid: np.ndarray  # (K, N+1)
    F1: np.ndarray            # (N+1,)
    F2: np.ndarray
    F3: np.ndarray
    F1_inf: float
    F2_sup: float

    @property
    def K(self) -> int:
        return self.f_grid.shape[0]

    @property
    def is_silent(self) -> bool:
        return self.spec is None

    def evaluate_F1(self, x):
        if self.spec is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        total = 0.0
        for mode in self.spec.modes:
            f, _ = _mode_values(mode, x, self.grid.a, self.grid.b)
            total = total + f**2
        return total

    def evaluate_F2(self, x):
        if self.spec is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        total = 0.0
        for mode in self.spec.modes:
            f, fp = _mode_values(mode, x, self.grid.a, self.grid.b)
            total = total + f * fp
        return total


def build_noise(spec: NoiseSpec, grid: Grid) -> NoiseField:
    """Sample the modes at the faces and verify non-degeneracy of F1."""
    f_rows, fp_rows = [], []
    for mode in spec.modes:
        f, fp = _mode_values(mode, grid.faces, grid.a, grid.b)
        f_rows.append(f)
        fp_rows.append(fp)
    f_grid = np.stack(f_rows)
    fp_grid = np.stack(fp_rows)
    F1 = np.sum(f_grid**2, axis=0)
    F2 = np.sum(f_grid * fp_grid, axis=0)
    F3 = np.sum(fp_grid**2, axis=0)

    dense = np.linspace(grid.a, grid.b, _DENSE_SAMPLES)
    F1_dense = 0.0
    F2_dense = 0.0
    for mode in spec.modes:
        f, fp = _mode_values(mode, dense, grid.a, grid.b)
        F1_dense = F1_dense + f**2
        F2_dense = F2_dense + f * fp
    F1_inf = float(np.min(F1_dense))
    F2_sup = float(np.max(np.abs(F2_dense)))

    if F1_inf <= 0.0:
        raise ConfigError(
            "degenerate noise: inf F1 = "
            f"{F1_inf:.3g} violates the non-degeneracy requirement inf F1 > 0 "
            "(a constant mode, e.g. f_1 = 1, guarantees it)")
    return NoiseField(spec, grid, f_grid, fp_grid, F1, F2, F3, F1_inf, F2_sup)


def silent_field(grid: Grid) -> NoiseField:
    """All-zero field for deterministic oracle runs (bypasses non-degeneracy)."""
    z = np.zeros((1, grid.N + 1))
    zf = np.zeros(grid.N + 1)
    return NoiseField(None, grid, z, z.copy(), zf, zf.copy(), zf.copy(), 0.0, 0.0)


# ---------------------------------------------------------------------------
# seeding and increments

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _splitmix_finalize(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_path_seed(base_seed: int, path_index: int) -> int:
    """64-bit per-path seed; injective in path_index for a fixed base seed."""
    if path_index < 0:
        raise ValueError("path index must be nonnegative")
    return _splitmix_finalize((base_seed + (path_index + 1) * _GOLDEN) & _MASK64)


@dataclass(frozen=True)
class IncrementBlock:
    dW: np.ndarray
    dt: float
    step_index: int
    path_seed: int


class IncrementStream:
    """Buffered per-path stream of standard normals, K draws per step.

    Chunked buffering is stream-equivalent to drawing K values per call, so a
    path replays identically whether advanced alone or inside an ensemble.
    """

    def __init__(self, path_seed: int, K: int, chunk: int = 1024):
        if K < 1:
            raise ValueError("need at least one mode")
        self.path_seed = path_seed
        self.K = K
        self._chunk = chunk
        self._rng = np.random.default_rng(path_seed)
        self._buf = np.empty((0, K))
        self._pos = 0
        self.step_index = 0

    def next_normals(self) -> np.ndarray:
        if self._pos >= self._buf.shape[0]:
            self._buf = self._rng.standard_normal((self._chunk, self.K))
            self._pos = 0
        row = self._buf[self._pos]
        self._pos += 1
        self.step_index += 1
        return row


def sample_increments(stream: IncrementStream, K: int, dt: float) -> IncrementBlock:
    """Draw one block of K independent Brownian increments with variance dt."""
    if dt <= 0.0:
        raise ValueError(f"increment time step must be positive, got {dt}")
    if K != stream.K:
        raise ValueError(f"stream carries {stream.K} modes, requested {K}")
    idx = stream.step_index
    return IncrementBlock(stream.next_normals() * np.sqrt(dt), dt, idx, stream.path_seed)


def noise_face_flux(field: NoiseField, rho, inc: IncrementBlock,
                    triple, bd: BoundaryData) -> np.ndarray:
    """sigma(face-average density) times the sampled noise at each face.

    Interior faces use the arithmetic average of the adjacent cells; boundary
    faces use the Dirichlet boundary density.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    face_rho = np.empty(rho.shape[-1] + 1)
    face_rho[1:-1] = 0.5 * (rho[:-1] + rho[1:])
    face_rho[0] = bd.rho_left
    face_rho[-1] = bd.rho_right
    xi_at_faces = field.f_grid.T @ inc.dW
    return np.asarray(triple.sigma(face_rho), dtype=float) * xi_at_faces
