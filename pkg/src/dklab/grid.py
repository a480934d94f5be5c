"""Interval geometry, Dirichlet boundary handling, and discrete operators.

Cell-averaged densities live at the N cell centers of (a, b); fluxes live at
the N+1 faces.  The boundary condition prescribes phi(rho) at both endpoints;
the corresponding boundary densities come from inverting phi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericsError
from .nonlinear import NonlinearTriple

__all__ = [
    "Grid",
    "BoundaryData",
    "DensityState",
    "make_grid",
    "invert_phi",
    "make_boundary",
    "harmonic_extension",
    "phi_face_gradients",
    "laplacian_phi",
    "divergence",
]


@dataclass(frozen=True)
class Grid:
    a: float
    b: float
    N: int
    dx: float
    cell_centers: np.ndarray
    faces: np.ndarray


def make_grid(a: float, b: float, N: int) -> Grid:
    if N < 4:
        raise ValueError(f"need at least 4 cells, got {N}")
    if not b > a:
        raise ValueError(f"empty domain ({a}, {b})")
    dx = (b - a) / N
    faces = a + dx * np.arange(N + 1)
    centers = faces[:-1] + dx / 2.0
    return Grid(a, b, N, dx, centers, faces)


@dataclass(frozen=True)
class BoundaryData:
    """Time-independent Dirichlet data: phi(rho) values and inverted densities."""

    rho_b_left: float
    rho_b_right: float
    rho_left: float
    rho_right: float


def invert_phi(triple: NonlinearTriple, y: float) -> float:
    """Solve phi(xi) = y by bisection, driven to floating-point resolution.

    The residual satisfies |phi(result) - y| <= 1e-12 * max(1, y); in practice
    bisection runs until the bracket collapses, so the result is accurate to a
    few ulps.
    """
    if y < 0:
        raise ValueError("phi is inverted on nonnegative values only")
    if y == 0.0:
        return 0.0
    hi = max(1.0, y)
    while float(triple.phi(hi)) < y:
        hi *= 2.0
        if hi > 1e18:
            raise NumericsError(f"bracket expansion failed inverting phi at y={y}")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        val = float(triple.phi(mid))
        if val == y:
            return mid
        if val < y:
            lo = mid
        else:
            hi = mid
    best = lo if abs(float(triple.phi(lo)) - y) <= abs(float(triple.phi(hi)) - y) else hi
    if abs(float(triple.phi(best)) - y) > 1e-12 * max(1.0, y):
        raise NumericsError(f"bisection failed to invert phi at y={y}")
    return best


def make_boundary(triple: NonlinearTriple, rho_b_left: float, rho_b_right: float) -> BoundaryData:
    if rho_b_left < 0 or rho_b_right < 0:
        raise ValueError("boundary data must be nonnegative")
    return BoundaryData(rho_b_left, rho_b_right,
                        invert_phi(triple, rho_b_left), invert_phi(triple, rho_b_right))


@dataclass
class DensityState:
    """Nonnegative cell-averaged density plus a ledger of clipped mass."""

    rho: np.ndarray
    time: float = 0.0
    clipped_mass_cum: float = 0.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if np.any(self.rho < 0) or not np.all(np.isfinite(self.rho)):
            raise ValueError("density must be finite and nonnegative")

    def copy(self) -> "DensityState":
        return DensityState(self.rho.copy(), self.time, self.clipped_mass_cum)


def harmonic_extension(bd: BoundaryData, grid: Grid) -> np.ndarray:
    """1-D harmonic extension: the affine interpolant of the boundary values."""
    s = (grid.cell_centers - grid.a) / (grid.b - grid.a)
    return bd.rho_b_left + (bd.rho_b_right - bd.rho_b_left) * s


def phi_face_gradients(rho, triple: NonlinearTriple, bd: BoundaryData, grid: Grid) -> np.ndarray:
    """Centered gradients of phi(rho) at all faces.

    Boundary faces use the ghost convention: the ghost value is chosen so the
    face average of phi(rho) equals the prescribed boundary value, which makes
    the one-sided gradient 2*(phi(rho_cell) - rho_b)/dx.
    """
    phi = np.asarray(triple.phi(rho), dtype=float)
    g = np.empty(grid.N + 1)
    g[1:-1] = np.diff(phi) / grid.dx
    g[0] = 2.0 * (phi[0] - bd.rho_b_left) / grid.dx
    g[-1] = 2.0 * (bd.rho_b_right - phi[-1]) / grid.dx
    return g


def divergence(face_flux, grid: Grid) -> np.ndarray:
    face_flux = np.asarray(face_flux, dtype=float)
    if face_flux.shape[-1] != grid.N + 1:
        raise ValueError(f"face vector must have {grid.N + 1} entries, got {face_flux.shape}")
    return np.diff(face_flux, axis=-1) / grid.dx


def laplacian_phi(state: DensityState, triple: NonlinearTriple,
                  bd: BoundaryData, grid: Grid) -> np.ndarray:
    """3-point Laplacian of phi(rho) with Dirichlet ghost values; exactly the
    divergence of the centered face gradients."""
    return divergence(phi_face_gradients(state.rho, triple, bd, grid), grid)
