"""dklab: finite-volume Monte-Carlo laboratory for conservative SPDEs with
spatially correlated noise and Dirichlet boundary data on an interval."""

__version__ = "0.1.0"

from .nonlinear import (CutoffParams, NonlinearTriple, classical_triple,
                        porous_triple, custom_triple, gap_functional,
                        psi_sigma_reg, sigma_sigma_prime, theta_phi2,
                        check_assumptions)
from .grid import (Grid, BoundaryData, DensityState, make_grid, make_boundary,
                   invert_phi, harmonic_extension, laplacian_phi, divergence)
from .noise import (NoiseMode, NoiseSpec, NoiseField, IncrementStream,
                    build_noise, silent_field, sample_increments,
                    noise_face_flux, derive_path_seed)
from .weight import (WeightFunction, construct_weight, verify_weight_conditions,
                     weighted_l1, equivalence_constants)
from .solver import (SolverParams, PairEnsemble, drift_rhs, step, select_dt,
                     simulate, simulate_coupled, simulate_ensemble,
                     simulate_coupled_ensemble)
from .ergodicity import (ContractionCurve, DecayFit, contraction_curve,
                         estimate_super_constant, fit_exponential,
                         fit_polynomial, comparison_ode, ode_upper_bound_check,
                         invariant_sampler, w1_scalar)
