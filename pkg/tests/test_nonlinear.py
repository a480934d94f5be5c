import math

import numpy as np
import pytest

from dklab.errors import NumericsError
from dklab.nonlinear import (AssumptionReport, CutoffParams, check_assumptions,
                             classical_triple, custom_triple, gap_functional,
                             high_cutoff, low_cutoff, porous_triple,
                             psi_reg_prime, psi_reg_values, psi_sigma_reg,
                             scalar_function_from_spec, sigma_sigma_prime,
                             theta_phi2)

CUT = CutoffParams()


def riemann_psi(triple, xi, cut, n=1_000_000):
    """Fixed-step midpoint oracle for the regularized Psi integral."""
    s = (np.arange(n) + 0.5) * (xi / n)
    mask = s > cut.beta / 2.0
    vals = np.zeros_like(s)
    sp = triple.sigma_prime(s[mask])
    vals[mask] = sp**2 * low_cutoff(s[mask], cut.beta) * high_cutoff(s[mask], cut.M_cap)
    return float(np.sum(vals) * xi / n)


class TestGapFunctional:
    def test_classical_identity_difference(self, classical):
        assert gap_functional(classical, 2.0, 1.0) == pytest.approx(1.0)

    def test_zero_on_diagonal(self, classical, porous_m2):
        for triple in (classical, porous_m2):
            assert gap_functional(triple, 0.7, 0.7) == 0.0

    def test_porous_m2_with_declared_bound(self, porous_m2):
        gap = gap_functional(porous_m2, 3.0, 1.0)
        assert gap == pytest.approx(8.0)
        assert gap >= porous_m2.c_q0 * abs(3.0 - 1.0) ** (porous_m2.q0 + 1.0)

    def test_negative_input_rejected(self, classical):
        with pytest.raises(ValueError):
            gap_functional(classical, -1.0, 2.0)

    def test_lower_bound_on_random_pairs(self, classical, porous_m2):
        rng = np.random.default_rng(5)
        pairs = rng.uniform(0.0, 20.0, size=(500, 2))
        for triple in (classical, porous_m2, porous_triple(3.0)):
            for a, b in pairs:
                gap = gap_functional(triple, a, b)
                assert gap >= triple.c_q0 * abs(a - b) ** (triple.q0 + 1.0) - 1e-9


class TestPsiSigmaReg:
    def test_porous_near_closed_form(self, porous_m2):
        # m^2/(4(m-1)) xi^(m-1) = xi for m = 2
        cut = CutoffParams(beta=1e-8, M_cap=1e8)
        assert psi_sigma_reg(porous_m2, 5.0, cut) == pytest.approx(5.0, abs=1e-6)

    def test_zero_at_zero(self, classical, porous_m2):
        for triple in (classical, porous_m2):
            assert psi_sigma_reg(triple, 0.0, CUT) == 0.0

    def test_classical_against_riemann_oracle(self, classical):
        cut = CutoffParams(beta=1e-2, M_cap=10.0)
        oracle = riemann_psi(classical, 1.0, cut)
        assert psi_sigma_reg(classical, 1.0, cut) == pytest.approx(oracle, abs=1e-8)

    def test_monotone_in_xi(self, classical, porous_m2):
        xs = np.linspace(0.0, 12.0, 49)
        for triple in (classical, porous_m2):
            vals = [psi_sigma_reg(triple, float(x), CUT) for x in xs]
            assert np.all(np.diff(vals) >= -1e-12)

    def test_negative_rejected(self, classical):
        with pytest.raises(ValueError):
            psi_sigma_reg(classical, -0.1, CUT)


class TestPsiRegValues:
    def test_matches_quadrature_across_regions(self, classical, porous_m2):
        cut = CutoffParams(beta=1e-2, M_cap=10.0)
        xs = [0.0, 0.004, 0.0075, 0.02, 0.5, 5.0, 10.2, 10.9, 11.5, 20.0]
        for triple in (classical, porous_m2, porous_triple(1.5), porous_triple(3.0)):
            for x in xs:
                closed = float(psi_reg_values(triple, np.asarray(x), cut))
                quad = psi_sigma_reg(triple, x, cut)
                assert closed == pytest.approx(quad, abs=1e-9), (triple.regime, x)

    def test_custom_regime_falls_back_to_quadrature(self):
        triple = custom_triple(
            phi=lambda x: np.asarray(x, dtype=float),
            phi_prime=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            sigma=lambda x: np.asarray(x, dtype=float),
            sigma_prime=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            nu="zero", q0=0.0, c_q0=1.0)
        vals = psi_reg_values(triple, np.array([0.5, 2.0]), CUT)
        assert vals == pytest.approx([0.5, 2.0], abs=1e-3)

    def test_prime_is_integrand(self, classical):
        cut = CutoffParams(beta=1e-2, M_cap=10.0)
        xs = np.array([0.0, 0.004, 0.008, 0.5, 10.5, 12.0])
        vals = psi_reg_prime(classical, xs, cut)
        expected = np.array([0.0,
                             0.25 / 0.004 * low_cutoff(0.004, 1e-2),
                             0.25 / 0.008 * low_cutoff(0.008, 1e-2),
                             0.25 / 0.5,
                             0.25 / 10.5 * high_cutoff(10.5, 10.0),
                             0.0])
        assert vals == pytest.approx(expected)


class TestSigmaSigmaPrime:
    def test_porous_m2(self, porous_m2):
        assert sigma_sigma_prime(porous_m2, 3.0) == pytest.approx(3.0)

    def test_classical_constant_half(self, classical):
        assert sigma_sigma_prime(classical, 4.0) == pytest.approx(0.5)
        assert sigma_sigma_prime(classical, 0.0) == pytest.approx(0.5)

    def test_porous_m4_against_finite_difference(self):
        # (sigma^2)'/2 = sigma sigma'
        triple = porous_triple(4.0)
        xi, h = 2.0, 1e-6
        fd = (float(triple.sigma(xi + h))**2 - float(triple.sigma(xi - h))**2) / (4.0 * h)
        assert sigma_sigma_prime(triple, xi) == pytest.approx(16.0, rel=1e-12)
        assert sigma_sigma_prime(triple, xi) == pytest.approx(fd, rel=1e-8)

    def test_identity_with_psi_for_porous(self):
        # sigma sigma' = 2(m-1)/m * Psi_sigma, checked in the beta -> 0 limit
        for m in (2.0, 3.0):
            triple = porous_triple(m)
            cut = CutoffParams(beta=1e-12, M_cap=1e12)
            for xi in np.linspace(0.1, 10.0, 23):
                lhs = sigma_sigma_prime(triple, float(xi))
                rhs = 2.0 * (m - 1.0) / m * psi_sigma_reg(triple, float(xi), cut)
                assert abs(lhs - rhs) < 1e-9


class TestThetaPhi2:
    def test_classical_identity_integrand(self, classical):
        assert theta_phi2(classical, 4.0) == pytest.approx(4.0, abs=1e-10)

    def test_porous_closed_form(self, porous_m2):
        # 2 sqrt(m)/(m+1) xi^((m+1)/2) at m=2, xi=1
        assert theta_phi2(porous_m2, 1.0) == pytest.approx(2.0 * math.sqrt(2.0) / 3.0,
                                                           abs=1e-9)

    def test_zero(self, classical, porous_m2):
        for triple in (classical, porous_m2):
            assert theta_phi2(triple, 0.0) == 0.0


class TestCutoffs:
    def test_low_cutoff_shape(self):
        beta = 0.02
        assert low_cutoff(beta / 2.0, beta) == 0.0
        assert low_cutoff(0.0, beta) == 0.0
        assert low_cutoff(beta, beta) == 1.0
        assert low_cutoff(5.0, beta) == 1.0
        mid = low_cutoff(0.75 * beta, beta)
        assert 0.0 < mid < 1.0

    def test_high_cutoff_shape(self):
        m = 7.0
        assert high_cutoff(m, m) == 1.0
        assert high_cutoff(0.0, m) == 1.0
        assert high_cutoff(m + 1.0, m) == 0.0
        assert high_cutoff(m + 0.5, m) == 0.5

    def test_bounds_everywhere(self):
        xs = np.linspace(0.0, 20.0, 400)
        assert np.all((low_cutoff(xs, 0.1) >= 0) & (low_cutoff(xs, 0.1) <= 1))
        assert np.all((high_cutoff(xs, 9.0) >= 0) & (high_cutoff(xs, 9.0) <= 1))

    def test_params_validated(self):
        with pytest.raises(ValueError):
            CutoffParams(beta=2.0, M_cap=10.0)
        with pytest.raises(ValueError):
            CutoffParams(beta=0.1, M_cap=0.5)


class TestCheckAssumptions:
    def test_porous_m2_all_pass(self, porous_m2):
        report = check_assumptions(porous_m2, np.linspace(0.0, 10.0, 101), CUT)
        assert isinstance(report, AssumptionReport)
        assert report.all_passed
        assert report["gap_lower_bound"].constant >= 1.0

    def test_classical_linear_nu(self):
        triple = classical_triple(nu="linear")
        report = check_assumptions(triple, np.linspace(0.0, 10.0, 101), CUT)
        assert report.all_passed
        # A = 2|x-y| >= 1 * |x-y| for q0 = 0
        assert report["gap_lower_bound"].constant >= 1.0

    def test_decreasing_nu_fails_with_witness(self):
        triple = custom_triple(
            phi=lambda x: np.asarray(x, dtype=float),
            phi_prime=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            sigma=lambda x: np.sqrt(np.asarray(x, dtype=float)),
            sigma_prime=lambda x: 0.5 / np.sqrt(np.asarray(x, dtype=float)),
            nu="custom:0-xi", q0=0.0, c_q0=1.0)
        report = check_assumptions(triple, np.array([0.0, 1.0]), CUT)
        failed = report["nu_monotone"]
        assert not failed.passed
        assert failed.witness == (0.0, 1.0)

    def test_empty_grid_rejected(self, classical):
        with pytest.raises(ValueError):
            check_assumptions(classical, np.array([]), CUT)


class TestExpressionGrammar:
    def test_arithmetic(self):
        fn = scalar_function_from_spec("custom:2*xi^2 - xi/2 + 1")
        assert float(fn(2.0)) == pytest.approx(8.0 - 1.0 + 1.0)

    def test_min_max(self):
        fn = scalar_function_from_spec("custom:min(xi, 3) + max(xi - 5, 0)")
        assert float(fn(2.0)) == pytest.approx(2.0)
        assert float(fn(7.0)) == pytest.approx(3.0 + 2.0)

    def test_vectorized(self):
        fn = scalar_function_from_spec("custom:xi*(1-xi)")
        out = fn(np.array([0.0, 0.5, 1.0]))
        assert out == pytest.approx([0.0, 0.25, 0.0])

    def test_rejects_unknown_names(self):
        with pytest.raises(ValueError):
            scalar_function_from_spec("custom:sin(xi)")

    def test_rejects_malformed(self):
        with pytest.raises(ValueError):
            scalar_function_from_spec("custom:xi + ")


class TestTripleFactories:
    def test_classical_pins_coefficients(self, classical):
        assert classical.q0 == 0.0
        xs = np.linspace(0.0, 4.0, 9)
        assert classical.phi(xs) == pytest.approx(xs)
        assert classical.sigma(xs) == pytest.approx(np.sqrt(xs))

    def test_porous_requires_m_above_one(self):
        with pytest.raises(ValueError):
            porous_triple(1.0)

    def test_porous_gap_exponent(self):
        assert porous_triple(3.0).q0 == 2.0

    def test_sigma_zero_enforced(self):
        with pytest.raises(ValueError):
            custom_triple(
                phi=lambda x: np.asarray(x, dtype=float),
                phi_prime=lambda x: np.ones_like(np.asarray(x, dtype=float)),
                sigma=lambda x: np.asarray(x, dtype=float) + 1.0,
                sigma_prime=lambda x: np.ones_like(np.asarray(x, dtype=float)),
                nu="zero", q0=0.0, c_q0=1.0)

    def test_quadrature_failure_surfaces(self):
        # integrand with a genuine non-integrable blow-up inside the window
        triple = custom_triple(
            phi=lambda x: np.asarray(x, dtype=float),
            phi_prime=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            sigma=lambda x: np.asarray(x, dtype=float),
            sigma_prime=lambda x: 1.0 / np.abs(np.asarray(x, dtype=float) - 0.5),
            nu="zero", q0=0.0, c_q0=1.0, skip_checks=True)
        with pytest.raises(NumericsError):
            psi_sigma_reg(triple, 1.0, CUT)
