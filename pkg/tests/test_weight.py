import math

import numpy as np
import pytest

from dklab.errors import ConfigError
from dklab.noise import silent_field
from dklab.weight import (WeightFunction, construct_weight,
                          equivalence_constants, verify_weight_conditions,
                          weighted_l1)


class TestConstructWeight:
    def test_constant_mode_alpha_one(self, unit_grid64, constant_field):
        wf = construct_weight(constant_field, unit_grid64, c_link=0.0, margin=0.1)
        assert wf.alpha == 1.0
        assert wf.C_shift == pytest.approx(math.e + 1.0)
        x = unit_grid64.cell_centers
        assert wf.w == pytest.approx(-np.exp(x) + math.e + 1.0)
        assert np.all(wf.w_lap < 0)
        # w(0) = e and w(1) = 1 in the continuum limit
        assert wf.w[0] == pytest.approx(math.e, abs=2.0 * unit_grid64.dx)
        assert wf.c_low >= 1.0

    def test_two_mode_alpha(self, unit_grid64, two_mode_field):
        wf = construct_weight(two_mode_field, unit_grid64, c_link=0.0, margin=0.1)
        assert wf.alpha == pytest.approx(1.1 * 2.0 * (np.pi / 4.0), rel=1e-9)

    def test_degenerate_field_rejected(self, unit_grid64):
        with pytest.raises(ConfigError):
            construct_weight(silent_field(unit_grid64), unit_grid64)

    def test_strictly_positive_everywhere(self, unit_grid64, two_mode_field):
        for c_link in (0.0, 1.0, 3.0):
            wf = construct_weight(two_mode_field, unit_grid64, c_link=c_link)
            assert np.all(wf.w >= wf.c_low) and wf.c_low > 0


class TestVerifyConditions:
    def test_constant_mode_slacks(self, unit_grid64, constant_field):
        wf = construct_weight(constant_field, unit_grid64, c_link=0.0, margin=0.1)
        slack = verify_weight_conditions(wf, constant_field, unit_grid64, 0.0)
        assert slack.all_strict
        # all three slacks reduce to exp(alpha x) with alpha = 1; the infimum
        # over the open interval is 1, attained at the left edge
        edge = math.exp(unit_grid64.cell_centers[0])
        assert slack.neg_lap == pytest.approx(edge)
        assert slack.neg_grad == pytest.approx(edge)
        assert slack.combined == pytest.approx(edge)
        assert slack.neg_lap > 1.0

    def test_halved_alpha_breaks_combined_condition(self, unit_grid64, two_mode_field):
        wf = construct_weight(two_mode_field, unit_grid64, c_link=1.0, margin=0.1)
        alpha = wf.alpha / 8.0
        x = unit_grid64.cell_centers
        expax = np.exp(alpha * x)
        weak = WeightFunction(alpha, float(np.exp(alpha)) + 1.0,
                              -expax + np.exp(alpha) + 1.0,
                              -alpha * expax, -alpha**2 * expax,
                              1.0, float(np.exp(alpha)), unit_grid64)
        slack = verify_weight_conditions(weak, two_mode_field, unit_grid64, 1.0)
        assert slack.combined <= 0
        assert not slack.all_strict

    def test_constant_weight_fails_strictness(self, unit_grid64, constant_field):
        x = unit_grid64.cell_centers
        flat = WeightFunction(1.0, 2.0, np.full_like(x, 2.0), np.zeros_like(x),
                              np.zeros_like(x), 2.0, 2.0, unit_grid64)
        slack = verify_weight_conditions(flat, constant_field, unit_grid64, 0.0)
        assert slack.neg_lap == 0.0
        assert not slack.all_strict

    def test_alpha_monotonicity_of_margin(self, two_mode_field):
        # scalar margin F1_inf * alpha - 2 (c+1) F2_sup grows with alpha
        f1, f2 = two_mode_field.F1_inf, two_mode_field.F2_sup
        margins = [f1 * a - 2.0 * (0.0 + 1.0) * f2 for a in (1.0, 2.0, 4.0)]
        assert margins[0] < margins[1] < margins[2]


class TestWeightedNorm:
    def test_unit_function_exact_integral(self, unit_grid64, constant_field):
        # integral of (-e^x + e + 1) over (0, 1) equals 2
        wf = construct_weight(constant_field, unit_grid64, c_link=0.0, margin=0.1)
        val = weighted_l1(np.ones(unit_grid64.N), wf)
        assert abs(val - 2.0) <= unit_grid64.dx**2

    def test_zero_vector(self, unit_grid64, constant_field):
        wf = construct_weight(constant_field, unit_grid64)
        assert weighted_l1(np.zeros(unit_grid64.N), wf) == 0.0

    def test_shape_mismatch(self, unit_grid64, constant_field):
        wf = construct_weight(constant_field, unit_grid64)
        with pytest.raises(ValueError):
            weighted_l1(np.ones(unit_grid64.N + 1), wf)

    def test_sandwich_on_random_vectors(self, unit_grid64, two_mode_field):
        wf = construct_weight(two_mode_field, unit_grid64)
        c_low, c_up = equivalence_constants(wf)
        rng = np.random.default_rng(17)
        for _ in range(100):
            f = rng.normal(size=unit_grid64.N)
            plain = float(np.sum(np.abs(f)) * unit_grid64.dx)
            weighted = weighted_l1(f, wf)
            assert c_low * plain <= weighted + 1e-15
            assert weighted <= c_up * plain + 1e-15

    def test_norm_axioms_on_random_vectors(self, unit_grid64, constant_field):
        wf = construct_weight(constant_field, unit_grid64)
        rng = np.random.default_rng(23)
        for _ in range(50):
            f = rng.normal(size=unit_grid64.N)
            g = rng.normal(size=unit_grid64.N)
            lam = float(rng.normal())
            assert weighted_l1(lam * f, wf) == pytest.approx(abs(lam) * weighted_l1(f, wf))
            assert weighted_l1(f + g, wf) <= weighted_l1(f, wf) + weighted_l1(g, wf) + 1e-12
