"""
Tests for the scaling path, the below-threshold bounds and the sampled infima.
"""

import unittest

import numpy as np

from . import LabTestCase
from src.errors import EmptyConstraintError, NoRootError, SpecError
from src.functionals import (
    FieldSpecFactory,
    FunctionalReport,
    Membership,
    evaluate,
    report,
    scale,
)
from src.grid import RadialField, make_grid
from src.variational import (
    BoundBranch,
    Constraint,
    check_below_threshold_bounds,
    energy_sandwich,
    find_lambda0,
    find_lambda0_from_report,
    gaussian_kminus_witness,
    ground_state_kminus_witness,
    jpp_formula,
    kplus_witness,
    parameter_sweep,
    random_below_threshold,
    sampled_infimum,
    scaling_identity_defects,
    scaling_path,
    small_field_sign_violations,
)


def gaussian(amplitude, width=1.0):
    return FieldSpecFactory.create_gaussian(5, amplitude, width)


class TestScalingPath(LabTestCase):
    """Test cases for scaling_path and jpp_formula."""

    def test_origin_of_path(self):
        spec = gaussian(2.0, 1.5)
        point = scaling_path(spec, self.grid, [0.0])[0]
        rep = report(evaluate(spec, self.grid))
        self.assertEqual(point.lam, 0.0)
        self.assertAlmostEqual(point.j, rep.energy, places=10)
        self.assertAlmostEqual(point.jp, rep.k, places=10)

    def test_second_derivative_formula_on_fine_grid(self):
        fine = make_grid(5, 2**18 + 1, 16.0)
        for point in scaling_path(gaussian(0.5), fine, (-0.5, 0.0, 0.5)):
            self.assertLessEqual(point.jpp_defect, max(1e-6 * abs(point.jpp_formula), 1e-8))

    def test_formula_matches_exact_scaling(self):
        base = FunctionalReport.from_integrals(5, 2.0, 30.0, 12.0, 7.0)
        step = 1e-5
        for lam in (-1.0, 0.3, 1.2):
            fd = (base.rescaled(lam + step).k - base.rescaled(lam - step).k) / (2.0 * step)
            formula = jpp_formula(base, lam, base.rescaled(lam).k)
            self.assert_rel_close(formula, fd, 1e-6)

    def test_spread_out_field_has_positive_shrinking_k(self):
        base = report(evaluate(gaussian(30.0), self.grid))
        ks = [base.rescaled(lam).k for lam in (-3.0, -4.0, -5.0)]
        self.assertTrue(all(k > 0 for k in ks))
        self.assertGreater(ks[0], ks[1])
        self.assertGreater(ks[1], ks[2])

    def test_sampled_descriptor_rejected(self):
        spec = FieldSpecFactory.create_sampled(RadialField.zeros(self.grid))
        with self.assertRaises(SpecError):
            scaling_path(spec, self.grid, [0.0])
        with self.assertRaises(SpecError):
            find_lambda0(spec, self.grid)


class TestScalingIdentities(LabTestCase):
    """Test cases for scaling_identity_defects."""

    def test_defects_vanish_on_samples(self):
        rng = np.random.default_rng(42)
        for _, rep in random_below_threshold(self.grid, self.m, 40, rng):
            first, second = scaling_identity_defects(rep)
            self.assertLessEqual(first, 1e-10)
            self.assertLessEqual(second, 1e-10)


class TestLambdaZero(LabTestCase):
    """Test cases for find_lambda0."""

    def test_negative_k_root_is_behind(self):
        spec = gaussian(30.0)
        base = report(evaluate(spec, self.grid))
        self.assertLess(base.k, 0.0)
        lam0 = find_lambda0(spec, self.grid)
        self.assertLess(lam0, 0.0)
        at_root = report(evaluate(scale(spec, lam0), self.grid))
        self.assertLessEqual(abs(at_root.k), 1e-8 * at_root.k_quadratic)
        self.assertGreaterEqual(at_root.energy, self.m * (1.0 - 1e-3))
        surrogate = find_lambda0_from_report(base)
        self.assertLess(abs(lam0 - surrogate), 1e-2)

    def test_positive_k_root_is_ahead(self):
        lam0 = find_lambda0(gaussian(1.0), self.grid)
        self.assertGreater(lam0, 0.0)

    def test_zero_k(self):
        with self.assertRaises(SpecError):
            find_lambda0_from_report(FunctionalReport.from_integrals(5, 0.0, 0.0, 0.0, 0.0))

    def test_no_focusing_part_has_no_root(self):
        with self.assertRaises(NoRootError):
            find_lambda0_from_report(FunctionalReport.from_integrals(5, 1.0, 3.0, 0.0, 2.0))


class TestPositiveKBounds(LabTestCase):
    """Test cases for energy_sandwich and small_field_sign_violations."""

    def test_sandwich_on_positive_k_samples(self):
        rng = np.random.default_rng(3)
        checked = 0
        for _, rep in random_below_threshold(self.grid, self.m, 60, rng):
            if rep.k < 0:
                continue
            result = energy_sandwich(rep)
            self.assertTrue(result.holds)
            self.assertAlmostEqual(result.lower_gap, 0.2 * rep.k, delta=1e-9 * max(1.0, abs(rep.energy)))
            checked += 1
        self.assertGreater(checked, 0)

    def test_sandwich_needs_positive_k(self):
        with self.assertRaises(ValueError):
            energy_sandwich(report(evaluate(gaussian(30.0), self.grid)))

    def test_zero_field_sits_on_both_sides(self):
        result = energy_sandwich(report(RadialField.zeros(self.grid)))
        self.assertTrue(result.holds)
        self.assertEqual(result.lower_gap, 0.0)
        self.assertEqual(result.upper_gap, 0.0)

    def test_small_fields_have_positive_k(self):
        self.assertEqual(small_field_sign_violations(self.grid), 0)
        self.assertEqual(small_field_sign_violations(self.grid, width=2.0), 0)


class TestBelowThresholdBounds(LabTestCase):
    """Test cases for check_below_threshold_bounds."""

    def test_zero_field(self):
        result = check_below_threshold_bounds(report(RadialField.zeros(self.grid)), self.m)
        self.assertEqual(result.branch, BoundBranch.NON_NEGATIVE)
        self.assertEqual(result.bound_value, 0.0)
        self.assertTrue(result.satisfied)

    def test_both_branches(self):
        negative = check_below_threshold_bounds(report(evaluate(gaussian(30.0), self.grid)), self.m)
        self.assertEqual(negative.branch, BoundBranch.NEGATIVE)
        self.assertTrue(negative.satisfied)
        positive = check_below_threshold_bounds(report(evaluate(gaussian(1.0), self.grid)), self.m)
        self.assertEqual(positive.branch, BoundBranch.NON_NEGATIVE)
        self.assertTrue(positive.satisfied)

    def test_above_threshold_rejected(self):
        with self.assertRaises(ValueError):
            check_below_threshold_bounds(report(evaluate(gaussian(10.0), self.grid)), self.m)

    def test_random_samples(self):
        rng = np.random.default_rng(2024)
        samples = random_below_threshold(self.grid, self.m, 100, rng)
        self.assertEqual(len(samples), 100)
        for _, rep in samples:
            self.assertLess(rep.energy, self.m)
            self.assertTrue(check_below_threshold_bounds(rep, self.m).satisfied)

    def test_sampling_is_seeded(self):
        first = random_below_threshold(self.grid, self.m, 10, np.random.default_rng(5))
        second = random_below_threshold(self.grid, self.m, 10, np.random.default_rng(5))
        self.assertEqual([s for s, _ in first], [s for s, _ in second])


class TestSampledInfimum(LabTestCase):
    """Test cases for sampled_infimum."""

    def test_critical_family_floor_and_sharpness(self):
        family = [FieldSpecFactory.create_ground_state(5, c) for c in np.linspace(1.001, 3.0, 21)]
        floor = sampled_infimum(family, self.grid, Constraint.KC_LE_0)
        self.assertGreaterEqual(floor, self.m * (1.0 - 1e-3))
        self.assertLessEqual(floor, self.m * (1.0 + 1e-2))

    def test_gaussian_family_floor(self):
        family = [gaussian(a) for a in np.geomspace(10.0, 100.0, 30)]
        floor = sampled_infimum(family, self.grid, Constraint.K_LE_0)
        self.assertGreaterEqual(floor, self.m * (1.0 - 1e-3))

    def test_empty_family(self):
        with self.assertRaises(ValueError):
            sampled_infimum([], self.grid, Constraint.K_LE_0)

    def test_nothing_qualifies(self):
        with self.assertRaises(EmptyConstraintError):
            sampled_infimum([gaussian(1.0)], self.grid, Constraint.K_LE_0)
        with self.assertRaises(EmptyConstraintError):
            sampled_infimum([gaussian(0.0)], self.grid, Constraint.KC_LE_0)


class TestWitnesses(LabTestCase):
    """Test cases for the sweeps and witness searches."""

    def test_gaussian_witnesses(self):
        minus = gaussian_kminus_witness(self.grid, self.m)
        self.assertEqual(minus.membership, Membership.K_MINUS)
        self.assertGreater(minus.value, 13.0)
        plus = kplus_witness(gaussian, self.grid, self.m, np.geomspace(0.5, 200.0, 121))
        self.assertEqual(plus.membership, Membership.K_PLUS)
        self.assertLess(plus.value, minus.value)

    def test_concentrated_ground_state_witness(self):
        row = ground_state_kminus_witness(self.grid, self.m, 0.75)
        self.assertEqual(row.membership, Membership.K_MINUS)
        self.assertLessEqual(row.value, 0.71)

    def test_ladder_without_k_minus(self):
        with self.assertRaises(EmptyConstraintError):
            ground_state_kminus_witness(make_grid(5, 256, 10.0), -1.0, 0.0)

    def test_sweep_rows(self):
        rows = parameter_sweep(gaussian, self.grid, [1.0, 10.0, 30.0], self.m)
        self.assertEqual(
            [row.membership for row in rows],
            [Membership.K_PLUS, Membership.ABOVE_THRESHOLD, Membership.K_MINUS],
        )


if __name__ == '__main__':
    unittest.main()
