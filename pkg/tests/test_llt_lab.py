#!/usr/bin/env python3
"""Tests for lattice dynamic programming and local limit estimates"""

import math
import unittest
from fractions import Fraction

import pytest

from src.stationary_lab.core_model import load_walk_config
from src.stationary_lab.exceptions import MemoryGuardError, PeriodicityError, PreconditionError
from src.stationary_lab.llt_lab import (LatticeDist, exponential_stationary_base, joint_llt_estimate, lattice_dp,
                                        llt_1d_check, period_detect, radon_stationary_residual, return_time_dp)


class TestLatticeDist(unittest.TestCase):
    """Test exact step distributions"""

    def test_reference_push_forward(self):
        from src.stationary_lab.core_model import reference_model

        dist = LatticeDist.from_config(reference_model())
        self.assertEqual(dist.offset, -1)
        self.assertEqual(dist.masses, (Fraction(1, 4), Fraction(1, 2), Fraction(1, 4)))
        self.assertEqual(dist.mean, 0)
        self.assertEqual(dist.variance, Fraction(1, 2))
        self.assertEqual(dist.period, 1)

    def test_masses_must_sum_to_one(self):
        with self.assertRaises(PreconditionError):
            LatticeDist(0, (Fraction(1, 2), Fraction(1, 3)))

    def test_dirac_period(self):
        self.assertEqual(LatticeDist(3, (Fraction(1),)).period, 0)


class TestLatticeDP(unittest.TestCase):
    """Test convolution powers and first-return probabilities"""

    def setUp(self):
        self.dist = LatticeDist(-1, (Fraction(1, 4), Fraction(1, 2), Fraction(1, 4)))

    def test_zero_steps_is_dirac(self):
        law = lattice_dp(self.dist, 0)
        self.assertEqual(law.support, [0])

    def test_two_steps(self):
        law = lattice_dp(self.dist, 2)
        self.assertEqual(law.offset, -2)
        self.assertEqual(law.masses, (Fraction(1, 16), Fraction(1, 4), Fraction(3, 8), Fraction(1, 4),
                                      Fraction(1, 16)))

    def test_return_time_first_values(self):
        law = return_time_dp(self.dist, 3)
        self.assertEqual(law[0], Fraction(1, 2))
        self.assertEqual(law[1], Fraction(1, 8))
        self.assertEqual(law[2], Fraction(1, 16))

    def test_float_mode_agrees(self):
        exact = return_time_dp(self.dist, 50)
        approx = return_time_dp(LatticeDist(-1, (0.25, 0.5, 0.25)), 50)
        for e, a in zip(exact, approx):
            self.assertAlmostEqual(float(e), a, places=14)

    def test_memory_guard(self):
        with self.assertRaises(MemoryGuardError):
            lattice_dp(self.dist, 10**7)

    def test_negative_n(self):
        with self.assertRaises(PreconditionError):
            lattice_dp(self.dist, -1)


def test_llt_1d_reference(ref_cfg):
    table = llt_1d_check(LatticeDist.from_config(ref_cfg, rational=False), [10, 100, 10_000])
    assert list(table.columns) == ["n", "exact", "limit", "rel_err"]
    assert table["limit"].iloc[0] == pytest.approx(1 / math.sqrt(math.pi))
    assert table["rel_err"].iloc[-1] <= 0.01
    assert table["rel_err"].iloc[-1] < table["rel_err"].iloc[0]


def test_llt_1d_periodic_chi(configs_dir):
    cfg = load_walk_config(configs_dir / "even-chi.json")
    with pytest.raises(PeriodicityError) as info:
        llt_1d_check(LatticeDist.from_config(cfg), [10])
    assert info.value.period == 2


def test_radon_residual_for_exponential_densities():
    dist = LatticeDist(-1, (Fraction(1, 3), Fraction(0), Fraction(2, 3)))
    levels = range(-10, 11)
    assert radon_stationary_residual(dist, lambda k: Fraction(1), levels) == 0
    assert radon_stationary_residual(dist, lambda k: Fraction(2) ** k, levels) == 0
    assert radon_stationary_residual(dist, lambda k: Fraction(3) ** k, levels) > 0


def test_exponential_stationary_base():
    dist = LatticeDist(-1, (Fraction(1, 3), Fraction(0), Fraction(2, 3)))
    assert exponential_stationary_base(dist) == pytest.approx(2.0)


def test_centered_distribution_has_no_exponential_base():
    assert exponential_stationary_base(LatticeDist(-1, (0.25, 0.5, 0.25))) is None


def test_period_detect(ref_cfg, configs_dir):
    assert period_detect(ref_cfg, 200, 10, seed=1) == 1
    assert period_detect(load_walk_config(configs_dir / "even-chi.json"), 200, 10, seed=1) == 2
    assert period_detect(ref_cfg, 1, 10, seed=1) == 0


def test_joint_llt_small(ref_cfg):
    result = joint_llt_estimate(ref_cfg, (-1.0, 1.0), (-1.5, 1.5), [10, 20], 2000, seed=3, lambda_hat=0.4)
    table = result.table
    assert list(table["n"]) == [10, 20]
    assert ((table["p_hat"] >= 0) & (table["p_hat"] <= 1)).all()
    assert (table["ci_lo"] <= table["scaled"]).all() and (table["scaled"] <= table["ci_hi"]).all()
    assert result.metadata["lambda_hat"] == 0.4


def test_joint_llt_window_without_integers(ref_cfg):
    result = joint_llt_estimate(ref_cfg, (-1.0, 1.0), (0.2, 0.8), [10], 500, seed=3, lambda_hat=0.4)
    assert result.table["p_hat"].iloc[0] == 0.0
    assert bool(result.table["ci_too_wide"].iloc[0])


def test_joint_llt_length_cap(ref_cfg):
    with pytest.raises(PreconditionError):
        joint_llt_estimate(ref_cfg, (-1.0, 1.0), (-1.5, 1.5), [401], 10, seed=0, lambda_hat=0.4)
