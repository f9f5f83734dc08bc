#!/usr/bin/env python3
"""Tests for empirical measures and equidistribution statistics"""

import math
import unittest

import numpy as np
import pytest

from src.stationary_lab.core_model import StateXT, TorusPoint
from src.stationary_lab.empirical import (EmpiricalMeasure, atom_detect, marginal_table, pushforward_convergence,
                                          real_marginal_invariance, trajectory_measure, weyl_frequencies, weyl_sum,
                                          weyl_table)
from src.stationary_lab.exceptions import PreconditionError
from src.stationary_lab.orbits import rational_orbit, uniform_orbit_measure
from src.stationary_lab.walk_sim import simulate


class TestWeylSums(unittest.TestCase):
    """Test exponential sums on the torus"""

    def setUp(self):
        self.measure = EmpiricalMeasure.from_arrays(np.array([[0.25, 0.0], [0.25, 0.5]]))

    def test_zero_frequency(self):
        self.assertEqual(weyl_sum(self.measure, (0, 0)), 1)

    def test_two_point_values(self):
        self.assertAlmostEqual(weyl_sum(self.measure, (1, 0)), 1j, places=12)
        self.assertAlmostEqual(abs(weyl_sum(self.measure, (0, 1))), 0.0, places=12)
        self.assertAlmostEqual(abs(weyl_sum(self.measure, (0, 2))), 1.0, places=12)

    def test_empty_measure(self):
        with self.assertRaises(PreconditionError):
            weyl_sum(EmpiricalMeasure.empty(2), (1, 0))

    def test_frequency_dimension(self):
        with self.assertRaises(PreconditionError):
            weyl_sum(self.measure, (1, 0, 0))

    def test_frequency_count(self):
        self.assertEqual(len(weyl_frequencies(2, 3)), 48)
        self.assertNotIn((0, 0), weyl_frequencies(2, 3))


def test_trajectory_weyl_sums_are_small(ref_cfg):
    start = StateXT(TorusPoint.from_floats([0.3779644730092272, 0.6115006341236424]), 0.0)
    traj = simulate(ref_cfg, start, 21_000, seed=1)
    measure = trajectory_measure(traj.states, burn_in=1000)
    assert measure.size == 20_000
    table = weyl_table(measure, 3)
    assert len(table) == 48
    assert table["abs"].max() < 0.05


def test_rational_trajectory_has_atoms(ref_cfg):
    start = StateXT(TorusPoint.from_fractions((1, 4), (0, 1)), 0.0)
    traj = simulate(ref_cfg, start, 2000, seed=2)
    atoms = atom_detect(trajectory_measure(traj.states, burn_in=10), 0.01, 0.1)
    assert len(atoms) == 2
    assert math.isclose(sum(mass for _, mass in atoms), 1.0)


def test_orbit_measure_atoms(ref_cfg):
    orbit = rational_orbit(TorusPoint.from_fractions((1, 4), (0, 1)), ref_cfg)
    atoms = atom_detect(uniform_orbit_measure(orbit), 0.05, 0.4)
    assert [round(mass, 12) for _, mass in atoms] == [0.5, 0.5]


def test_atom_radius_must_be_positive():
    with pytest.raises(PreconditionError):
        atom_detect(EmpiricalMeasure.from_arrays(np.zeros((1, 2))), 0.0, 0.1)


def test_translation_invariant_marginal():
    t = np.arange(-100, 101, dtype=float)
    measure = EmpiricalMeasure.from_arrays(np.zeros((t.size, 2)), t)
    assert real_marginal_invariance(measure, [1.0, -1.0], bins=40, window=(-20.0, 20.0)) == 0.0


def test_marginal_shift_must_be_chi_value():
    measure = EmpiricalMeasure.from_arrays(np.zeros((3, 2)), np.array([0.0, 1.0, 2.0]))
    with pytest.raises(PreconditionError):
        marginal_table(measure, [0.5], chi_values=[0.0, 1.0, -1.0])


def test_trajectory_measure_burn_in():
    states = [StateXT(TorusPoint.from_floats([0.1 * i, 0.0]), float(i)) for i in range(11)]
    measure = trajectory_measure(states, burn_in=3)
    assert measure.size == 7
    assert measure.t[0] == 4.0


def test_pushforward_along_fixing_word(ref_cfg):
    m0 = EmpiricalMeasure.from_arrays(np.array([[0.25, 0.0]]))
    result = pushforward_convergence(ref_cfg, m0, [0, 0, 1, 0], [0, 2, 4], kmax=2)
    assert math.isnan(result.table["cauchy_diff"].iloc[0])
    assert list(result.table["cauchy_diff"].iloc[1:]) == [0.0, 0.0]


def test_pushforward_checkpoints_in_range(ref_cfg):
    m0 = EmpiricalMeasure.from_arrays(np.array([[0.25, 0.0]]))
    with pytest.raises(PreconditionError):
        pushforward_convergence(ref_cfg, m0, [0, 1], [3])
