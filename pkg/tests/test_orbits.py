#!/usr/bin/env python3
"""Tests for finite orbits and block components"""

import unittest
from fractions import Fraction

import numpy as np

from src.stationary_lab.core_model import TorusPoint, reference_model
from src.stationary_lab.empirical import EmpiricalMeasure
from src.stationary_lab.exceptions import PreconditionError
from src.stationary_lab.orbits import (block_orbit_components, orbit_graph, rational_orbit, stationarity_residual,
                                       uniform_orbit_measure)


class TestRationalOrbit(unittest.TestCase):
    """Test orbit enumeration"""

    def setUp(self):
        self.cfg = reference_model()
        self.x = TorusPoint.from_fractions((1, 4), (0, 1))
        self.y = TorusPoint.from_fractions((1, 4), (1, 2))

    def test_quarter_point_orbit(self):
        self.assertEqual(rational_orbit(self.x, self.cfg), [self.x, self.y])

    def test_origin_is_fixed(self):
        origin = TorusPoint.from_fractions((0, 1), (0, 1))
        self.assertEqual(rational_orbit(origin, self.cfg), [origin])

    def test_orbit_bounded_by_denominator(self):
        x = TorusPoint.from_fractions((1, 5), (2, 5))
        orbit = rational_orbit(x, self.cfg)
        self.assertLessEqual(len(orbit), 25)
        for p in orbit:
            self.assertTrue(all(5 % c.denominator == 0 for c in p.coords))

    def test_graph_has_one_edge_per_generator(self):
        graph = orbit_graph(self.x, self.cfg)
        self.assertEqual(graph.number_of_edges(), 2 * self.cfg.n_generators)
        self.assertEqual({d["chi"] for _, _, d in graph.edges(data=True)}, {0.0, 1.0, -1.0})

    def test_float_point_rejected(self):
        with self.assertRaises(PreconditionError):
            rational_orbit(TorusPoint.from_floats([0.25, 0.0]), self.cfg)


class TestBlockComponents(unittest.TestCase):
    """Test strongly connected components of orbit x Z/mZ"""

    def setUp(self):
        self.cfg = reference_model()
        self.x = TorusPoint.from_fractions((1, 4), (0, 1))
        self.y = TorusPoint.from_fractions((1, 4), (1, 2))

    def test_parity_structure_mod_two(self):
        components = block_orbit_components(self.x, self.cfg, 2)
        self.assertEqual(len(components), 2)
        self.assertEqual(components[0], frozenset({(self.x, 0), (self.y, 1)}))
        self.assertEqual(components[1], frozenset({(self.x, 1), (self.y, 0)}))

    def test_single_component_mod_one(self):
        components = block_orbit_components(self.x, self.cfg, 1)
        self.assertEqual(components, [frozenset({(self.x, 0), (self.y, 0)})])

    def test_modulus_must_be_positive(self):
        with self.assertRaises(PreconditionError):
            block_orbit_components(self.x, self.cfg, 0)


def test_uniform_orbit_measure_is_stationary(ref_cfg):
    orbit = rational_orbit(TorusPoint.from_fractions((1, 4), (0, 1)), ref_cfg)
    assert stationarity_residual(orbit, ref_cfg) == 0
    measure = uniform_orbit_measure(orbit)
    assert measure.exact_weights == (Fraction(1, 2), Fraction(1, 2))
    assert np.isclose(measure.total_weight, 1.0)


def test_larger_orbit_is_stationary(ref_cfg):
    orbit = rational_orbit(TorusPoint.from_fractions((1, 3), (1, 3)), ref_cfg)
    assert stationarity_residual(orbit, ref_cfg) == 0


def test_point_mass_is_not_stationary(ref_cfg):
    x = TorusPoint.from_fractions((1, 4), (0, 1))
    dirac = EmpiricalMeasure(np.array([[0.25, 0.0]]), np.zeros(1), np.ones(1),
                             exact_points=(x,), exact_weights=(Fraction(1),))
    assert stationarity_residual(dirac, ref_cfg) == Fraction(1, 2)
