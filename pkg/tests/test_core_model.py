#!/usr/bin/env python3
"""Unit tests for the exact walk model"""

import json
import unittest
from fractions import Fraction

import numpy as np
import pytest

from src.stationary_lab.core_model import (GroupElement, StateXT, TorusPoint, WalkConfig, Word, apply,
                                           chi_of_word, load_walk_config, reference_model,
                                           walk_config_from_mapping, word_product)
from src.stationary_lab.exceptions import ConfigError, DimensionError, PreconditionError


class TestGroupElement(unittest.TestCase):
    """Test integer matrices with chi values"""

    def test_determinant_must_be_one(self):
        with self.assertRaises(PreconditionError):
            GroupElement(((2, 0), (0, 1)), 0.0)

    def test_inverse_is_exact(self):
        g = GroupElement(((1, 2), (0, 1)), 1.0)
        product = g @ g.inverse()
        self.assertTrue(product.is_identity())
        self.assertEqual(product.chi, 0.0)

    def test_non_square_rejected(self):
        with self.assertRaises(DimensionError):
            GroupElement(((1, 0, 0), (0, 1)), 0.0)


class TestApply(unittest.TestCase):
    """Test g.(x, t) = (g x mod 1, t + chi(g))"""

    def setUp(self):
        self.cfg = reference_model()
        self.g0, _, self.g1, _ = self.cfg.generators
        self.x = TorusPoint.from_fractions((1, 4), (0, 1))

    def test_g0_fixes_quarter_point(self):
        result = apply(self.g0, StateXT(self.x, 0.0))
        self.assertEqual(result.x, self.x)
        self.assertEqual(result.t, 0.0)

    def test_g1_moves_quarter_point(self):
        result = apply(self.g1, StateXT(self.x, 0.0))
        self.assertEqual(result.x, TorusPoint.from_fractions((1, 4), (1, 2)))
        self.assertEqual(result.t, 1.0)

    def test_identity(self):
        s = StateXT(TorusPoint.from_fractions((2, 7), (3, 7)), -2.5)
        self.assertEqual(apply(GroupElement.identity(2), s), s)

    def test_dimension_mismatch(self):
        s = StateXT(TorusPoint.from_fractions((1, 2), (1, 2), (1, 2)), 0.0)
        with self.assertRaises(DimensionError):
            apply(self.g0, s)

    def test_composition_matches_word_product(self):
        s = StateXT(TorusPoint.from_fractions((3, 5), (1, 5)), 0.0)
        gh = word_product([2, 0], self.cfg)
        self.assertEqual(apply(self.cfg.generators[2], apply(self.cfg.generators[0], s)), apply(gh, s))

    def test_float_mode_agrees_with_exact(self):
        rng = np.random.default_rng(3)
        exact = StateXT(TorusPoint.from_fractions((5, 12), (7, 12)), 0.0)
        approx = StateXT(exact.x.to_float(), 0.0)
        for letter in self.cfg.sample_letters(rng, 20):
            g = self.cfg.generators[letter]
            exact, approx = apply(g, exact), apply(g, approx)
        diff = np.abs(exact.x.as_array() - approx.x.as_array())
        diff = np.minimum(diff, 1.0 - diff)
        self.assertTrue(np.all(diff < 1e-9))
        self.assertEqual(exact.t, approx.t)


class TestWords(unittest.TestCase):
    """Test word products and chi additivity"""

    def setUp(self):
        self.cfg = reference_model()

    def test_g1_squared(self):
        g = word_product([2, 2], self.cfg)
        self.assertEqual(g.entries, ((1, 0), (4, 1)))
        self.assertEqual(g.chi, 2.0)

    def test_single_letter(self):
        self.assertEqual(word_product([0], self.cfg), self.cfg.generators[0])

    def test_inverse_pair(self):
        g = word_product([0, 1], self.cfg)
        self.assertTrue(g.is_identity())
        self.assertEqual(g.chi, 0.0)

    def test_empty_word_rejected(self):
        with self.assertRaises(PreconditionError):
            word_product([], self.cfg)

    def test_chi_cancellation(self):
        self.assertEqual(chi_of_word([2, 0, 3], self.cfg), 0.0)
        self.assertEqual(chi_of_word(Word((2, 2)), self.cfg), 2.0)

    def test_chi_additive_and_det_one_on_random_words(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            w1 = Word(tuple(self.cfg.sample_letters(rng, 40)))
            w2 = Word(tuple(self.cfg.sample_letters(rng, 60)))
            self.assertEqual(chi_of_word(w1 + w2, self.cfg), chi_of_word(w1, self.cfg) + chi_of_word(w2, self.cfg))
            g = word_product(w1 + w2, self.cfg)
            self.assertEqual(g.chi, chi_of_word(w1 + w2, self.cfg))
            self.assertLessEqual(abs(g.chi), 100)

    def test_invalid_letter(self):
        with self.assertRaises(PreconditionError):
            word_product([0, 7], self.cfg)

    def test_negative_letter_rejected_by_chi(self):
        with self.assertRaises(PreconditionError):
            chi_of_word([-1], self.cfg)
        with self.assertRaises(PreconditionError):
            chi_of_word(Word((0, 4)), self.cfg)


class TestWalkConfig(unittest.TestCase):
    """Test configuration validation and loading"""

    def test_reference_model_shape(self):
        cfg = reference_model()
        self.assertEqual(cfg.dim, 2)
        self.assertEqual(cfg.n_generators, 4)
        self.assertEqual(list(cfg.chi_values), [0.0, 0.0, 1.0, -1.0])
        self.assertTrue(cfg.integer_chi)

    def test_uncentered_chi_rejected(self):
        g = GroupElement(((1, 1), (0, 1)), 1.0)
        with self.assertRaises(ConfigError):
            WalkConfig(dim=2, generators=(g, g.inverse()), probs=(0.75, 0.25))

    def test_probabilities_must_sum_to_one(self):
        g = GroupElement(((1, 1), (0, 1)), 0.0)
        with self.assertRaises(ConfigError):
            WalkConfig(dim=2, generators=(g,), probs=(0.5,))

    def test_mapping_shape_errors_become_config_errors(self):
        with self.assertRaises(ConfigError):
            walk_config_from_mapping({"dim": 2, "generators": [[[1, 0], [0, 1]]], "probs": [1.0], "chi": []})


def test_load_reference_by_name():
    assert load_walk_config("ref-sl2").name == "ref-sl2"


def test_load_from_file_matches_reference(configs_dir):
    cfg = load_walk_config(configs_dir / "ref-sl2.json")
    ref = reference_model()
    assert [g.entries for g in cfg.generators] == [g.entries for g in ref.generators]
    assert cfg.probs == ref.probs


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_walk_config(tmp_path / "nope.json")


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_walk_config(path)


def test_determinant_error_is_config_error(tmp_path):
    path = tmp_path / "det.json"
    path.write_text(json.dumps({"dim": 2, "generators": [[[2, 0], [0, 1]]], "probs": [1.0], "chi": [0]}))
    with pytest.raises(ConfigError):
        load_walk_config(path)


def test_torus_point_reduces_mod_one():
    p = TorusPoint((Fraction(5, 4), Fraction(-1, 3)))
    assert p.coords == (Fraction(1, 4), Fraction(2, 3))
    assert p.denominator == 12
    assert TorusPoint.from_floats([1.25, -0.5]).coords == (0.25, 0.5)
