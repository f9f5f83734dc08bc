#!/usr/bin/env python3
"""Tests for Cartan projections, cocycles and Lyapunov estimation"""

import math
import unittest

import numpy as np
import pytest

from src.stationary_lab.cartan import (Flag, LogVector, cartan_projection, check_growth_contraction, cocycle_along,
                                       density_convergence, density_points, growth_lower_bound, iwasawa_cocycle,
                                       log_operator_norm, lookahead_flag, lyapunov_estimate, lyapunov_spectrum,
                                       renormalized_product, theta_n)
from src.stationary_lab.core_model import GroupElement, Word, reference_model, word_product
from src.stationary_lab.exceptions import GapError, PreconditionError


class TestCartanProjection(unittest.TestCase):
    """Test kappa(g) and the singular bases"""

    def setUp(self):
        self.cfg = reference_model()

    def test_g0_singular_values(self):
        frame = cartan_projection(self.cfg.generators[0])
        expected = math.log(1 + math.sqrt(2))
        np.testing.assert_allclose(frame.kappa, [expected, -expected], atol=1e-12)

    def test_identity_has_no_gap(self):
        frame = cartan_projection(GroupElement.identity(2))
        np.testing.assert_allclose(frame.kappa, [0.0, 0.0], atol=1e-15)
        with self.assertRaises(GapError):
            density_points(frame)

    def test_reconstruct(self):
        g = word_product([0, 2, 3, 2, 0, 0], self.cfg)
        frame = cartan_projection(g)
        np.testing.assert_allclose(frame.reconstruct(), g.as_array(), atol=1e-9)
        self.assertAlmostEqual(float(frame.kappa.sum()), 0.0, delta=1e-9)
        self.assertGreaterEqual(frame.kappa[0], frame.kappa[1])

    def test_three_dimensional_kappa_sums_to_zero(self):
        g = GroupElement(((2, 1, 0), (1, 1, 0), (0, 0, 1)))
        h = GroupElement(((1, 0, 0), (0, 2, 1), (0, 1, 1)))
        frame = cartan_projection(g @ h @ g @ h)
        self.assertAlmostEqual(float(frame.kappa.sum()), 0.0, delta=1e-9)
        self.assertTrue(np.all(np.diff(frame.kappa) <= 0))

    def test_renormalized_product_matches_exact(self):
        rng = np.random.default_rng(1)
        letters = self.cfg.sample_letters(rng, 30)
        exact = cartan_projection(word_product(letters, self.cfg))
        frame, _ = renormalized_product(letters, self.cfg)
        np.testing.assert_allclose(frame.kappa, exact.kappa, rtol=1e-9, atol=1e-9)

    def test_renormalized_product_long_word(self):
        letters = self.cfg.sample_letters(np.random.default_rng(2), 5000)
        frame, _ = renormalized_product(letters, self.cfg)
        self.assertTrue(np.all(np.isfinite(frame.kappa)))
        self.assertAlmostEqual(float(frame.kappa.sum()), 0.0, delta=1e-9 * max(1.0, frame.kappa[0]))
        self.assertAlmostEqual(frame.kappa[0], log_operator_norm(self.cfg, letters), delta=1e-6 * frame.kappa[0])

    def test_kappa_subadditive(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            g = word_product(self.cfg.sample_letters(rng, int(rng.integers(1, 25))), self.cfg)
            h = word_product(self.cfg.sample_letters(rng, int(rng.integers(1, 25))), self.cfg)
            joint = cartan_projection(g @ h).kappa[0]
            self.assertLessEqual(joint, cartan_projection(g).kappa[0] + cartan_projection(h).kappa[0] + 1e-9)

    def test_transpose_swaps_density_points(self):
        g = word_product([0, 2, 2, 0, 3, 0, 2], self.cfg)
        xi_plus, v_minus = density_points(cartan_projection(g))
        xi_plus_t, v_minus_t = density_points(cartan_projection(g.as_array().T))
        # the attracting line of g^T is orthogonal to the repelling hyperplane of g
        self.assertLess(abs(float(v_minus[:, 0] @ xi_plus_t[:, 0])), 1e-9)
        self.assertLess(abs(float(v_minus_t[:, 0] @ xi_plus[:, 0])), 1e-9)

    def test_diagonal_density_points(self):
        xi_plus, v_minus = density_points(cartan_projection(np.diag([2.0, 0.5])))
        np.testing.assert_allclose(np.abs(xi_plus[:, 0]), [1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(np.abs(v_minus[:, 0]), [0.0, 1.0], atol=1e-12)


class TestLogVector(unittest.TestCase):
    """Test log-scale vector transport"""

    def test_agrees_with_raw_vector(self):
        cfg = reference_model()
        letters = cfg.sample_letters(np.random.default_rng(4), 25)
        v = np.array([1e-6, -3e-7])
        raw = v.copy()
        for letter in letters:
            raw = cfg.matrices[letter] @ raw
        logged = LogVector.from_vector(v).transport(cfg.matrices[letters])
        np.testing.assert_allclose(logged.to_vector(), raw, rtol=1e-8, atol=1e-8 * np.linalg.norm(raw))

    def test_zero_vector_rejected(self):
        with self.assertRaises(PreconditionError):
            LogVector.from_vector([0.0, 0.0])


class TestCocycle(unittest.TestCase):
    """Test the Iwasawa cocycle"""

    def setUp(self):
        self.cfg = reference_model()

    def test_standard_flag_first_coordinate_is_log_norm(self):
        g = word_product([2, 0, 2], self.cfg)
        sigma = iwasawa_cocycle(g, Flag.standard(2))
        self.assertAlmostEqual(sigma[0], math.log(np.linalg.norm(g.as_array()[:, 0])), places=12)
        self.assertAlmostEqual(float(sigma.sum()), 0.0, places=12)

    def test_cocycle_identity(self):
        letters = [0, 2, 3, 0, 2, 2, 1]
        xi = Flag.from_vectors(np.array([[0.6, 1.0], [0.8, 0.0]]))
        along, image = cocycle_along(self.cfg.matrices[letters], xi)
        direct = iwasawa_cocycle(word_product(letters, self.cfg), xi)
        np.testing.assert_allclose(along, direct, atol=1e-9)
        expected = xi.transport(word_product(letters, self.cfg))
        np.testing.assert_allclose(np.abs(image.line), np.abs(expected.line), atol=1e-9)

    def test_eigenflag_of_diagonal_matrix(self):
        sigma = iwasawa_cocycle(np.diag([2.0, 0.5]), Flag.standard(2))
        np.testing.assert_allclose(sigma, [math.log(2), -math.log(2)], atol=1e-12)

    def test_g0_on_second_axis(self):
        xi = Flag(np.array([[0.0, 1.0], [1.0, 0.0]]))
        sigma = iwasawa_cocycle(self.cfg.generators[0], xi)
        half_log5 = 0.5 * math.log(5)
        np.testing.assert_allclose(sigma, [half_log5, -half_log5], atol=1e-12)

    def test_non_orthonormal_flag_rejected(self):
        with self.assertRaises(PreconditionError):
            Flag(np.array([[1.0, 1.0], [0.0, 1.0]]))


class TestGrowthContraction(unittest.TestCase):
    """Test the growth and contraction inequalities on random products"""

    def test_no_violations(self):
        cfg = reference_model()
        rng = np.random.default_rng(12)
        checked = 0
        for _ in range(500):
            g = word_product(cfg.sample_letters(rng, int(rng.integers(1, 31))), cfg)
            v = rng.standard_normal(2)
            try:
                report = check_growth_contraction(g, v / np.linalg.norm(v))
            except GapError:
                continue
            checked += 1
            self.assertTrue(report.ok, report.violations)
        self.assertGreater(checked, 400)

    def test_zero_vector_rejected(self):
        with self.assertRaises(PreconditionError):
            check_growth_contraction(reference_model().generators[0], [0.0, 0.0])


def test_lyapunov_positive(ref_cfg):
    estimate = lyapunov_estimate(ref_cfg, 500, 40, seed=3)
    assert estimate.lambda_hat > 0
    assert estimate.ci_lo > 0
    lam, (lo, hi) = estimate
    assert lo <= lam <= hi


def test_lyapunov_preconditions(ref_cfg):
    with pytest.raises(PreconditionError):
        lyapunov_estimate(ref_cfg, 50, 40, seed=0)
    with pytest.raises(PreconditionError):
        lyapunov_estimate(ref_cfg, 500, 10, seed=0)


def test_lyapunov_spectrum_sums_to_zero(ref_cfg):
    spectrum = lyapunov_spectrum(ref_cfg, 300, 20, seed=1)
    assert spectrum.exponents[0] > 0
    assert abs(float(spectrum.exponents.sum())) < 1e-9


def test_degenerate_model_rejected():
    from src.stationary_lab.core_model import WalkConfig

    identity = GroupElement.identity(2, 1.0)
    cfg = WalkConfig(dim=2, generators=(identity, identity.inverse()), probs=(0.5, 0.5))
    with pytest.raises(PreconditionError):
        lyapunov_estimate(cfg, 100, 30, seed=0)


def test_density_points_converge(ref_cfg):
    result = density_convergence(ref_cfg, [5, 10, 20], 200, seed=2)
    assert result.rate > 0
    assert list(result.table.columns) == ["n", "median", "rate"]


def test_theta_n(ref_cfg):
    word = Word(tuple(ref_cfg.sample_letters(np.random.default_rng(6), 260)))
    np.testing.assert_array_equal(theta_n(ref_cfg, word, 0, 200), np.zeros(2))
    theta = theta_n(ref_cfg, word, 40, 200)
    assert abs(float(theta.sum())) < 1e-9
    with pytest.raises(PreconditionError):
        theta_n(ref_cfg, word, 100, 200)


def test_lookahead_flag_is_orthonormal(ref_cfg):
    letters = ref_cfg.sample_letters(np.random.default_rng(8), 200)
    flag, used = lookahead_flag(ref_cfg, letters, 200)
    assert 1 <= used <= 200
    np.testing.assert_allclose(flag.basis.T @ flag.basis, np.eye(2), atol=1e-12)


def test_growth_lower_bound_monotone_in_k(ref_cfg):
    lam = 0.5
    early = growth_lower_bound(ref_cfg, 5, 100, 300, seed=4, lambda_hat=lam)
    late = growth_lower_bound(ref_cfg, 20, 100, 300, seed=4, lambda_hat=lam)
    assert 0.0 <= early <= late <= 1.0


def test_theta_n_stable_in_lookahead(ref_cfg):
    word = Word(tuple(ref_cfg.sample_letters(np.random.default_rng(9), 1200)))
    short = theta_n(ref_cfg, word, 1000, 100)
    long = theta_n(ref_cfg, word, 1000, 200)
    assert short[0] > 0
    assert abs(long[0] - short[0]) < 1e-3 * abs(long[0])


def test_dependent_replicas_give_degenerate_interval(ref_cfg):
    estimate = lyapunov_estimate(ref_cfg, 200, 30, seed=1, independent=False)
    assert estimate.ci_hi - estimate.ci_lo < 1e-12
    assert estimate.ci_lo - 1e-12 <= estimate.lambda_hat <= estimate.ci_hi + 1e-12
