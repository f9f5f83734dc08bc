#!/usr/bin/env python3
"""Tests for fiber sampling, the law of angles and drift along fibers"""

import math
import unittest

import numpy as np
import pytest

from src.stationary_lab.core_model import GroupElement, WalkConfig, reference_model
from src.stationary_lab.exceptions import PreconditionError
from src.stationary_lab.fiber_lab import (BasePoint, DriftDemoResult, WindowSpec, calibrate_norm_constant,
                                          circular_ks, drift_demo, drift_image, fiber_equidistribution, fiber_point,
                                          law_of_angles, window_conditional_sample)


@pytest.fixture
def base_point(ref_cfg):
    return BasePoint.random(ref_cfg, 260, seed=5)


class TestWindowSpec(unittest.TestCase):
    """Test window construction and checks"""

    def setUp(self):
        self.cfg = reference_model()

    def test_default_window_is_valid(self):
        WindowSpec.default(2).validate_for(self.cfg)

    def test_short_interval_rejected(self):
        with self.assertRaises(PreconditionError):
            WindowSpec(((-1.0, 1.0),), (-0.5, 0.5)).validate_for(self.cfg)

    def test_wrong_number_of_coordinates(self):
        with self.assertRaises(PreconditionError):
            WindowSpec(((-1.0, 1.0), (-1.0, 1.0)), (-2.0, 2.0)).validate_for(self.cfg)

    def test_empty_interior(self):
        with self.assertRaises(PreconditionError):
            WindowSpec(((1.0, 1.0),), (-2.0, 2.0))

    def test_shrink_keeps_center(self):
        shrunk = WindowSpec(((0.0, 2.0),), (-2.0, 2.0)).shrink(0.5)
        self.assertEqual(shrunk.U, ((0.5, 1.5),))
        self.assertEqual(shrunk.I, (-2.0, 2.0))

    def test_full_window_is_unbounded(self):
        self.assertFalse(WindowSpec.full(2).bounded)
        self.assertTrue(WindowSpec.default(2).bounded)


class TestCircularKS(unittest.TestCase):
    """Test the rotation-invariant KS distance"""

    def test_identical_samples(self):
        angles = np.array([0.1, 0.5, 2.0, 3.0])
        self.assertEqual(circular_ks(angles, angles.copy()), 0.0)

    def test_single_distinct_angles(self):
        self.assertEqual(circular_ks(np.array([0.3]), np.array([1.2])), 1.0)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(0)
        a, b = rng.uniform(0, np.pi, 200), rng.uniform(0, np.pi, 150)
        self.assertAlmostEqual(circular_ks(a, b), circular_ks(a + 1.0, b + 1.0), places=12)

    def test_empty_sample(self):
        self.assertEqual(circular_ks(np.array([]), np.array([1.0])), 1.0)


def test_same_prefix_has_zero_shift(ref_cfg, base_point):
    n = 30
    sample = fiber_point(ref_cfg, base_point, base_point.b_word.letters[:n], n, WindowSpec.default(2))
    assert np.all(sample.theta_shift == 0.0)
    assert sample.chi_shift == 0.0
    assert sample.accepted


def test_fiber_point_length_mismatch(ref_cfg, base_point):
    with pytest.raises(PreconditionError):
        fiber_point(ref_cfg, base_point, [0, 1], 3, WindowSpec.default(2))


def test_base_word_too_short(ref_cfg):
    short = BasePoint.random(ref_cfg, 50, seed=1)
    with pytest.raises(PreconditionError):
        window_conditional_sample(ref_cfg, short, 10, WindowSpec.default(2), 10, seed=0, budget=100)


def test_full_window_accepts_everything(ref_cfg, base_point):
    result = window_conditional_sample(ref_cfg, base_point, 10, WindowSpec.full(2), 100, seed=2, budget=50)
    assert result.draws == 50
    assert result.accepted == 50
    assert result.rate == 1.0
    assert result.exhausted


def test_shrinking_window_lowers_acceptance(ref_cfg, base_point):
    wide = WindowSpec.default(2)
    narrow = wide.shrink(0.25)
    a = window_conditional_sample(ref_cfg, base_point, 12, wide, 10**9, seed=4, budget=3000)
    b = window_conditional_sample(ref_cfg, base_point, 12, narrow, 10**9, seed=4, budget=3000)
    assert a.draws == b.draws == 3000
    assert b.accepted <= a.accepted
    accepted_words = {s.a_word for s in a.samples}
    assert all(s.a_word in accepted_words for s in b.samples)


def test_accepted_samples_lie_in_window(ref_cfg, base_point):
    W = WindowSpec.default(2)
    result = window_conditional_sample(ref_cfg, base_point, 8, W, 50, seed=3, budget=5000)
    assert result.accepted >= len(result.samples)
    for s in result.samples:
        assert W.U[0][0] <= base_point.z[0] + s.theta_shift[0] <= W.U[0][1]
        assert W.I[0] <= base_point.state.t + s.chi_shift <= W.I[1]
    lo, hi = result.ci
    assert lo <= result.rate <= hi


def test_law_of_angles_small(ref_cfg, base_point):
    result = law_of_angles(ref_cfg, base_point, 10, WindowSpec.default(2), 100, seed=1, budget=20_000)
    assert result.accepted > 0
    assert list(result.table.columns) == ["sample", "angle_cond", "angle_uncond"]
    assert 0.0 <= result.ks <= 1.0
    angles = result.table["angle_cond"].dropna()
    assert len(angles) > 0
    assert ((angles >= 0) & (angles < np.pi)).all()


def test_law_of_angles_full_window_matches_unconditioned(ref_cfg, base_point):
    N = 400
    result = law_of_angles(ref_cfg, base_point, 10, WindowSpec.full(2), N, seed=2, budget=N)
    n_eff = int(result.table["angle_cond"].notna().sum())
    assert n_eff == N - result.dropped["conditioned"]
    assert result.ks <= 3 * 1.36 / math.sqrt(n_eff)


def test_drift_image_identity(ref_cfg, base_point):
    b = base_point.b_word.letters[:25]
    u = np.array([3e-7, -1e-6])
    exact, transported = drift_image(ref_cfg, b, b, u)
    np.testing.assert_array_equal(exact, u)
    np.testing.assert_allclose(transported.to_vector(), u, rtol=1e-8)


def test_drift_image_agrees_with_log_transport(ref_cfg, base_point):
    b = base_point.b_word.letters[:20]
    a = ref_cfg.sample_letters(np.random.default_rng(7), 20)
    exact, transported = drift_image(ref_cfg, b, a, [1e-6, 2e-6])
    assert math.isclose(transported.log_norm, math.log(np.linalg.norm(exact)), rel_tol=1e-8, abs_tol=1e-8)


def test_drift_demo_rejects_large_perturbation(ref_cfg, base_point):
    with pytest.raises(PreconditionError):
        drift_demo(ref_cfg, base_point, 1e-3, 2, WindowSpec.default(2), 1e-3, 1e-1, seed=0, C=2.0)


def test_drift_demo_full_window_produces_samples(ref_cfg, base_point):
    result = drift_demo(ref_cfg, base_point, 1e-6, 3, WindowSpec.full(2), 1e-3, 1e-1, seed=0,
                        N_per_direction=5, budget=50, n_max=40, C=2.0)
    assert isinstance(result, DriftDemoResult)
    assert result.C == 2.0
    assert list(result.table.columns) == ["direction", "n_p", "sample", "s_np", "in_eps_window", "norm_Du",
                                          "log_ratio", "ang_dist", "transport_gap"]
    assert len(result.table) > 0
    assert len(result.table) + 5 * len(result.aborted) == 15
    assert (result.table["s_np"] > 1e-3).all()
    assert (result.table["n_p"] <= 40).all()
    assert (result.table["transport_gap"] < 1e-6).all()
    assert result.delta_hat > 0


def test_drift_demo_norm_control_with_calibrated_constant(ref_cfg, base_point):
    result = drift_demo(ref_cfg, base_point, 1e-6, 4, WindowSpec.default(2), 1e-3, 1e-1, seed=1,
                        N_per_direction=40, budget=4000, n_max=40)
    assert result.C >= 1.0
    assert len(result.table) >= 40
    inside = (result.table["log_ratio"].abs() <= math.log(result.C)).mean()
    assert result.fraction_in_window == pytest.approx(inside)
    assert result.fraction_in_window >= 0.75
    assert result.delta_hat > 0


def test_calibrated_constant_at_least_one(ref_cfg, base_point):
    C = calibrate_norm_constant(ref_cfg, base_point, 10, WindowSpec.default(2), 30, seed=2, budget=10_000)
    assert C >= 1.0


def test_equidistribution_single_cell(ref_cfg, base_point):
    result = fiber_equidistribution(ref_cfg, base_point, [5, 10], WindowSpec.default(2), (1, 1), 50,
                                    seed=3, budget=5000)
    assert list(result.table["mass"]) == [1.0, 1.0]
    assert result.l1_diffs == [0.0]


def test_equidistribution_partition_masses_sum_to_one(ref_cfg, base_point):
    result = fiber_equidistribution(ref_cfg, base_point, [8], WindowSpec.default(2), (2, 3), 200,
                                    seed=3, budget=20_000)
    assert len(result.table) == 6
    assert result.table["mass"].sum() == pytest.approx(1.0)


def test_equidistribution_needs_bounded_window(ref_cfg, base_point):
    with pytest.raises(PreconditionError):
        fiber_equidistribution(ref_cfg, base_point, [5], WindowSpec.full(2), (1, 1), 10, seed=0, budget=100)


@pytest.fixture
def sl3_cfg():
    g = GroupElement(((2, 1, 0), (1, 1, 0), (0, 0, 1)))
    h = GroupElement(((1, 0, 0), (0, 2, 1), (0, 1, 1)))
    gens = (g, g.inverse(), GroupElement(h.entries, 1.0), GroupElement(h.inverse().entries, -1.0))
    return WalkConfig(dim=3, generators=gens, probs=(0.25, 0.25, 0.25, 0.25), seed=0)


def test_equidistribution_partitions_every_torus_axis(sl3_cfg):
    c = BasePoint.random(sl3_cfg, 230, seed=1)
    W = WindowSpec(((-20.0, 20.0), (-20.0, 20.0)), (-3.0, 3.0))
    result = fiber_equidistribution(sl3_cfg, c, [6], W, (1, 2, 1), 100, seed=3, budget=2000)
    assert len(result.table) == 2
    assert result.table["mass"].sum() == pytest.approx(1.0)

    sample = window_conditional_sample(sl3_cfg, c, 6, W, 100, seed=3, budget=2000)
    second = np.array([c.z[1] + s.theta_shift[1] for s in sample.samples])
    assert result.table["mass"].iloc[0] == pytest.approx(np.mean(second < 0.0))


def test_equidistribution_needs_one_count_per_axis(sl3_cfg):
    c = BasePoint.random(sl3_cfg, 230, seed=1)
    W = WindowSpec(((-20.0, 20.0), (-20.0, 20.0)), (-3.0, 3.0))
    with pytest.raises(PreconditionError):
        fiber_equidistribution(sl3_cfg, c, [6], W, (2, 3), 10, seed=0, budget=100)
