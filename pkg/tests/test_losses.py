"""Loss functions, analytic gradients, the epoch switch, and prior matching."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lafd.anchors import encode_boxes, priors_to_array, generate_priors
from lafd.errors import InputError
from lafd.losses import (
    IGNORE,
    NEGATIVE,
    POSITIVE,
    LossParams,
    cross_entropy,
    focal_loss,
    loss_gradients,
    loss_schedule,
    match_priors,
    p_t,
    smooth_l1,
)

from oracles import central_diff, match_priors_brute


class TestSmoothL1:
    def test_quadratic_branch(self):
        assert smooth_l1(0.5) == 0.125

    def test_linear_branch(self):
        assert smooth_l1(2.0) == 1.5
        assert smooth_l1(-2.0) == 1.5

    def test_branch_boundary(self):
        assert smooth_l1(1.0) == 0.5
        assert smooth_l1(-1.0) == 0.5

    def test_continuity_dense_grid(self):
        grid = np.linspace(-4, 4, 10001)
        vals = smooth_l1(grid)
        spacing = grid[1] - grid[0]
        assert float(np.abs(np.diff(vals)).max()) <= spacing * 1.0001

    def test_derivative_bounded_by_one(self):
        grid = np.linspace(-5, 5, 5001)
        grads = loss_gradients(grid, None, None, "smooth_l1")
        assert float(np.abs(grads).max()) <= 1.0

    @given(st.floats(-10, 10))
    @settings(max_examples=100, deadline=None)
    def test_piecewise_definition(self, x):
        want = 0.5 * x * x if abs(x) < 1 else abs(x) - 0.5
        assert smooth_l1(x) == pytest.approx(want, abs=1e-12)


class TestCrossEntropy:
    def test_perfect_prediction_zero_loss(self):
        assert cross_entropy(1.0, 1) == 0.0
        assert cross_entropy(0.0, 0) == 0.0

    def test_coin_flip(self):
        assert cross_entropy(0.5, 1) == pytest.approx(math.log(2), abs=1e-12)
        assert cross_entropy(0.5, 0) == pytest.approx(math.log(2), abs=1e-12)

    def test_batch_mean(self):
        got = cross_entropy([0.9, 0.1], [1, 0])
        assert got == pytest.approx(-math.log(0.9), abs=1e-12)

    def test_clamped_at_zero_probability(self):
        assert np.isfinite(cross_entropy(0.0, 1))
        assert cross_entropy(0.0, 1) == pytest.approx(-math.log(1e-7), abs=1e-9)


class TestPt:
    def test_cases(self):
        assert p_t(0.9, 1) == 0.9
        assert p_t(0.9, 0) == pytest.approx(0.1)
        assert p_t(0.5, 1) == 0.5
        assert p_t(0.5, 0) == 0.5


class TestFocalLoss:
    def test_gamma_zero_is_weighted_cross_entropy(self, rng):
        p = rng.uniform(0.01, 0.99, size=500)
        y = rng.integers(0, 2, size=500)
        for alpha in (0.25, 0.5, 0.75):
            fl = focal_loss(p, y, LossParams(alpha=alpha, gamma=0.0), reduction="none")
            at = np.where(y == 1, alpha, 1 - alpha)
            ce = at * cross_entropy(p, y, reduction="none")
            np.testing.assert_allclose(fl, ce, atol=1e-7)

    def test_modulating_factor_hundredth(self):
        params = LossParams(alpha=0.25, gamma=2.0)
        fl = focal_loss(0.9, 1, params, reduction="none")
        weighted_ce = 0.25 * cross_entropy(0.9, 1, reduction="none")
        assert fl / weighted_ce == pytest.approx(0.01, abs=1e-9)

    def test_fully_correct_sample_zero_loss(self):
        params = LossParams(alpha=0.25, gamma=2.0)
        assert focal_loss(1.0, 1, params, reduction="none") == 0.0
        assert focal_loss(0.0, 0, params, reduction="none") == 0.0

    def test_half_weight_matches_half_cross_entropy(self, rng):
        p = rng.uniform(0.01, 0.99, size=200)
        y = rng.integers(0, 2, size=200)
        fl = focal_loss(p, y, LossParams(alpha=0.5, gamma=0.0), reduction="none")
        np.testing.assert_allclose(fl, 0.5 * cross_entropy(p, y, reduction="none"), atol=1e-7)

    def test_strictly_decreasing_in_pt(self):
        params = LossParams(alpha=0.25, gamma=2.0)
        pts = np.linspace(0.01, 0.99, 200)
        losses = focal_loss(pts, np.ones_like(pts), params, reduction="none")
        assert np.all(np.diff(losses) < 0)

    def test_hardness_ordering(self):
        params = LossParams(alpha=0.25, gamma=2.0)
        hard = focal_loss(0.1, 1, params, reduction="none")
        medium = focal_loss(0.5, 1, params, reduction="none")
        easy = focal_loss(0.9, 1, params, reduction="none")
        assert hard > medium > easy

    def test_param_validation(self):
        with pytest.raises(InputError):
            LossParams(alpha=1.5)
        with pytest.raises(InputError):
            LossParams(gamma=-1.0)
        with pytest.raises(InputError):
            LossParams(schedule_switch_epoch=300)


class TestLossGradients:
    def test_smooth_l1_branch_derivatives(self):
        assert loss_gradients(0.5, None, None, "smooth_l1") == 0.5
        assert loss_gradients(2.0, None, None, "smooth_l1") == 1.0
        assert loss_gradients(-2.0, None, None, "smooth_l1") == -1.0

    def test_ce_gradient_known_point(self):
        assert loss_gradients(0.5, 1, None, "ce") == -2.0

    def test_unknown_kind_rejected(self):
        with pytest.raises(InputError):
            loss_gradients(0.5, 1, None, "hinge")

    def test_all_kinds_match_finite_differences(self, rng):
        gammas = [0.0, 0.5, 1.0, 2.0, 5.0]
        alphas = [0.25, 0.5, 0.75]
        worst = 0.0
        for _ in range(1000):
            kind = ("ce", "focal", "smooth_l1")[int(rng.integers(0, 3))]
            params = LossParams(
                alpha=float(rng.choice(alphas)), gamma=float(rng.choice(gammas))
            )
            if kind == "smooth_l1":
                x = float(rng.uniform(-3, 3))
                if abs(abs(x) - 1.0) < 1e-3:
                    x += 0.01
                got = loss_gradients(x, None, params, kind)
                want = central_diff(smooth_l1, x)
            else:
                p = float(rng.uniform(0.01, 0.99))
                y = int(rng.integers(0, 2))
                if kind == "ce":
                    fn = lambda v: cross_entropy(v, y, reduction="none")
                else:
                    fn = lambda v: focal_loss(v, y, params, reduction="none")
                got = loss_gradients(p, y, params, kind)
                want = central_diff(fn, p)
            rel = abs(got - want) / max(abs(got), abs(want), 1e-12)
            worst = max(worst, rel)
        assert worst < 1e-3


class TestLossSchedule:
    def test_boundaries(self):
        assert loss_schedule(0) == "cross_entropy"
        assert loss_schedule(244) == "cross_entropy"
        assert loss_schedule(245) == "focal"
        assert loss_schedule(249) == "focal"

    def test_out_of_range_rejected(self):
        with pytest.raises(InputError):
            loss_schedule(250)
        with pytest.raises(InputError):
            loss_schedule(-1)


class TestMatchPriors:
    def test_exact_prior_gt_is_positive_with_zero_deltas(self):
        priors = np.array([[0.5, 0.5, 0.2, 0.2], [0.2, 0.2, 0.1, 0.1]], dtype=np.float32)
        gt = np.array([[0.4, 0.4, 0.6, 0.6]], dtype=np.float32)
        res = match_priors(priors, gt)
        assert res.labels[0] == POSITIVE
        assert res.gt_index[0] == 0
        np.testing.assert_allclose(res.box_targets[0], np.zeros(4), atol=1e-6)

    def test_empty_gt_all_negative(self):
        priors = priors_to_array(generate_priors(32, 32))
        res = match_priors(priors, np.zeros((0, 4), dtype=np.float32))
        assert np.all(res.labels == NEGATIVE)
        assert np.all(res.gt_index == -1)

    def test_in_between_overlap_is_ignored(self):
        priors = np.array([[0.5, 0.5, 0.2, 0.2], [0.52, 0.5, 0.2, 0.2], [0.9, 0.9, 0.02, 0.02]],
                          dtype=np.float32)
        # gt overlapping prior 1 at ~0.4 IoU: between neg 0.3 and pos 0.5
        gt = np.array([[0.46, 0.44, 0.66, 0.64]], dtype=np.float32)
        res = match_priors(priors, gt)
        # prior 1 overlaps most -> forced positive; prior 0 lands in between
        assert res.labels[1] == POSITIVE
        assert res.labels[0] == IGNORE
        assert res.labels[2] == NEGATIVE

    def test_random_scenes_match_brute_force(self, rng):
        for trial in range(30):
            n_priors = int(rng.integers(4, 40))
            n_gt = int(rng.integers(0, 5))
            priors = np.zeros((n_priors, 4), dtype=np.float32)
            priors[:, :2] = rng.uniform(0.1, 0.9, size=(n_priors, 2))
            priors[:, 2:] = rng.uniform(0.05, 0.4, size=(n_priors, 2))
            gt = np.zeros((n_gt, 4), dtype=np.float32)
            if n_gt:
                centers = rng.uniform(0.2, 0.8, size=(n_gt, 2))
                halves = rng.uniform(0.03, 0.2, size=(n_gt, 2))
                gt[:, :2] = centers - halves
                gt[:, 2:] = centers + halves
            res = match_priors(priors, gt)
            half = priors[:, 2:] / 2
            corners = np.concatenate([priors[:, :2] - half, priors[:, :2] + half], axis=1)
            labels, matched = match_priors_brute(
                corners.tolist(), gt.tolist(), pos_iou=0.5, neg_iou=0.3
            )
            assert res.labels.tolist() == labels, f"trial {trial}"
            assert res.gt_index.tolist() == matched, f"trial {trial}"

    def test_targets_use_decode_inverse(self, rng):
        priors = np.array([[0.5, 0.5, 0.2, 0.3]], dtype=np.float32)
        gt = np.array([[0.42, 0.38, 0.64, 0.66]], dtype=np.float32)
        res = match_priors(priors, gt)
        assert res.labels[0] == POSITIVE
        np.testing.assert_allclose(
            res.box_targets[0], encode_boxes(gt, priors)[0], atol=1e-6
        )

    def test_requires_priors(self):
        with pytest.raises(InputError):
            match_priors(np.zeros((0, 4)), np.zeros((0, 4)))
