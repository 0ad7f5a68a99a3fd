import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from src.errors import DegenerateSampleError, InsufficientMatchesError, InvalidArgumentError
from src.geometry import RigidTransform
from src.registration import (
    MatchSet,
    match_descriptors,
    ransac_register,
    registration_success,
    required_iterations,
    rigid_solve,
    rotation_angle,
    rte_rre,
)


def _identity_matches(n):
    return MatchSet(np.arange(n), np.arange(n), np.zeros(n))


class TestMatching:
    def test_identical_sets_match_themselves(self, rng):
        desc = rng.normal(size=(20, 8))
        matches = match_descriptors(desc, desc)
        np.testing.assert_array_equal(matches.index_a, np.arange(20))
        np.testing.assert_array_equal(matches.index_b, np.arange(20))
        np.testing.assert_allclose(matches.distance, 0.0)

    def test_mutual_is_symmetric(self, rng):
        a, b = rng.normal(size=(15, 4)), rng.normal(size=(12, 4))
        ab = set(zip(*[m.tolist() for m in (match_descriptors(a, b).index_a, match_descriptors(a, b).index_b)]))
        ba_set = match_descriptors(b, a)
        ba = set(zip(ba_set.index_b.tolist(), ba_set.index_a.tolist()))
        assert ab == ba

    def test_nearest_neighbour_oracle(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            a, b = rng.normal(size=(10, 3)), rng.normal(size=(7, 3))
            matches = match_descriptors(a, b, mode="nn")
            assert len(matches) == 10
            for i, j, d in matches.pairs():
                distances = [np.linalg.norm(a[i] - b[k]) for k in range(7)]
                assert j == int(np.argmin(distances))
                assert d == pytest.approx(min(distances), abs=1e-6)

    def test_mutual_oracle(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            a, b = rng.normal(size=(12, 4)), rng.normal(size=(9, 4))
            dist = np.array([[np.linalg.norm(x - y) for y in b] for x in a])
            expected = {(i, int(np.argmin(dist[i]))) for i in range(12) if int(np.argmin(dist[:, np.argmin(dist[i])])) == i}
            assert {(i, j) for i, j, _ in match_descriptors(a, b, mode="mutual").pairs()} == expected

    def test_mutual_is_subset_of_nn(self, rng):
        a, b = rng.normal(size=(30, 3)), rng.normal(size=(30, 3))
        nn = set(match_descriptors(a, b, "nn").pairs())
        assert set(match_descriptors(a, b, "mutual").pairs()) <= nn

    def test_ties_break_to_lower_index(self):
        matches = match_descriptors(np.array([[0.0]]), np.array([[1.0], [-1.0]]), mode="nn")
        assert matches.index_b[0] == 0

    def test_rejects_empty_and_mismatched(self, rng):
        with pytest.raises(InvalidArgumentError):
            match_descriptors(np.zeros((0, 3)), rng.normal(size=(2, 3)))
        with pytest.raises(InvalidArgumentError):
            match_descriptors(rng.normal(size=(2, 3)), rng.normal(size=(2, 4)))
        with pytest.raises(InvalidArgumentError):
            match_descriptors(rng.normal(size=(2, 3)), rng.normal(size=(2, 3)), mode="ratio")


class TestRigidSolve:
    def test_exact_recovery(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            truth = RigidTransform.random(rng)
            a = rng.uniform(-5, 5, size=(10, 3))
            estimate = rigid_solve(a, truth.apply_points(a))
            rte, rre = rte_rre(estimate, truth)
            assert rte < 1e-9
            assert rre < 1e-7

    def test_noisy_residual_stays_near_noise_level(self):
        sigma = 0.01
        for seed in range(10):
            rng = np.random.default_rng(seed)
            truth = RigidTransform.random(rng)
            a = rng.uniform(-5, 5, size=(200, 3))
            b = truth.apply_points(a) + rng.normal(0, sigma, size=a.shape)
            estimate = rigid_solve(a, b)
            residual = np.linalg.norm(estimate.apply_points(a) - b, axis=1)
            assert np.sqrt(np.mean(residual**2)) <= 2 * sigma

    def test_three_points_suffice(self, rng):
        truth = RigidTransform.random(rng)
        a = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
        estimate = rigid_solve(a, truth.apply_points(a))
        np.testing.assert_allclose(estimate.as_matrix(), truth.as_matrix(), atol=1e-9)

    def test_never_returns_a_reflection(self, rng):
        a = rng.normal(size=(6, 3))
        mirrored = a * np.array([1.0, 1.0, -1.0])
        assert np.linalg.det(rigid_solve(a, mirrored).rotation) == pytest.approx(1.0)

    def test_weights_select_the_consistent_subset(self, rng):
        truth = RigidTransform.random(rng)
        a = rng.uniform(-5, 5, size=(8, 3))
        b = truth.apply_points(a)
        b[5:] += 10.0
        weights = np.array([1.0] * 5 + [0.0] * 3)
        rte, rre = rte_rre(rigid_solve(a, b, weights), truth)
        assert rte < 1e-8 and rre < 1e-6

    def test_collinear_sample(self):
        a = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        with pytest.raises(DegenerateSampleError):
            rigid_solve(a, a)

    def test_too_few_pairs(self):
        with pytest.raises(DegenerateSampleError):
            rigid_solve(np.eye(3)[:2], np.eye(3)[:2])

    def test_bad_weights(self, rng):
        a = rng.normal(size=(4, 3))
        with pytest.raises(InvalidArgumentError):
            rigid_solve(a, a, weights=[1.0, -1.0, 1.0, 1.0])


class TestRansac:
    def test_recovers_transform_with_outliers(self):
        rng = np.random.default_rng(3)
        truth = RigidTransform.random(rng)
        a = rng.uniform(-10, 10, size=(100, 3))
        b = truth.apply_points(a) + rng.normal(0, 0.01, size=a.shape)
        outliers = rng.choice(100, size=30, replace=False)
        b[outliers] = rng.uniform(-30, 30, size=(30, 3))
        result = ransac_register(_identity_matches(100), a, b, inlier_threshold=0.1, seed=0)
        rte, rre = rte_rre(result.transform, truth)
        assert rte < 0.05 and rre < 0.5
        assert result.inliers >= 70
        assert not result.inlier_mask[outliers].any()
        assert result.converged

    def test_recovery_rate_over_seeded_trials(self):
        recovered = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            truth = RigidTransform.random(rng)
            a = rng.uniform(-10, 10, size=(100, 3))
            b = truth.apply_points(a) + rng.normal(0, 0.01, size=a.shape)
            outliers = rng.choice(100, size=30, replace=False)
            b[outliers] = rng.uniform(-30, 30, size=(30, 3))
            result = ransac_register(_identity_matches(100), a, b, inlier_threshold=0.1, seed=seed)
            rte, rre = rte_rre(result.transform, truth)
            recovered += rte < 0.05 and rre < 0.5
        assert recovered >= 95

    def test_is_seeded(self, rng):
        a = rng.uniform(-10, 10, size=(40, 3))
        b = rng.uniform(-10, 10, size=(40, 3))
        first = ransac_register(_identity_matches(40), a, b, seed=4, max_iter=50)
        second = ransac_register(_identity_matches(40), a, b, seed=4, max_iter=50)
        np.testing.assert_array_equal(first.transform.as_matrix(), second.transform.as_matrix())
        assert first.iterations == second.iterations

    def test_stops_at_max_iter(self, rng):
        a = rng.uniform(-50, 50, size=(60, 3))
        b = rng.uniform(-50, 50, size=(60, 3))
        result = ransac_register(_identity_matches(60), a, b, inlier_threshold=0.01, max_iter=5, seed=0)
        assert result.iterations == 5
        assert not result.converged

    def test_all_inliers_stop_after_one_hypothesis(self, rng):
        truth = RigidTransform.random(rng)
        a = rng.uniform(-10, 10, size=(30, 3))
        result = ransac_register(_identity_matches(30), a, truth.apply_points(a), inlier_threshold=0.1)
        assert result.iterations == 1
        assert result.inliers == 30
        assert result.converged

    def test_too_few_matches(self, rng):
        a = rng.normal(size=(2, 3))
        with pytest.raises(InsufficientMatchesError):
            ransac_register(_identity_matches(2), a, a)

    def test_saliency_weights_accepted(self, rng):
        truth = RigidTransform.random(rng)
        a = rng.uniform(-10, 10, size=(25, 3))
        result = ransac_register(
            _identity_matches(25), a, truth.apply_points(a), inlier_threshold=0.1, weights=rng.uniform(0.1, 1.0, 25)
        )
        rte, rre = rte_rre(result.transform, truth)
        assert rte < 1e-6 and rre < 1e-5


class TestRequiredIterations:
    def test_half_inliers(self):
        assert required_iterations(0.5, 0.99) == math.ceil(math.log(0.01) / math.log(1 - 0.125)) == 35

    def test_limits(self):
        assert required_iterations(1.0) == 1
        assert required_iterations(0.0) == math.inf

    def test_monotone_in_ratio(self):
        values = [required_iterations(w) for w in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert values == sorted(values, reverse=True)


class TestMetrics:
    def test_ten_degree_yaw(self):
        rte, rre = rte_rre(RigidTransform.from_yaw(10.0, (1.0, 0.0, 0.0)), RigidTransform.identity())
        assert rte == pytest.approx(1.0)
        assert rre == pytest.approx(10.0, abs=1e-9)

    def test_angle_against_rotation_vector(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            estimate, truth = RigidTransform.random(rng), RigidTransform.random(rng)
            _, rre = rte_rre(estimate, truth)
            oracle = Rotation.from_matrix(truth.rotation.T @ estimate.rotation).magnitude()
            assert rre == pytest.approx(np.degrees(oracle), abs=1e-6)

    def test_rotation_error_ignores_a_common_motion(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            estimate, truth, motion = (RigidTransform.random(rng) for _ in range(3))
            _, rre = rte_rre(estimate, truth)
            _, moved_after = rte_rre(motion.compose(estimate), motion.compose(truth))
            _, moved_before = rte_rre(estimate.compose(motion), truth.compose(motion))
            assert moved_after == pytest.approx(rre, abs=1e-6)
            assert moved_before == pytest.approx(rre, abs=1e-6)

    def test_small_and_half_turn_angles(self):
        assert rotation_angle(Rotation.from_rotvec([0, 0, 1e-7]).as_matrix()) == pytest.approx(np.degrees(1e-7), rel=1e-6)
        assert rotation_angle(Rotation.from_rotvec([0, np.pi, 0]).as_matrix()) == pytest.approx(180.0)

    @pytest.mark.parametrize(
        "rte, rre, expected",
        [(0.23, 0.95, True), (2.0, 1.0, False), (1.9, 5.1, False), (1.99, 4.99, True), (0.0, 5.0, False)],
    )
    def test_success_thresholds(self, rte, rre, expected):
        assert registration_success(rte, rre) is expected
