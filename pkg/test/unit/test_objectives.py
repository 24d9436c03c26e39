"""
Unit tests for the softmax losses, proximal client objective, penalty and quadratic oracles.
"""

import unittest

import numpy as np

from zohfl.exceptions import EmptyDataError, InvalidDimensionError, InvalidParameterError, UnsupportedOracleError
from zohfl.models import ConstraintSpec, DatasetShard, QuadraticProblem, SoftmaxModel
from zohfl.numkit import RngStream
from zohfl.objectives import (
    ProximalQuadraticObjective, ProximalSoftmaxObjective, cross_entropy, cross_entropy_grad, f1_loss,
    f1_stoch_grad, local_objective_grad, local_objective_value, penalty_value, quad_solution,
)
from zohfl.oracles import finite_diff_grad


def _random_shard(seed=0, n=400, features=3, classes=4):
    rng = RngStream(seed)
    return DatasetShard(rng.normal((n, features)), rng.integers(0, classes, n), classes)


class TestF1Loss(unittest.TestCase):
    """Test cases for the server cross-entropy"""

    def test_zero_weights_give_log_num_classes(self):
        shard = _random_shard(classes=10)
        model = SoftmaxModel.zeros(10, 3)
        self.assertAlmostEqual(f1_loss(model, shard), np.log(10), places=12)

    def test_two_class_symmetric_case(self):
        shard = DatasetShard(np.array([[1.0]]), np.array([0]), 2)
        self.assertAlmostEqual(f1_loss(SoftmaxModel.zeros(2, 1), shard), np.log(2), places=12)

    def test_hand_evaluated_value(self):
        shard = DatasetShard(np.array([[1.0]]), np.array([0]), 2)
        model = SoftmaxModel(np.array([1.0, 0.0]), 2, 1)
        self.assertAlmostEqual(f1_loss(model, shard), 0.313262, places=6)

    def test_large_logits_stay_finite(self):
        shard = DatasetShard(np.array([[1000.0]]), np.array([1]), 2)
        self.assertTrue(np.isfinite(cross_entropy(np.array([1.0, -1.0]), shard)))

    def test_empty_shard(self):
        empty = DatasetShard(np.zeros((0, 2)), np.zeros(0, dtype=int), 2)
        with self.assertRaises(EmptyDataError):
            f1_loss(SoftmaxModel.zeros(2, 2), empty)

    def test_dimension_mismatch(self):
        with self.assertRaises(InvalidDimensionError):
            f1_loss(SoftmaxModel.zeros(4, 5), _random_shard())


class TestF1Gradient(unittest.TestCase):
    """Test cases for stochastic cross-entropy gradients"""

    def setUp(self):
        self.shard = _random_shard(seed=1, n=50)
        self.model = SoftmaxModel(0.3 * RngStream(2).normal(12), 4, 3)

    def test_full_batch_equals_deterministic_gradient(self):
        g = f1_stoch_grad(self.model, self.shard, RngStream(0), batch=self.shard.size)
        np.testing.assert_allclose(g, cross_entropy_grad(self.model.weights, self.shard))

    def test_matches_finite_differences(self):
        numeric = finite_diff_grad(lambda w: cross_entropy(w, self.shard), self.model.weights, 1e-5)
        exact = cross_entropy_grad(self.model.weights, self.shard)
        np.testing.assert_allclose(numeric, exact, atol=1e-5 * max(1.0, np.abs(exact).max()))

    def test_batch_one_is_unbiased(self):
        rng = RngStream(6)
        draws = np.array([f1_stoch_grad(self.model, self.shard, rng, 1) for _ in range(10000)])
        se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
        full = cross_entropy_grad(self.model.weights, self.shard)
        self.assertTrue(np.all(np.abs(draws.mean(axis=0) - full) <= 4.0 * se + 1e-12))

    def test_zero_batch_rejected(self):
        with self.assertRaises(InvalidParameterError):
            f1_stoch_grad(self.model, self.shard, RngStream(0), 0)


class TestLocalObjective(unittest.TestCase):
    """Test cases for the proximal client objective"""

    def setUp(self):
        self.shard = _random_shard(seed=3, n=30)
        rng = RngStream(4)
        self.x = rng.normal(12)
        self.y = rng.normal(12)

    def test_prox_vanishes_at_anchor(self):
        g = local_objective_grad(self.x, self.x, self.shard, mu=0.7)
        np.testing.assert_allclose(g, cross_entropy_grad(self.x, self.shard))

    def test_mu_zero_is_plain_cross_entropy(self):
        g = local_objective_grad(self.x, self.y, self.shard, mu=0.0)
        np.testing.assert_allclose(g, cross_entropy_grad(self.y, self.shard))

    def test_matches_finite_differences(self):
        numeric = finite_diff_grad(lambda y: local_objective_value(self.x, y, self.shard, 0.5), self.y, 1e-5)
        exact = local_objective_grad(self.x, self.y, self.shard, 0.5)
        np.testing.assert_allclose(numeric, exact, atol=1e-5 * max(1.0, np.abs(exact).max()))

    def test_strong_convexity_witness(self):
        mu = 0.3
        objective = ProximalSoftmaxObjective(self.shard, mu)
        rng = RngStream(5)
        for _ in range(20):
            y1, y2 = rng.normal(12), rng.normal(12)
            lhs = (objective.grad(self.x, y1) - objective.grad(self.x, y2)) @ (y1 - y2)
            self.assertGreaterEqual(lhs, mu * np.sum((y1 - y2) ** 2) - 1e-10)

    def test_gradient_step_descends(self):
        objective = ProximalSoftmaxObjective(self.shard, 0.2)
        before = objective.value(self.x, self.y)
        after = objective.value(self.x, self.y - 1e-3 * objective.grad(self.x, self.y))
        self.assertLess(after, before)


class TestPenalty(unittest.TestCase):
    """Test cases for the weighted penalty"""

    def test_zero_distance(self):
        self.assertEqual(penalty_value(np.ones(3), np.ones(3), 1.0, 1.0), 0.0)

    def test_formula(self):
        self.assertAlmostEqual(penalty_value(np.zeros(1), np.array([2.0]), 2.0, 1.0), 4.0)

    def test_zero_weight(self):
        self.assertEqual(penalty_value(np.zeros(2), np.array([5.0, 1.0]), 3.0, 0.0), 0.0)

    def test_symmetry(self):
        rng = RngStream(0)
        x, y = rng.normal(4), rng.normal(4)
        self.assertAlmostEqual(penalty_value(x, y, 1.5, 0.2), penalty_value(y, x, 1.5, 0.2))

    def test_dimension_mismatch(self):
        with self.assertRaises(InvalidDimensionError):
            penalty_value(np.zeros(2), np.zeros(3), 1.0, 1.0)


class TestQuadraticSolution(unittest.TestCase):
    """Test cases for closed-form lower-level minimisers"""

    def test_identity_system(self):
        q = QuadraticProblem(np.eye(2), -np.array([1.0, 2.0]))
        np.testing.assert_allclose(quad_solution(q, ConstraintSpec.unconstrained()), [1.0, 2.0])

    def test_ball_projects_radially(self):
        q = QuadraticProblem(np.eye(2), -np.array([3.0, 0.0]))
        np.testing.assert_allclose(quad_solution(q, ConstraintSpec.ball(1.0), np.zeros(2)), [1.0, 0.0], atol=1e-9)

    def test_diagonal_system(self):
        q = QuadraticProblem(np.diag([2.0, 4.0]), -np.array([2.0, 4.0]))
        np.testing.assert_allclose(quad_solution(q, ConstraintSpec.unconstrained()), [1.0, 1.0])

    def test_ball_with_general_matrix_satisfies_kkt(self):
        A = np.array([[3.0, 1.0], [1.0, 2.0]])
        q = QuadraticProblem(A, np.array([-6.0, -4.0]))
        anchor = np.zeros(2)
        y = quad_solution(q, ConstraintSpec.ball(0.5), anchor)
        self.assertAlmostEqual(float(np.linalg.norm(y - anchor)), 0.5, delta=1e-9)
        grad = A @ y + q.b
        # at the boundary optimum the gradient points back toward the anchor
        cosine = grad @ (y - anchor) / (np.linalg.norm(grad) * 0.5)
        self.assertAlmostEqual(float(cosine), -1.0, delta=1e-6)

    def test_orthant_diagonal(self):
        q = QuadraticProblem(np.diag([1.0, 2.0]), np.array([1.0, -4.0]))
        np.testing.assert_allclose(quad_solution(q, ConstraintSpec.orthant()), [0.0, 2.0])

    def test_orthant_rejects_coupled_matrix(self):
        q = QuadraticProblem(np.array([[2.0, 1.0], [1.0, 2.0]]), np.zeros(2))
        with self.assertRaises(UnsupportedOracleError):
            quad_solution(q, ConstraintSpec.orthant())

    def test_non_symmetric_rejected(self):
        with self.assertRaises(InvalidParameterError):
            QuadraticProblem(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))

    def test_proximal_quadratic_solution(self):
        objective = ProximalQuadraticObjective(None, mu=1.0, dim=2)
        x = np.array([-1.0, 2.0])
        np.testing.assert_allclose(objective.solution(x, ConstraintSpec.orthant()), [0.0, 2.0])


if __name__ == '__main__':
    unittest.main()
