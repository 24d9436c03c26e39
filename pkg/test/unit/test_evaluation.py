"""
Unit tests for model accuracy.
"""

import unittest

import numpy as np

from zohfl.data import synth_blobs
from zohfl.evaluation import evaluate_accuracy, predict
from zohfl.exceptions import EmptyDataError, InvalidDimensionError
from zohfl.models import DatasetShard, SoftmaxModel
from zohfl.numkit import RngStream
from zohfl.objectives import cross_entropy_grad
from test.test_utils import separable_shard


class TestEvaluateAccuracy(unittest.TestCase):
    """Test cases for evaluate_accuracy"""

    def test_zero_model_predicts_class_zero(self):
        shard = synth_blobs(RngStream(0), 10, 12, 20)
        accuracy = evaluate_accuracy(SoftmaxModel.zeros(10, 12), shard)
        self.assertAlmostEqual(accuracy, 0.1)

    def test_ties_go_to_lowest_class(self):
        self.assertEqual(predict(np.zeros(6), np.ones((2, 3)), 2).tolist(), [0, 0])

    def test_trained_on_separable_data(self):
        shard = synth_blobs(RngStream(1), 4, 5, 50, spread=0.05)
        w = np.zeros(shard.num_classes * shard.feature_dim)
        for _ in range(300):
            w = w - 0.5 * cross_entropy_grad(w, shard)
        self.assertGreaterEqual(evaluate_accuracy(w, shard), 0.99)

    def test_accepts_flat_vector(self):
        shard = separable_shard()
        self.assertEqual(evaluate_accuracy(np.array([1.0, 0.0, -1.0, 0.0]), shard), 1.0)

    def test_empty_test_set(self):
        empty = DatasetShard(np.zeros((0, 2)), np.zeros(0, dtype=int), 2)
        with self.assertRaises(EmptyDataError):
            evaluate_accuracy(np.zeros(4), empty)

    def test_dimension_mismatch(self):
        with self.assertRaises(InvalidDimensionError):
            evaluate_accuracy(np.zeros(5), separable_shard())


if __name__ == '__main__':
    unittest.main()
