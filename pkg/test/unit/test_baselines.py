"""
Unit tests for the FedAvg, FedProx and SCAFFOLD reference methods.
"""

import dataclasses
import unittest
from concurrent.futures import ThreadPoolExecutor
from unittest.mock import patch

import numpy as np

from zohfl.baselines import BaselineRunner, ClientUpdate, FedProx, Scaffold, aggregation_weights, run_baseline
from zohfl.exceptions import InvalidParameterError
from zohfl.experiment import build_federated_data
from zohfl.models import BaselineConfig
from zohfl.numkit import ROLE_CLIENT, RngStream
from zohfl.objectives import cross_entropy_grad
from zohfl.problem import FederatedProblem
from test.test_utils import tiny_config


def _problem(num_clients=3):
    config = tiny_config(num_clients=num_clients)
    return FederatedProblem.from_data(build_federated_data(config), config)


def _config(**overrides):
    base = BaselineConfig(method="fedavg", local_steps=4, local_lr=0.1, rounds=6, num_clients=3,
                          eval_every=0, log_every=0, algo_seed=2)
    return dataclasses.replace(base, **overrides)


class TestAggregation(unittest.TestCase):

    def test_weights_follow_sample_counts(self):
        updates = [ClientUpdate(0, np.zeros(1), None, 10, 1), ClientUpdate(1, np.zeros(1), None, 30, 1)]
        self.assertEqual(aggregation_weights(updates), [0.25, 0.75])


class TestBaselineConfig(unittest.TestCase):

    def test_rejects_unknown_method(self):
        with self.assertRaises(InvalidParameterError):
            BaselineConfig(method="fednova")

    def test_prox_mu_only_for_fedprox(self):
        with self.assertRaises(InvalidParameterError):
            BaselineConfig(method="fedavg", prox_mu=0.1)

    def test_from_run_config_averages_tau(self):
        config = tiny_config(method="scaffold", tau=[1.0, 3.0, 5.0])
        self.assertEqual(BaselineConfig.from_run_config(config).tau, 3.0)

    def test_from_run_config_carries_parallel_settings(self):
        config = tiny_config(method="fedavg", parallel_clients=True, max_workers=2)
        baseline = BaselineConfig.from_run_config(config)
        self.assertTrue(baseline.parallel_clients)
        self.assertEqual(baseline.max_workers, 2)


class TestBaselineRunner(unittest.TestCase):
    """Test cases for the shared baseline loop"""

    def test_single_client_fedavg_is_sgd(self):
        problem = _problem(num_clients=1)
        config = _config(num_clients=1)
        result = run_baseline(config, problem)

        shard = problem.client_shards[0]
        x = problem.initial_model.copy()
        for r in range(config.rounds):
            rng = RngStream.for_role(config.algo_seed, ROLE_CLIENT, 0, r)
            for _ in range(config.local_steps):
                x = x - config.local_lr * cross_entropy_grad(x, shard, rng.batch_indices(shard.size, 1))
        np.testing.assert_allclose(result.final_model, x, rtol=1e-12, atol=1e-12)

    def test_fedprox_with_zero_mu_matches_fedavg(self):
        problem = _problem()
        with self.assertLogs("zohfl.baselines", level="WARNING"):
            prox = run_baseline(_config(method="fedprox", prox_mu=0.0), problem)
        avg = run_baseline(_config(), problem)
        np.testing.assert_array_equal(prox.final_model, avg.final_model)

    def test_fedprox_pulls_toward_global_model(self):
        problem = _problem()
        prox = run_baseline(_config(method="fedprox", prox_mu=50.0, local_lr=0.01, rounds=1), problem)
        plain = run_baseline(_config(local_lr=0.01, rounds=1), problem)
        self.assertLess(np.linalg.norm(prox.final_model), np.linalg.norm(plain.final_model))

    def test_frozen_scaffold_matches_fedavg(self):
        problem = _problem()
        frozen = run_baseline(_config(method="scaffold", freeze_control_variates=True), problem)
        avg = run_baseline(_config(), problem)
        np.testing.assert_array_equal(frozen.final_model, avg.final_model)

    def test_scaffold_updates_control_variates(self):
        problem = _problem()
        runner = BaselineRunner(_config(method="scaffold", rounds=2), problem)
        runner.run()
        self.assertIsInstance(runner.method, Scaffold)
        self.assertEqual(sorted(runner.method.client_controls), [0, 1, 2])
        self.assertGreater(np.linalg.norm(runner.method.server_control), 0.0)

    def test_budget_matched_steps(self):
        runner = BaselineRunner(_config(local_steps=0, tau=5.0), _problem())
        self.assertEqual(runner.steps_for(0), 10)
        self.assertEqual(runner.steps_for(3), 20)
        self.assertEqual(BaselineRunner(_config(local_steps=7), _problem()).steps_for(3), 7)

    def test_partial_participation_and_records(self):
        problem = _problem()
        result = run_baseline(_config(participation=0.34, eval_every=3), problem)
        self.assertEqual(len(result.records), 6)
        for rec in result.records:
            self.assertEqual(len(rec.client_gaps), 2)
            self.assertEqual(rec.penalty_f2, 0.0)
            self.assertEqual(rec.local_steps, 8)
        self.assertIsNotNone(result.records[2].eval)
        self.assertIsNotNone(result.records[5].eval)
        self.assertEqual(sum(result.cumulative_local_steps.values()), 6 * 2 * 4)

    def test_deterministic(self):
        problem = _problem()
        a = run_baseline(_config(method="scaffold", participation=0.5), problem)
        b = run_baseline(_config(method="scaffold", participation=0.5), problem)
        np.testing.assert_array_equal(a.final_model, b.final_model)

    def test_parallel_clients_match_serial(self):
        problem = _problem()
        for method in ("fedavg", "scaffold"):
            serial = run_baseline(_config(method=method), problem)
            parallel = run_baseline(_config(method=method, parallel_clients=True, max_workers=3), problem)
            np.testing.assert_array_equal(parallel.final_model, serial.final_model)
            self.assertEqual([r.client_gaps for r in parallel.records], [r.client_gaps for r in serial.records])

    def test_parallel_clients_use_a_thread_pool(self):
        with patch("zohfl.baselines.ThreadPoolExecutor", wraps=ThreadPoolExecutor) as pool:
            run_baseline(_config(parallel_clients=True, max_workers=2), _problem())
        self.assertEqual(pool.call_count, 6)
        pool.assert_called_with(max_workers=2)

    def test_fedprox_class_is_selected(self):
        runner = BaselineRunner(_config(method="fedprox", prox_mu=0.5), _problem())
        self.assertIsInstance(runner.method, FedProx)

    def test_client_count_mismatch(self):
        with self.assertRaises(InvalidParameterError):
            BaselineRunner(_config(num_clients=5), _problem())


if __name__ == '__main__':
    unittest.main()
