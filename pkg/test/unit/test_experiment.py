"""
Unit tests for dataset assembly and the run/sweep driver.
"""

import dataclasses
import os
import tempfile
import unittest

import numpy as np

from zohfl.exceptions import InvalidConfigurationError
from zohfl.experiment import (
    DATA_SOURCE_STREAM, DATA_SUBSAMPLE_STREAM, Experiment, build_dataset, build_federated_data, execute, final_loss,
)
from zohfl.metrics_writer import METRICS_FILE, MODEL_FILE, load_model, read_metrics, read_summary
from zohfl.numkit import ROLE_DATA, RngStream
from zohfl.problem import FederatedProblem
from test.test_utils import tiny_config


class TestBuildData(unittest.TestCase):
    """Test cases for dataset construction"""

    def test_synth_dataset(self):
        shard = build_dataset(tiny_config())
        self.assertEqual(shard.features.shape, (120, 4))

    def test_max_samples(self):
        config = tiny_config()
        config = dataclasses.replace(config, dataset=dataclasses.replace(config.dataset, max_samples=50))
        self.assertEqual(build_dataset(config).size, 50)

    def test_max_samples_draws_from_its_own_stream(self):
        config = tiny_config()
        full = build_dataset(config)
        config = dataclasses.replace(config, dataset=dataclasses.replace(config.dataset, max_samples=50))

        rows = {}
        for stream in (DATA_SOURCE_STREAM, DATA_SUBSAMPLE_STREAM):
            rng = RngStream.for_role(config.data_seed, ROLE_DATA, -1, stream)
            rows[stream] = np.sort(rng.choice(full.size, 50, replace=False))
        self.assertFalse(np.array_equal(rows[DATA_SOURCE_STREAM], rows[DATA_SUBSAMPLE_STREAM]))
        np.testing.assert_array_equal(build_dataset(config).features,
                                      full.features[rows[DATA_SUBSAMPLE_STREAM]])

    def test_unknown_source(self):
        config = tiny_config()
        config = dataclasses.replace(config, dataset=dataclasses.replace(config.dataset, source="parquet"))
        with self.assertRaises(InvalidConfigurationError):
            build_dataset(config)

    def test_partition_follows_data_seed(self):
        a = build_federated_data(tiny_config())
        b = build_federated_data(tiny_config(algo_seed=5))
        c = build_federated_data(tiny_config(data_seed=5))
        np.testing.assert_array_equal(a.plan.assignment, b.plan.assignment)
        self.assertFalse(np.array_equal(a.plan.assignment, c.plan.assignment))


class TestExecute(unittest.TestCase):

    def test_dispatches_to_baseline(self):
        config = tiny_config(method="fedavg")
        problem = FederatedProblem.from_data(build_federated_data(config), config)
        result = execute(config, problem)
        self.assertEqual(len(result.records), config.rounds)
        self.assertEqual(result.records[0].penalty_f2, 0.0)

    def test_final_loss_without_checkpoint_uses_f1(self):
        config = tiny_config(eval_every=0)
        problem = FederatedProblem.from_data(build_federated_data(config), config)
        result = execute(config, problem)
        self.assertEqual(final_loss(problem, result), problem.server.value(result.final_model))


class TestExperiment(unittest.TestCase):
    """Test cases for the run driver"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def test_run_one_writes_artifacts(self):
        config = tiny_config(run_id="one")
        summary = Experiment(self.out).run_one(config)
        run_dir = os.path.join(self.out, "one")
        events = read_metrics(os.path.join(run_dir, METRICS_FILE))
        self.assertEqual(len(events), config.rounds)
        self.assertTrue(os.path.exists(os.path.join(run_dir, MODEL_FILE)))
        self.assertEqual(summary.final_loss, events[-1]["eval"]["implicit_loss"])
        self.assertEqual(summary.final_accuracy, events[-1]["eval"]["test_accuracy"])

    def test_zero_rounds_save_initial_model(self):
        config = tiny_config(run_id="empty", rounds=0)
        Experiment(self.out).run_one(config)
        run_dir = os.path.join(self.out, "empty")
        self.assertEqual(read_metrics(os.path.join(run_dir, METRICS_FILE)), [])
        np.testing.assert_array_equal(load_model(run_dir), np.zeros(3 * 4))

    def test_run_all_writes_sorted_summary(self):
        configs = [tiny_config(run_id="b", method="scaffold"), tiny_config(run_id="a")]
        experiment = Experiment(self.out)
        experiment.run_all(configs)
        rows = read_summary(os.path.join(self.out, "summary.csv"))
        self.assertEqual([r["run_id"] for r in rows], ["a", "b"])
        self.assertEqual(sorted(experiment.results), ["a", "b"])

    def test_parallel_matches_serial(self):
        configs = [tiny_config(run_id=f"r{k}", alpha=0.5 + k) for k in range(3)]
        serial = Experiment(os.path.join(self.out, "serial")).run_all(configs)
        parallel = Experiment(os.path.join(self.out, "parallel"), parallel=True, max_workers=3).run_all(configs)
        by_id = {s.run_id: s.final_loss for s in serial}
        for s in parallel:
            self.assertEqual(s.final_loss, by_id[s.run_id])

    def test_duplicate_run_ids_rejected(self):
        with self.assertRaises(InvalidConfigurationError):
            Experiment(self.out).run_all([tiny_config(), tiny_config()])


if __name__ == '__main__':
    unittest.main()
