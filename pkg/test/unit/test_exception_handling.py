"""
Unit tests for exception handling across the zohfl package.
"""

import os
import shutil
import tempfile
import unittest

import numpy as np

from zohfl.config import load_config, parse_config
from zohfl.data import load_idx, partition
from zohfl.exceptions import (
    BadMagicError, CountMismatchError, EmptyDataError, IDXFormatError, InvalidConfigurationError,
    InvalidDimensionError, InvalidParameterError, MetricsIOError, NumericsError, PartitionInfeasibleError,
    RunAbortedError, TruncatedFileError, ZoHFLError,
)
from zohfl.metrics_writer import RunWriter
from zohfl.models import DatasetShard, PenaltySpec, RunConfig
from zohfl.numkit import RngStream
from zohfl.objectives import cross_entropy


class TestExceptionHierarchy(unittest.TestCase):
    """Test cases for the exception classes themselves"""

    def test_argument_errors_are_value_errors(self):
        for cls in (InvalidDimensionError, InvalidParameterError):
            self.assertTrue(issubclass(cls, ValueError))
            self.assertTrue(issubclass(cls, ZoHFLError))

    def test_idx_errors_share_a_base(self):
        for cls in (BadMagicError, TruncatedFileError, CountMismatchError):
            self.assertTrue(issubclass(cls, IDXFormatError))

    def test_idx_message_names_path_and_offset(self):
        error = TruncatedFileError("payload ends early", "/data/x.idx", 16)
        self.assertEqual(error.path, "/data/x.idx")
        self.assertEqual(error.offset, 16)
        self.assertEqual(str(error), "payload ends early (/data/x.idx @ byte 16)")

    def test_idx_message_without_path(self):
        self.assertEqual(str(BadMagicError("bad magic")), "bad magic")

    def test_configuration_error_field_path(self):
        error = InvalidConfigurationError("must be in (0, 1]", "beta")
        self.assertEqual(error.field_path, "beta")
        self.assertEqual(str(error), "beta: must be in (0, 1]")

    def test_run_aborted_keeps_round_and_cause(self):
        cause = NumericsError("loss is NaN")
        error = RunAbortedError(7, cause)
        self.assertEqual(error.round, 7)
        self.assertIs(error.cause, cause)
        self.assertIn("round 7", str(error))

    def test_metrics_io_error_path(self):
        error = MetricsIOError("cannot save model", "/tmp/m.npy")
        self.assertEqual(error.path, "/tmp/m.npy")
        self.assertTrue(str(error).endswith("/tmp/m.npy"))


class TestRaisedErrors(unittest.TestCase):
    """Test cases for errors raised by package operations"""

    def setUp(self):
        """Set up a scratch directory"""
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up test fixtures"""
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_missing_idx_file(self):
        """Test a missing IDX file surfaces as an OS error, not a format error"""
        missing = os.path.join(self.temp_dir, "nope.idx")
        with self.assertRaises(FileNotFoundError):
            load_idx(missing, missing)

    def test_short_idx_file(self):
        path = os.path.join(self.temp_dir, "short.idx")
        with open(path, "wb") as f:
            f.write(b"\x00\x00")
        with self.assertRaises(TruncatedFileError) as cm:
            load_idx(path, path)
        self.assertEqual(cm.exception.path, path)

    def test_missing_config_file(self):
        with self.assertRaises(InvalidConfigurationError):
            load_config(os.path.join(self.temp_dir, "missing.json"))

    def test_config_type_error_has_field_path(self):
        with self.assertRaises(InvalidConfigurationError) as cm:
            parse_config({"dataset": {"per_class": "many"}})
        self.assertEqual(cm.exception.field_path, "dataset.per_class")

    def test_run_writer_on_unwritable_path(self):
        """Test RunWriter reports the run directory it could not create"""
        blocker = os.path.join(self.temp_dir, "blocker")
        with open(blocker, "w") as f:
            f.write("not a directory")
        with self.assertRaises(MetricsIOError) as cm:
            RunWriter(blocker, RunConfig(run_id="r"))
        self.assertEqual(cm.exception.path, os.path.join(blocker, "r"))

    def test_empty_shard(self):
        empty = DatasetShard(np.zeros((0, 3)), np.zeros(0, dtype=int), 2)
        with self.assertRaises(EmptyDataError):
            cross_entropy(np.zeros(6), empty)

    def test_penalty_spec_rejects_invalid_coupling(self):
        with self.assertRaises(InvalidParameterError):
            PenaltySpec(0.0, 0.1, [0.5, 0.5])
        with self.assertRaises(InvalidParameterError):
            PenaltySpec(1.0, 0.1, [0.5, -0.5])

    def test_partition_with_too_few_samples(self):
        shard = DatasetShard(np.zeros((4, 2)), np.array([0, 1, 0, 1]), 2)
        with self.assertRaises(PartitionInfeasibleError):
            partition(shard, 1.0, 10, 0.0, 0.25, RngStream(0))


if __name__ == '__main__':
    unittest.main()
