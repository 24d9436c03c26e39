"""
End-to-end driver: builds the dataset and federated problem for a RunConfig, dispatches
to ZO-HFL or a baseline, and persists metrics, the final model and the summary table.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Dict, List, Optional, Sequence

import numpy as np

from .baselines import run_baseline
from .data import load_csv, load_idx, partition, synth_blobs
from .exceptions import InvalidConfigurationError, ZoHFLError
from .metrics_writer import RunWriter, summarize_run, write_summary
from .models import BaselineConfig, DatasetShard, FederatedData, RunConfig, RunResult, RunSummary
from .numkit import ROLE_DATA, RngStream
from .orchestrator import MetricSink, run_zohfl
from .problem import FederatedProblem

logger = logging.getLogger(__name__)

# stream rounds reserved for data preparation
DATA_SOURCE_STREAM = 0
DATA_PARTITION_STREAM = 1
DATA_SUBSAMPLE_STREAM = 2


def build_dataset(config: RunConfig) -> DatasetShard:
    """Load or synthesise the full labelled pool described by config.dataset"""
    d = config.dataset
    if d.source == "synth":
        rng = RngStream.for_role(config.data_seed, ROLE_DATA, -1, DATA_SOURCE_STREAM)
        shard = synth_blobs(rng, d.num_classes, d.feature_dim, d.per_class, d.spread, d.offset)
    elif d.source == "idx":
        shard = load_idx(d.images_path, d.labels_path, d.num_classes)
    elif d.source == "csv":
        shard = load_csv(d.csv_path, d.num_classes)
    else:
        raise InvalidConfigurationError(f"unknown source '{d.source}'", "dataset.source")

    if d.max_samples and shard.size > d.max_samples:
        rng = RngStream.for_role(config.data_seed, ROLE_DATA, -1, DATA_SUBSAMPLE_STREAM)
        rows = np.sort(rng.choice(shard.size, d.max_samples, replace=False))
        shard = shard.subset(rows)
        logger.info("Subsampled dataset to %d samples", shard.size)
    return shard


def build_federated_data(config: RunConfig, shard: Optional[DatasetShard] = None) -> FederatedData:
    shard = shard if shard is not None else build_dataset(config)
    rng = RngStream.for_role(config.data_seed, ROLE_DATA, -1, DATA_PARTITION_STREAM)
    d = config.dataset
    return partition(shard, config.alpha, config.num_clients, d.server_fraction, d.test_fraction, rng)


def execute(config: RunConfig, problem: FederatedProblem, sink: Optional[MetricSink] = None) -> RunResult:
    """Run the configured method on an assembled problem"""
    if config.method == "zohfl":
        return run_zohfl(config, problem, sink)
    return run_baseline(BaselineConfig.from_run_config(config), problem, sink)


def final_loss(problem: FederatedProblem, result: RunResult) -> float:
    """Implicit loss of the last checkpoint, or f1 at the final model without one"""
    block = result.last_eval
    if block is not None:
        return float(block.implicit_loss)
    return float(problem.server.value(result.final_model))


class Experiment:
    """Runs one or more configurations into a shared output directory"""

    def __init__(self, out_dir: str, parallel: bool = False, max_workers: int = 4):
        self.out_dir = out_dir
        self.parallel = parallel
        self.max_workers = max_workers
        self.results: Dict[str, RunResult] = {}

    def run_one(self, config: RunConfig, data: Optional[FederatedData] = None) -> RunSummary:
        started = time.perf_counter()
        data = data if data is not None else build_federated_data(config)
        problem = FederatedProblem.from_data(data, config)
        logger.info("Run %s: method=%s m=%d R=%d dim=%d alpha=%g beta=%g", config.run_id, config.method,
                    config.num_clients, config.rounds, problem.dim, config.alpha, config.beta)

        writer = RunWriter(self.out_dir, config)
        result = execute(config, problem, writer)
        writer.save_model(result.final_model)
        self.results[config.run_id] = result

        wall_time = max(time.perf_counter() - started, 1e-9)
        summary = summarize_run(config, writer.run_dir, data.test, final_loss(problem, result), wall_time)
        logger.info("Run %s finished: loss=%.5f accuracy=%.4f (%.1fs)", config.run_id,
                    summary.final_loss, summary.final_accuracy, wall_time)
        return summary

    def run_all(self, configs: Sequence[RunConfig]) -> List[RunSummary]:
        """Run every config and write summary.csv; duplicate run ids are rejected"""
        ids = [c.run_id for c in configs]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise InvalidConfigurationError(f"duplicate run ids {duplicates}", "run_id")

        if self.parallel and len(configs) > 1:
            summaries = self._run_parallel(configs)
        else:
            summaries = []
            for k, config in enumerate(configs, start=1):
                logger.info("Sweep progress: %d/%d (%s)", k, len(configs), config.run_id)
                summaries.append(self.run_one(config))

        write_summary(summaries, self.out_dir)
        return summaries

    def _run_parallel(self, configs: Sequence[RunConfig]) -> List[RunSummary]:
        summaries = []
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            future_to_id = {executor.submit(self.run_one, c): c.run_id for c in configs}
            for future in as_completed(future_to_id):
                run_id = future_to_id[future]
                try:
                    summaries.append(future.result())
                except ZoHFLError:
                    logger.error("Run %s failed", run_id)
                    raise
                logger.info("Sweep progress: %d/%d (%s)", len(summaries), len(configs), run_id)
        return summaries
