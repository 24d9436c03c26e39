"""Metric streams, run artifacts and the cross-run summary table"""
import csv
import io
import json
import logging
import os
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .config import dump_config
from .evaluation import evaluate_accuracy
from .exceptions import EmptyDataError, MetricsIOError, NumericsError, ZoHFLError
from .models import DatasetShard, MetricEvent, RoundRecord, RunConfig, RunSummary, Vec

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.jsonl"
TIMINGS_FILE = "timings.jsonl"
CONFIG_FILE = "config.json"
MODEL_FILE = "final_model.npy"
SUMMARY_FILE = "summary.csv"
SUMMARY_COLUMNS = ["run_id", "method", "alpha", "beta", "tau", "final_loss", "final_accuracy", "wall_time"]


def _dumps(data) -> str:
    return json.dumps(data, sort_keys=True, allow_nan=False)


def event_line(event: MetricEvent) -> str:
    """One self-contained JSON line; refuses NaN and Inf"""
    try:
        return _dumps(event.to_dict()) + "\n"
    except ValueError:
        raise NumericsError(f"non-finite metric in round {event.record.round} of {event.run_id}")


class RunWriter:
    """Streams one run's records to <out>/<run_id>/ as they are produced

    Usable directly as the metric sink of a runner.
    """

    def __init__(self, out_dir: str, config: RunConfig):
        self.run_id = config.run_id
        self.run_dir = os.path.join(out_dir, config.run_id)
        self.metrics_path = os.path.join(self.run_dir, METRICS_FILE)
        self.timings_path = os.path.join(self.run_dir, TIMINGS_FILE)
        self.last_round = -1
        self.events = 0
        try:
            os.makedirs(self.run_dir, exist_ok=True)
            with open(os.path.join(self.run_dir, CONFIG_FILE), "w", encoding="utf-8") as f:
                f.write(dump_config(config))
            # truncate streams left by an earlier run with the same id
            open(self.metrics_path, "w", encoding="utf-8").close()
            open(self.timings_path, "w", encoding="utf-8").close()
        except OSError as e:
            raise MetricsIOError(f"cannot prepare run directory ({e.strerror})", self.run_dir)

    def __call__(self, record: RoundRecord):
        if record.round <= self.last_round:
            raise ZoHFLError(f"round {record.round} does not follow round {self.last_round}")
        if not record.wall_time > 0:
            raise NumericsError(f"wall time of round {record.round} is not positive")
        line = event_line(MetricEvent(self.run_id, record))
        try:
            with open(self.metrics_path, "a", encoding="utf-8") as f:
                f.write(line)
            with open(self.timings_path, "a", encoding="utf-8") as f:
                f.write(_dumps({"round": record.round, "wall_time": record.wall_time}) + "\n")
        except OSError as e:
            raise MetricsIOError(f"cannot append metrics ({e.strerror})", self.metrics_path)
        self.last_round = record.round
        self.events += 1

    def save_model(self, weights: Vec) -> str:
        path = os.path.join(self.run_dir, MODEL_FILE)
        try:
            np.save(path, np.asarray(weights, dtype=np.float64))
        except OSError as e:
            raise MetricsIOError(f"cannot save model ({e.strerror})", path)
        return path


def write_metrics(events: Iterable[MetricEvent], out_dir: str) -> List[str]:
    """Write already-collected events as one metrics.jsonl per run_id"""
    by_run: Dict[str, List[MetricEvent]] = {}
    for event in events:
        by_run.setdefault(event.run_id, []).append(event)

    paths = []
    for run_id in sorted(by_run):
        run_dir = os.path.join(out_dir, run_id)
        path = os.path.join(run_dir, METRICS_FILE)
        rounds = [e.record.round for e in by_run[run_id]]
        if any(b <= a for a, b in zip(rounds, rounds[1:])):
            raise ZoHFLError(f"rounds of {run_id} are not strictly increasing")
        try:
            os.makedirs(run_dir, exist_ok=True)
            with open(path, "w", encoding="utf-8") as f:
                for event in by_run[run_id]:
                    f.write(event_line(event))
        except OSError as e:
            raise MetricsIOError(f"cannot write metrics ({e.strerror})", path)
        paths.append(path)
    return paths


def read_metrics(path: str) -> List[dict]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def load_model(run_dir: str) -> Vec:
    return np.load(os.path.join(run_dir, MODEL_FILE))


def summarize_run(config: RunConfig, run_dir: str, test: Optional[DatasetShard], final_loss: float,
                  wall_time: float) -> RunSummary:
    """Summary row whose accuracy is recomputed from the persisted final model"""
    if test is None or not test.size:
        raise EmptyDataError(f"run {config.run_id} has no test samples to score")
    if not np.isfinite(final_loss):
        raise NumericsError(f"final loss of {config.run_id} is not finite")
    accuracy = evaluate_accuracy(load_model(run_dir), test)
    tau = config.tau if not isinstance(config.tau, list) else ";".join(f"{t:g}" for t in config.tau)
    return RunSummary(
        run_id=config.run_id,
        method=config.method,
        alpha=config.alpha,
        beta=config.beta,
        tau=f"{tau:g}" if isinstance(tau, float) else tau,
        final_loss=final_loss,
        final_accuracy=accuracy,
        wall_time=wall_time,
    )


def summary_csv(summaries: Sequence[RunSummary]) -> str:
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for s in sorted(summaries, key=lambda s: s.run_id):
        writer.writerow([s.run_id, s.method, f"{s.alpha:g}", f"{s.beta:g}", s.tau,
                         repr(float(s.final_loss)), repr(float(s.final_accuracy)),
                         repr(float(s.wall_time))])
    return output.getvalue()


def write_summary(summaries: Sequence[RunSummary], out_dir: str) -> str:
    """summary.csv sorted by run_id; header only when there are no runs"""
    path = os.path.join(out_dir, SUMMARY_FILE)
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(summary_csv(summaries))
    except OSError as e:
        raise MetricsIOError(f"cannot write summary ({e.strerror})", path)
    logger.info("Wrote summary of %d run(s) to %s", len(summaries), path)
    return path


def read_summary(path: str) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
