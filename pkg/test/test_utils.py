"""
Shared builders for small, fast problems used across the zohfl test suite.
"""

import sys
import dataclasses
from pathlib import Path

# Make the package importable when a test file is run directly
project_root = Path(__file__).parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

import numpy as np

from zohfl.models import DatasetConfig, DatasetShard, RunConfig


def tiny_config(**overrides) -> RunConfig:
    """A synthetic run small enough to finish in well under a second"""
    dataset = DatasetConfig(source="synth", num_classes=3, feature_dim=4, per_class=40, spread=0.5)
    base = RunConfig(
        run_id="tiny", num_clients=3, rounds=5, tau=2.0, eval_every=5, eval_budget=20,
        log_every=0, dataset=dataset,
    )
    return dataclasses.replace(base, **overrides)


def separable_shard(per_class: int = 5) -> DatasetShard:
    """Two far-apart clusters in the plane"""
    features = np.vstack([
        np.tile([5.0, 0.0], (per_class, 1)),
        np.tile([-5.0, 0.0], (per_class, 1)),
    ])
    labels = np.array([0] * per_class + [1] * per_class)
    return DatasetShard(features, labels, num_classes=2)
