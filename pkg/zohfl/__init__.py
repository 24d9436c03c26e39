"""
ZO-HFL simulator

Zeroth-order implicit hierarchical federated learning: a server model trained against
clients that only report penalty values of their locally solved, personalised models,
together with FedAvg, FedProx and SCAFFOLD baselines on the same data.
"""

from .baselines import run_baseline
from .config import PRESETS, load_config, parse_config
from .exceptions import ZoHFLError
from .experiment import Experiment
from .models import RunConfig, RunResult
from .orchestrator import run_zohfl

__version__ = "1.0.0"
__author__ = "ZOHFL Team"

__all__ = [
    "Experiment",
    "PRESETS",
    "RunConfig",
    "RunResult",
    "ZoHFLError",
    "load_config",
    "parse_config",
    "run_baseline",
    "run_zohfl",
]
