"""
Data models for the zohfl package.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .exceptions import EmptyDataError, InvalidDimensionError, InvalidParameterError

# A flat float64 vector. Models, local iterates and directions all live here.
Vec = np.ndarray


class ConstraintKind(str, Enum):
    """Kinds of lower-level feasible sets"""
    UNCONSTRAINED = "unconstrained"
    BALL = "ball"
    ORTHANT = "orthant"


@dataclass(frozen=True)
class ConstraintSpec:
    """Feasible set for a client's local model, anchored at the broadcast model"""
    kind: ConstraintKind = ConstraintKind.UNCONSTRAINED
    radius: Optional[float] = None

    def __post_init__(self):
        if self.kind == ConstraintKind.BALL:
            if self.radius is None or not self.radius > 0:
                raise InvalidParameterError(f"ball constraint needs radius > 0, got {self.radius}")

    @classmethod
    def unconstrained(cls) -> "ConstraintSpec":
        return cls(ConstraintKind.UNCONSTRAINED)

    @classmethod
    def ball(cls, radius: float) -> "ConstraintSpec":
        return cls(ConstraintKind.BALL, float(radius))

    @classmethod
    def orthant(cls) -> "ConstraintSpec":
        return cls(ConstraintKind.ORTHANT)


@dataclass
class DatasetShard:
    """Features and labels owned by the server, one client, or the test split"""
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    indices: Optional[np.ndarray] = None  # positions in the source dataset

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise InvalidDimensionError(f"features must be N x n, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise InvalidDimensionError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )
        if self.num_classes < 2:
            raise InvalidParameterError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InvalidParameterError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(self.features)):
            raise InvalidParameterError("features contain NaN or Inf")
        if self.indices is None:
            self.indices = np.arange(self.features.shape[0], dtype=np.int64)
        else:
            self.indices = np.asarray(self.indices, dtype=np.int64)

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, rows: Sequence[int]) -> "DatasetShard":
        rows = np.asarray(rows, dtype=np.int64)
        return DatasetShard(
            features=self.features[rows],
            labels=self.labels[rows],
            num_classes=self.num_classes,
            indices=self.indices[rows],
        )

    def require_nonempty(self, what: str = "shard"):
        if self.size == 0:
            raise EmptyDataError(f"{what} has no samples")


@dataclass
class PartitionPlan:
    """Record of how a dataset was split across test, server and clients"""
    seed: int
    alpha: float
    num_clients: int
    server_fraction: float
    test_fraction: float
    assignment: np.ndarray  # owner tag per source sample
    retries: int = 0

    TEST = -2
    SERVER = -1

    def owner_of(self, sample: int) -> int:
        return int(self.assignment[sample])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "alpha": self.alpha,
            "num_clients": self.num_clients,
            "server_fraction": self.server_fraction,
            "test_fraction": self.test_fraction,
            "retries": self.retries,
            "assignment": [int(a) for a in self.assignment],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PartitionPlan":
        return cls(
            seed=int(data["seed"]),
            alpha=float(data["alpha"]),
            num_clients=int(data["num_clients"]),
            server_fraction=float(data["server_fraction"]),
            test_fraction=float(data["test_fraction"]),
            assignment=np.asarray(data["assignment"], dtype=np.int64),
            retries=int(data.get("retries", 0)),
        )


@dataclass
class FederatedData:
    """All shards of one partitioned dataset"""
    server: DatasetShard
    clients: List[DatasetShard]
    test: DatasetShard
    plan: Optional[PartitionPlan] = None

    @property
    def num_classes(self) -> int:
        return self.server.num_classes

    @property
    def feature_dim(self) -> int:
        return self.server.feature_dim

    @property
    def train_total(self) -> int:
        return self.server.size + sum(c.size for c in self.clients)


@dataclass
class SoftmaxModel:
    """Multinomial logistic regression weights, one row x_c per class"""
    weights: Vec
    num_classes: int
    feature_dim: int

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if self.num_classes < 2 or self.feature_dim < 1:
            raise InvalidParameterError("need num_classes >= 2 and feature_dim >= 1")
        if self.weights.size != self.num_classes * self.feature_dim:
            raise InvalidDimensionError(
                f"weights have {self.weights.size} entries, expected "
                f"{self.num_classes} x {self.feature_dim}"
            )

    @classmethod
    def zeros(cls, num_classes: int, feature_dim: int) -> "SoftmaxModel":
        return cls(np.zeros(num_classes * feature_dim), num_classes, feature_dim)

    @property
    def dim(self) -> int:
        return self.weights.size

    @property
    def matrix(self) -> np.ndarray:
        return self.weights.reshape(self.num_classes, self.feature_dim)


@dataclass
class PenaltySpec:
    """Coupling between the global model and each client's model"""
    lam: float
    mu: float
    weights: List[float]

    def __post_init__(self):
        if not self.lam > 0 or not self.mu > 0:
            raise InvalidParameterError(f"lambda and mu must be positive, got {self.lam}, {self.mu}")
        if any(w < 0 for w in self.weights):
            raise InvalidParameterError("penalty weights must be nonnegative")


@dataclass
class QuadraticProblem:
    """q(y) = 1/2 y'Ay + b'y with optional additive Gaussian gradient noise"""
    A: np.ndarray
    b: Vec
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        n = self.b.size
        if self.A.shape != (n, n):
            raise InvalidDimensionError(f"A has shape {self.A.shape}, b has {n} entries")
        if not np.allclose(self.A, self.A.T, atol=1e-12):
            raise InvalidParameterError("A must be symmetric")
        if n and np.linalg.eigvalsh(self.A).min() <= 0:
            raise InvalidParameterError("A must be positive definite")
        if self.noise_sigma < 0:
            raise InvalidParameterError("noise_sigma must be nonnegative")

    @property
    def dim(self) -> int:
        return self.b.size

    @property
    def is_diagonal(self) -> bool:
        return bool(np.count_nonzero(self.A - np.diag(np.diag(self.A))) == 0)


@dataclass(frozen=True)
class SmoothingParams:
    """Smoothing radius and ambient dimension"""
    eta: float
    dim: int

    def __post_init__(self):
        if not self.eta > 0:
            raise InvalidParameterError(f"eta must be positive, got {self.eta}")
        if self.dim < 1:
            raise InvalidDimensionError(f"dim must be >= 1, got {self.dim}")


@dataclass
class MCEstimate:
    """Monte Carlo mean with its standard error"""
    mean: Union[float, Vec]
    stderr: Union[float, Vec]
    samples: int


@dataclass(frozen=True)
class LocalSchedule:
    """Client step sizes gamma0 / (t + Gamma)"""
    gamma0: float = 0.1
    Gamma: float = 1.0

    def __post_init__(self):
        if not self.gamma0 > 0 or not self.Gamma > 0:
            raise InvalidParameterError(
                f"local schedule needs gamma0 > 0 and Gamma > 0, got {self.gamma0}, {self.Gamma}"
            )

    def step(self, t: int) -> float:
        return self.gamma0 / (t + self.Gamma)


@dataclass
class LocalRunReport:
    """Outcome of one projected-SGD solve"""
    final_iterate: Vec
    steps_taken: int
    last_step_size: float
    grad_eval_count: int
    init_distance: float = 0.0  # ||init - x_input||, nonzero only when warm starting


@dataclass
class LocalState:
    """A client's persistent iterates for the + and - branches"""
    client_id: int
    y_plus: Optional[Vec] = None
    y_minus: Optional[Vec] = None
    last_round: int = -1


@dataclass
class RoundPlan:
    """What the server decides before broadcasting round r"""
    round: int
    participants: List[int]
    directions: Dict[int, Vec]
    budgets: Dict[int, int]
    global_step: float
    contacted: List[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.contacted:
            self.contacted = list(self.participants)


@dataclass
class EvalBlock:
    """Checkpoint metrics computed off the optimisation path"""
    f1_loss: float
    implicit_loss: float
    test_accuracy: Optional[float] = None
    personalized_accuracy: Optional[float] = None


@dataclass
class RoundRecord:
    """Per-round metrics"""
    round: int
    global_loss_f1: float
    penalty_f2: float
    grad_estimate_norm: float
    client_gaps: Dict[int, float]
    wall_time: float
    local_steps: int = 0
    client_grad_evals: int = 0
    warm_start_distances: Dict[int, float] = field(default_factory=dict)
    eval: Optional[EvalBlock] = None


@dataclass
class MetricEvent:
    """One line of a run's metric stream"""
    run_id: str
    record: RoundRecord

    def to_dict(self) -> Dict[str, Any]:
        rec = self.record
        data: Dict[str, Any] = {
            "run_id": self.run_id,
            "round": rec.round,
            "global_loss_f1": rec.global_loss_f1,
            "penalty_f2": rec.penalty_f2,
            "grad_estimate_norm": rec.grad_estimate_norm,
            "client_gaps": {str(k): v for k, v in sorted(rec.client_gaps.items())},
            "local_steps": rec.local_steps,
            "client_grad_evals": rec.client_grad_evals,
        }
        if rec.warm_start_distances:
            data["warm_start_distances"] = {
                str(k): v for k, v in sorted(rec.warm_start_distances.items())
            }
        if rec.eval is not None:
            data["eval"] = {
                "f1_loss": rec.eval.f1_loss,
                "implicit_loss": rec.eval.implicit_loss,
                "test_accuracy": rec.eval.test_accuracy,
                "personalized_accuracy": rec.eval.personalized_accuracy,
            }
        return data


@dataclass
class RunResult:
    """What a training run hands back to the harness"""
    final_model: Vec
    records: List[RoundRecord]
    cumulative_local_steps: Dict[int, int] = field(default_factory=dict)

    @property
    def last_eval(self) -> Optional[EvalBlock]:
        for rec in reversed(self.records):
            if rec.eval is not None:
                return rec.eval
        return None


@dataclass
class RunSummary:
    """One row of the cross-run summary table"""
    run_id: str
    method: str
    alpha: float
    beta: float
    tau: str
    final_loss: float
    final_accuracy: float
    wall_time: float


@dataclass
class OracleReport:
    """Outcome of one ground-truth comparison"""
    name: str
    observed: Union[float, List[float]]
    expected: Union[float, List[float]]
    tolerance: Union[float, List[float]]
    passed: bool

    @classmethod
    def compare(cls, name: str, observed, expected, tolerance) -> "OracleReport":
        obs = np.atleast_1d(np.asarray(observed, dtype=np.float64))
        exp = np.atleast_1d(np.asarray(expected, dtype=np.float64))
        tol = np.broadcast_to(np.asarray(tolerance, dtype=np.float64), obs.shape)
        passed = bool(np.all(np.isfinite(obs)) and np.all(np.abs(obs - exp) <= tol))
        return cls(name, _plain(observed), _plain(expected), _plain(tolerance), passed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "check": self.name,
            "observed": self.observed,
            "expected": self.expected,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


def _plain(value):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return float(arr)
    return [float(v) for v in arr.reshape(-1)]


@dataclass
class DatasetConfig:
    """Where the data comes from and how it is split"""
    source: str = "synth"  # 'synth', 'idx' or 'csv'
    num_classes: int = 10
    feature_dim: int = 20
    per_class: int = 200
    spread: float = 1.0
    offset: float = 0.0  # common shift of every synthetic feature
    images_path: str = ""
    labels_path: str = ""
    csv_path: str = ""
    max_samples: int = 0  # 0 keeps every sample
    server_fraction: float = 0.3
    test_fraction: float = 0.1


@dataclass
class BaselineSettings:
    """Knobs used only by FedAvg, FedProx and SCAFFOLD runs"""
    local_lr: float = 0.05
    prox_mu: float = 0.01
    local_steps: int = 0  # 0 matches the ZO-HFL budget 2 * ceil(tau * sqrt(r + 1))
    server_lr: float = 1.0


@dataclass
class RunConfig:
    """Every tunable of a single run"""
    run_id: str = "run"
    method: str = "zohfl"  # 'zohfl', 'fedavg', 'fedprox', 'scaffold'
    num_clients: int = 10
    rounds: int = 500

    # server
    eta: float = 0.1
    step_constant: float = 0.01
    step_exponent: float = 0.5
    asymptotic: bool = False
    server_batch: int = 1  # 0 uses the whole server shard

    # clients
    tau: Union[float, List[float]] = 20.0
    local_gamma0: float = 0.1
    local_Gamma: float = 1.0
    client_batch: int = 1
    warm_start: bool = False
    shared_stream: bool = False
    theory_budgets: bool = False  # require tau_i >= 1 for every client

    # hierarchical objective
    lam: float = 1.0
    mu: float = 0.1
    penalty_weighting: str = "data"  # 'data' (N_i / N_tr) or 'uniform' (1 / m)
    constraint: str = "unconstrained"  # 'unconstrained', 'ball', 'orthant'
    radius: Union[float, List[float]] = 1.0

    # heterogeneity
    alpha: float = 1.0
    beta: float = 1.0
    aggregation: str = "participants"  # 'participants' (1/|S_r|) or 'all' (1/m)
    straggler_mode: str = "sample"  # 'sample' or 'zero_budget'

    # reproducibility
    data_seed: int = 0
    algo_seed: int = 0

    # evaluation
    eval_every: int = 10
    eval_budget: int = 500
    log_every: int = 50

    # execution
    parallel_clients: bool = False
    max_workers: int = 4

    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    baseline: BaselineSettings = field(default_factory=BaselineSettings)

    def tau_for(self, client: int) -> float:
        if isinstance(self.tau, list):
            return float(self.tau[client])
        return float(self.tau)

    def radius_for(self, client: int) -> float:
        if isinstance(self.radius, list):
            return float(self.radius[client])
        return float(self.radius)


@dataclass
class BaselineConfig:
    """Settings of a FedAvg / FedProx / SCAFFOLD run"""
    method: str = "fedavg"  # 'fedavg', 'fedprox', 'scaffold'
    local_steps: int = 0  # 0 matches the ZO-HFL budget 2 * ceil(tau * sqrt(r + 1))
    local_lr: float = 0.05
    prox_mu: float = 0.0
    rounds: int = 500
    participation: float = 1.0
    num_clients: int = 10
    tau: float = 20.0
    server_lr: float = 1.0
    client_batch: int = 1
    algo_seed: int = 0
    eval_every: int = 10
    eval_budget: int = 500
    log_every: int = 50
    freeze_control_variates: bool = False
    parallel_clients: bool = False
    max_workers: int = 4

    def __post_init__(self):
        if self.method not in ("fedavg", "fedprox", "scaffold"):
            raise InvalidParameterError(f"unknown baseline method '{self.method}'")
        if self.local_steps < 0 or not self.local_lr > 0:
            raise InvalidParameterError("local_steps must be >= 0 and local_lr > 0")
        if self.prox_mu < 0:
            raise InvalidParameterError(f"prox_mu must be nonnegative, got {self.prox_mu}")
        if self.method != "fedprox" and self.prox_mu > 0:
            raise InvalidParameterError(f"prox_mu is only meaningful for fedprox, got {self.prox_mu}")
        if not 0 < self.participation <= 1:
            raise InvalidParameterError(f"participation must lie in (0, 1], got {self.participation}")
        if self.max_workers < 1:
            raise InvalidParameterError(f"max_workers must be >= 1, got {self.max_workers}")

    @classmethod
    def from_run_config(cls, config: "RunConfig") -> "BaselineConfig":
        settings = config.baseline
        return cls(
            method=config.method,
            local_steps=settings.local_steps,
            local_lr=settings.local_lr,
            prox_mu=settings.prox_mu if config.method == "fedprox" else 0.0,
            rounds=config.rounds,
            participation=config.beta,
            num_clients=config.num_clients,
            tau=float(np.mean(config.tau)) if isinstance(config.tau, list) else float(config.tau),
            server_lr=settings.server_lr,
            client_batch=config.client_batch,
            algo_seed=config.algo_seed,
            eval_every=config.eval_every,
            eval_budget=config.eval_budget,
            log_every=config.log_every,
            parallel_clients=config.parallel_clients,
            max_workers=config.max_workers,
        )
