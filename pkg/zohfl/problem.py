"""
Binds server and client objectives, penalty weights and constraint sets into one
hierarchical federated problem.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Protocol

import numpy as np

from .exceptions import InvalidConfigurationError, InvalidDimensionError
from .local_solver import LowerLevelObjective
from .models import ConstraintKind, ConstraintSpec, DatasetShard, FederatedData, PenaltySpec, RunConfig, Vec
from .numkit import RngStream
from .objectives import ProximalSoftmaxObjective, SoftmaxServerObjective, penalty_value

logger = logging.getLogger(__name__)


class ServerObjective(Protocol):
    """f1 with a (possibly stochastic) gradient"""
    dim: int

    def value(self, x: Vec) -> float: ...

    def stoch_grad(self, x: Vec, rng: Optional[RngStream], batch: Optional[int]) -> Vec: ...


def constraint_for(config: RunConfig, client: int) -> ConstraintSpec:
    kind = ConstraintKind(config.constraint)
    if kind == ConstraintKind.BALL:
        return ConstraintSpec.ball(config.radius_for(client))
    return ConstraintSpec(kind)


def penalty_weights(data: FederatedData, scheme: str) -> List[float]:
    """'data': N_i / N_tr with N_tr counting server and client samples; 'uniform': 1 / m"""
    m = len(data.clients)
    if scheme == "uniform":
        return [1.0 / m] * m
    if scheme == "data":
        total = data.train_total
        return [c.size / total for c in data.clients]
    raise InvalidConfigurationError(f"unknown weighting '{scheme}'", "penalty_weighting")


@dataclass
class FederatedProblem:
    """Everything a training run optimises over"""
    server: ServerObjective
    clients: List[LowerLevelObjective]
    constraints: List[ConstraintSpec]
    weights: List[float]
    lam: float
    initial_model: Vec
    num_classes: Optional[int] = None
    test: Optional[DatasetShard] = None
    client_shards: Optional[List[DatasetShard]] = None

    def __post_init__(self):
        self.initial_model = np.asarray(self.initial_model, dtype=np.float64).reshape(-1)
        m = len(self.clients)
        if len(self.constraints) != m or len(self.weights) != m:
            raise InvalidDimensionError("clients, constraints and weights must have equal length")
        if self.initial_model.size != self.server.dim:
            raise InvalidDimensionError(
                f"initial model has {self.initial_model.size} entries, server objective {self.server.dim}"
            )
        if any(c.dim != self.server.dim for c in self.clients):
            raise InvalidDimensionError("client objectives must share the server dimension")

    @classmethod
    def from_data(cls, data: FederatedData, config: RunConfig) -> "FederatedProblem":
        m = len(data.clients)
        weights = penalty_weights(data, config.penalty_weighting)
        if config.lam > 0:
            # lam == 0 switches the penalty off and reduces the server loop to SGD
            PenaltySpec(config.lam, config.mu, weights)
        return cls(
            server=SoftmaxServerObjective(data.server),
            clients=[ProximalSoftmaxObjective(shard, config.mu) for shard in data.clients],
            constraints=[constraint_for(config, i) for i in range(m)],
            weights=weights,
            lam=config.lam,
            initial_model=np.zeros(data.num_classes * data.feature_dim),
            num_classes=data.num_classes,
            test=data.test,
            client_shards=list(data.clients),
        )

    @property
    def num_clients(self) -> int:
        return len(self.clients)

    @property
    def dim(self) -> int:
        return self.server.dim

    def penalty(self, x: Vec, y: Vec, weight: float) -> float:
        """Weighted penalty; vanishes identically when lam == 0"""
        if self.lam == 0:
            return 0.0
        return penalty_value(x, y, self.lam, weight)

    def implicit_value(self, x: Vec, lower_solutions: List[Vec]) -> float:
        """f(x) = f1(x) + sum_i w_i f2(x, y_i) for the supplied lower-level points"""
        total = self.server.value(x)
        for w, y in zip(self.weights, lower_solutions):
            total += self.penalty(x, y, w)
        return total
