"""
Reference federated methods: FedAvg, FedProx and SCAFFOLD on the same softmax shards,
participation sampling and metric records as ZO-HFL.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from .exceptions import EmptyDataError, InvalidParameterError, RunAbortedError
from .models import BaselineConfig, DatasetShard, LocalSchedule, RoundRecord, RunResult, Vec
from .numkit import ROLE_CLIENT, ROLE_PARTICIPATION, RngStream, check_finite
from .objectives import cross_entropy_grad
from .orchestrator import MetricSink, evaluate_checkpoint, is_checkpoint, local_budget, sample_participants
from .problem import FederatedProblem

logger = logging.getLogger(__name__)


@dataclass
class ClientUpdate:
    """What one client sends back after local training"""
    client_id: int
    delta: Vec
    control_delta: Optional[Vec]
    num_samples: int
    steps: int


def aggregation_weights(updates: List[ClientUpdate]) -> List[float]:
    """N_i / sum of N_j over this round's participants"""
    total = sum(u.num_samples for u in updates)
    return [u.num_samples / total for u in updates]


class FedAvg:
    """Local SGD on the client's cross-entropy, sample-weighted averaging on the server"""

    def __init__(self, config: BaselineConfig, dim: int):
        self.config = config
        self.dim = dim

    def local_gradient(self, client_id: int, y: Vec, x_global: Vec, shard: DatasetShard,
                       rng: RngStream) -> Vec:
        batch = min(self.config.client_batch, shard.size)
        return cross_entropy_grad(y, shard, rng.batch_indices(shard.size, batch))

    def client_update(self, client_id: int, x_global: Vec, shard: DatasetShard, steps: int,
                      rng: RngStream) -> ClientUpdate:
        y = x_global.copy()
        for _ in range(steps):
            y = y - self.config.local_lr * self.local_gradient(client_id, y, x_global, shard, rng)
        check_finite(y, f"client {client_id} model")
        return ClientUpdate(client_id, y - x_global, None, shard.size, steps)

    def server_aggregate(self, x_global: Vec, updates: List[ClientUpdate]) -> Vec:
        step = np.zeros_like(x_global)
        for u, w in zip(updates, aggregation_weights(updates)):
            step = step + w * u.delta
        return x_global + self.config.server_lr * step


class FedProx(FedAvg):
    """FedAvg with (prox_mu / 2) ||y - x_global||^2 added to every local loss"""

    def __init__(self, config: BaselineConfig, dim: int):
        super().__init__(config, dim)
        if config.prox_mu == 0:
            logger.warning("FedProx with prox_mu=0 reduces to FedAvg")

    def local_gradient(self, client_id, y, x_global, shard, rng):
        grad = super().local_gradient(client_id, y, x_global, shard, rng)
        return grad + self.config.prox_mu * (y - x_global)


class Scaffold(FedAvg):
    """SCAFFOLD with the gradient-difference (option II) control-variate update"""

    def __init__(self, config: BaselineConfig, dim: int):
        super().__init__(config, dim)
        self.server_control = np.zeros(dim)
        self.client_controls: Dict[int, Vec] = {}

    def local_gradient(self, client_id, y, x_global, shard, rng):
        grad = super().local_gradient(client_id, y, x_global, shard, rng)
        c_i = self.client_controls.get(client_id, np.zeros(self.dim))
        return grad - c_i + self.server_control

    def client_update(self, client_id, x_global, shard, steps, rng):
        update = super().client_update(client_id, x_global, shard, steps, rng)
        if self.config.freeze_control_variates or steps == 0:
            update.control_delta = np.zeros(self.dim)
            return update
        c_i = self.client_controls.get(client_id, np.zeros(self.dim))
        new_c_i = c_i - self.server_control - update.delta / (steps * self.config.local_lr)
        update.control_delta = new_c_i - c_i
        self.client_controls[client_id] = new_c_i
        return update

    def server_aggregate(self, x_global, updates):
        x_next = super().server_aggregate(x_global, updates)
        if not self.config.freeze_control_variates:
            # c <- c + (1/m) sum_{i in S_r} delta c_i
            for u in updates:
                self.server_control = self.server_control + u.control_delta / self.config.num_clients
        return x_next


METHODS = {"fedavg": FedAvg, "fedprox": FedProx, "scaffold": Scaffold}


class BaselineRunner:
    """Communication loop shared by the three reference methods"""

    def __init__(self, config: BaselineConfig, problem: FederatedProblem, sink: Optional[MetricSink] = None):
        if not problem.client_shards:
            raise EmptyDataError("baselines need the clients' data shards")
        if len(problem.client_shards) != config.num_clients:
            raise InvalidParameterError(
                f"config has {config.num_clients} clients, problem has {len(problem.client_shards)}"
            )
        self.config = config
        self.problem = problem
        self.sink = sink
        self.method = METHODS[config.method](config, problem.dim)
        self.eval_schedule = LocalSchedule()
        self.cumulative_steps: Dict[int, int] = {i: 0 for i in range(config.num_clients)}

    def steps_for(self, round_index: int) -> int:
        if self.config.local_steps:
            return self.config.local_steps
        return 2 * local_budget(self.config.tau, round_index)

    def run(self) -> RunResult:
        x = self.problem.initial_model.copy()
        records: List[RoundRecord] = []
        for r in range(self.config.rounds):
            try:
                x, record = self._run_round(r, x)
            except Exception as e:
                logger.error("%s run aborted at round %d: %s", self.config.method, r, e)
                raise RunAbortedError(r, e) from e
            records.append(record)
            if self.sink is not None:
                self.sink(record)
            if self.config.log_every and (r + 1) % self.config.log_every == 0:
                logger.info("%s round %d/%d  f1=%.5f", self.config.method, r + 1,
                            self.config.rounds, record.global_loss_f1)
        return RunResult(final_model=x, records=records,
                         cumulative_local_steps=dict(self.cumulative_steps))

    def _client_updates(self, x: Vec, participants: List[int], steps: int, r: int) -> List[ClientUpdate]:
        def work(cid: int) -> ClientUpdate:
            rng = RngStream.for_role(self.config.algo_seed, ROLE_CLIENT, cid, r)
            return self.method.client_update(cid, x, self.problem.client_shards[cid], steps, rng)

        if not self.config.parallel_clients or len(participants) < 2:
            return [work(cid) for cid in participants]

        results: Dict[int, ClientUpdate] = {}
        with ThreadPoolExecutor(max_workers=self.config.max_workers) as executor:
            future_to_client = {executor.submit(work, cid): cid for cid in participants}
            for future in as_completed(future_to_client):
                results[future_to_client[future]] = future.result()
        return [results[cid] for cid in participants]

    def _run_round(self, r: int, x: Vec):
        started = time.perf_counter()
        cfg = self.config
        participants = sample_participants(
            cfg.participation, cfg.num_clients,
            RngStream.for_role(cfg.algo_seed, ROLE_PARTICIPATION, -1, r),
        )
        steps = self.steps_for(r)
        updates = self._client_updates(x, participants, steps, r)
        for cid in participants:
            self.cumulative_steps[cid] += steps

        x_next = self.method.server_aggregate(x, updates)
        check_finite(x_next, "global model")

        record = RoundRecord(
            round=r,
            global_loss_f1=float(self.problem.server.value(x)),
            penalty_f2=0.0,
            grad_estimate_norm=float(np.linalg.norm(x_next - x)),
            client_gaps={u.client_id: float(np.linalg.norm(u.delta)) for u in updates},
            wall_time=0.0,
            local_steps=steps * len(updates),
            client_grad_evals=sum(u.steps for u in updates),
        )
        if is_checkpoint(r, cfg.eval_every, cfg.rounds):
            record.eval = evaluate_checkpoint(self.problem, x_next, self.eval_schedule, cfg.algo_seed,
                                              cfg.eval_budget, cfg.client_batch)
        record.wall_time = max(time.perf_counter() - started, 1e-9)
        return x_next, record


def run_baseline(config: BaselineConfig, problem: FederatedProblem,
                 sink: Optional[MetricSink] = None) -> RunResult:
    """Run FedAvg, FedProx or SCAFFOLD for config.rounds rounds"""
    return BaselineRunner(config, problem, sink).run()
