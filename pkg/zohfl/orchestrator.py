"""
Server loop of zeroth-order implicit hierarchical federated learning (ZO-HFL).

Each round the server draws a unit direction per contacted client, every client
approximately solves its lower-level problem at x + eta v and x - eta v, the server turns
the two penalty values into a zeroth-order gradient term, adds a stochastic gradient of
its own loss, and takes a step.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .evaluation import evaluate_accuracy
from .exceptions import EmptyRoundError, InvalidParameterError, RunAbortedError
from .local_solver import LocalSolver, local_solve
from .models import (
    EvalBlock, LocalRunReport, LocalSchedule, RoundPlan, RoundRecord, RunConfig, RunResult,
    SmoothingParams, Vec,
)
from .numkit import (
    ROLE_DIRECTION, ROLE_EVAL, ROLE_PARTICIPATION, ROLE_SERVER, RngStream, as_vec, check_finite,
    require_same_dim, sample_unit_sphere,
)
from .problem import FederatedProblem
from .smoothing import zo_term

logger = logging.getLogger(__name__)

MetricSink = Callable[[RoundRecord], None]


def participant_count(beta: float, num_clients: int) -> int:
    """max(1, ceil(beta * m))"""
    return max(1, math.ceil(round(beta * num_clients, 9)))


def local_budget(tau: float, round_index: int) -> int:
    """H_{i,r} = ceil(tau_i * sqrt(r + 1))"""
    return int(math.ceil(round(tau * math.sqrt(round_index + 1), 9)))


def global_step_size(config: RunConfig, round_index: int) -> float:
    """gamma_r = c / (r + 1)^p"""
    return config.step_constant / (round_index + 1) ** config.step_exponent


def sample_participants(beta: float, num_clients: int, rng: RngStream) -> List[int]:
    """S_r drawn uniformly without replacement, in ascending order"""
    if not 0 < beta <= 1:
        raise InvalidParameterError(f"participation beta must lie in (0, 1], got {beta}")
    size = participant_count(beta, num_clients)
    return sorted(int(i) for i in rng.choice(num_clients, size, replace=False))


def plan_round(round_index: int, config: RunConfig, rng: RngStream, dim: int) -> RoundPlan:
    """Choose participants, their directions and budgets, and the global step for one round"""
    m = config.num_clients
    chosen = sample_participants(config.beta, m, rng)

    if config.straggler_mode == "zero_budget":
        contacted = list(range(m))
    else:
        contacted = chosen
    selected = set(chosen)

    directions = {
        i: sample_unit_sphere(RngStream.for_role(config.algo_seed, ROLE_DIRECTION, i, round_index), dim)
        for i in contacted
    }
    budgets = {
        i: local_budget(config.tau_for(i), round_index) if i in selected else 0
        for i in contacted
    }
    return RoundPlan(
        round=round_index,
        participants=chosen,
        directions=directions,
        budgets=budgets,
        global_step=global_step_size(config, round_index),
        contacted=contacted,
    )


def assemble_gradient(f1_grad: Vec, client_terms: Union[Mapping[int, Vec], Sequence[Vec]],
                      normalizer: Optional[int] = None) -> Vec:
    """f1_grad + (1 / normalizer) * sum of client terms, summed in ascending client order

    The normalizer defaults to the number of terms (renormalised partial participation).
    """
    f1_grad = as_vec(f1_grad)
    if isinstance(client_terms, Mapping):
        terms = [as_vec(client_terms[k]) for k in sorted(client_terms)]
    else:
        terms = [as_vec(t) for t in client_terms]
    if not terms:
        raise EmptyRoundError("no client terms to aggregate")
    total = np.zeros_like(f1_grad)
    for term in terms:
        require_same_dim(f1_grad, term, "server gradient and client term")
        total = total + term
    return f1_grad + total / (normalizer or len(terms))


def global_step(x: Vec, g: Vec, gamma: float) -> Vec:
    """x - gamma * g, refusing non-finite estimates"""
    x, g = as_vec(x), as_vec(g)
    require_same_dim(x, g, "model and gradient estimate")
    if not gamma > 0:
        raise InvalidParameterError(f"global step must be positive, got {gamma}")
    check_finite(g, "gradient estimate")
    return x - gamma * g


def is_checkpoint(round_index: int, eval_every: int, rounds: int) -> bool:
    """Every eval_every rounds, and always after the last round"""
    return bool(eval_every) and ((round_index + 1) % eval_every == 0 or round_index == rounds - 1)


def evaluate_checkpoint(problem: FederatedProblem, x: Vec, schedule: LocalSchedule, seed: int,
                        eval_budget: int, batch: Optional[int]) -> EvalBlock:
    """Implicit loss and accuracies at x from dedicated lower-level solves

    Nothing computed here feeds back into optimisation.
    """
    solutions = []
    for i, (objective, spec) in enumerate(zip(problem.clients, problem.constraints)):
        rng = RngStream.for_role(seed, ROLE_EVAL, i, 0)
        solutions.append(local_solve(x, x, objective, spec, schedule, eval_budget, rng, batch).final_iterate)

    block = EvalBlock(
        f1_loss=problem.server.value(x),
        implicit_loss=problem.implicit_value(x, solutions),
    )
    if problem.test is not None and problem.test.size:
        block.test_accuracy = evaluate_accuracy(x, problem.test)
    if problem.client_shards:
        block.personalized_accuracy = float(np.mean([
            evaluate_accuracy(y, shard) for y, shard in zip(solutions, problem.client_shards)
        ]))
    logger.debug("eval: f=%.5f f1=%.5f acc=%s", block.implicit_loss, block.f1_loss, block.test_accuracy)
    return block


class ZOHFLRunner:
    """Runs the ZO-HFL communication loop over a FederatedProblem"""

    def __init__(self, config: RunConfig, problem: FederatedProblem, sink: Optional[MetricSink] = None):
        if problem.num_clients != config.num_clients:
            raise InvalidParameterError(
                f"config has {config.num_clients} clients, problem has {problem.num_clients}"
            )
        self.config = config
        self.problem = problem
        self.sink = sink
        self.params = SmoothingParams(config.eta, problem.dim)
        self.schedule = LocalSchedule(config.local_gamma0, config.local_Gamma)
        self.solvers = [
            LocalSolver(
                client_id=i,
                objective=problem.clients[i],
                spec=problem.constraints[i],
                schedule=self.schedule,
                batch=config.client_batch,
                seed=config.algo_seed,
                warm_start=config.warm_start,
                shared_stream=config.shared_stream,
            )
            for i in range(problem.num_clients)
        ]
        self.cumulative_steps: Dict[int, int] = {i: 0 for i in range(problem.num_clients)}

    def run(self) -> RunResult:
        x = self.problem.initial_model.copy()
        records: List[RoundRecord] = []
        for r in range(self.config.rounds):
            try:
                x, record = self._run_round(r, x)
            except Exception as e:
                logger.error("ZO-HFL run aborted at round %d: %s", r, e)
                raise RunAbortedError(r, e) from e
            records.append(record)
            if self.sink is not None:
                self.sink(record)
            if self.config.log_every and (r + 1) % self.config.log_every == 0:
                logger.info("round %d/%d  f1=%.5f  f2=%.5f  |g|=%.4g", r + 1, self.config.rounds,
                            record.global_loss_f1, record.penalty_f2, record.grad_estimate_norm)
        return RunResult(final_model=x, records=records,
                         cumulative_local_steps=dict(self.cumulative_steps))

    def _solve_clients(self, x: Vec, plan: RoundPlan) -> Dict[int, Tuple[LocalRunReport, LocalRunReport]]:
        def work(cid: int):
            return self.solvers[cid].solve_pm_pair(
                x, plan.directions[cid], self.config.eta, plan.budgets[cid], plan.round
            )

        if not self.config.parallel_clients or len(plan.contacted) < 2:
            return {cid: work(cid) for cid in plan.contacted}

        results = {}
        with ThreadPoolExecutor(max_workers=self.config.max_workers) as executor:
            future_to_client = {executor.submit(work, cid): cid for cid in plan.contacted}
            for future in as_completed(future_to_client):
                results[future_to_client[future]] = future.result()
        return results

    def _run_round(self, r: int, x: Vec) -> Tuple[Vec, RoundRecord]:
        started = time.perf_counter()
        cfg, problem, m = self.config, self.problem, self.problem.num_clients
        plan = plan_round(r, cfg, RngStream.for_role(cfg.algo_seed, ROLE_PARTICIPATION, -1, r), problem.dim)
        solved = self._solve_clients(x, plan)

        terms: Dict[int, Vec] = {}
        penalties: List[float] = []
        gaps: Dict[int, float] = {}
        warm: Dict[int, float] = {}
        grad_evals = 0
        for cid in sorted(solved):
            plus, minus = solved[cid]
            v = plan.directions[cid]
            # scaled so that averaging over all m clients reproduces sum_i w_i f2_i
            weight = m * problem.weights[cid]
            f_plus = problem.penalty(x + cfg.eta * v, plus.final_iterate, weight)
            f_minus = problem.penalty(x - cfg.eta * v, minus.final_iterate, weight)
            terms[cid] = zo_term(f_plus, f_minus, v, self.params)
            penalties.append(0.5 * (f_plus + f_minus))
            gaps[cid] = float(np.linalg.norm(plus.final_iterate - minus.final_iterate))
            if cfg.warm_start:
                warm[cid] = 0.5 * (plus.init_distance + minus.init_distance)
            grad_evals += plus.grad_eval_count + minus.grad_eval_count
            self.cumulative_steps[cid] += plan.budgets[cid]

        server_rng = RngStream.for_role(cfg.algo_seed, ROLE_SERVER, -1, r)
        f1_grad = problem.server.stoch_grad(x, server_rng, cfg.server_batch or None)
        normalizer = len(terms) if cfg.aggregation == "participants" else m
        g = assemble_gradient(f1_grad, terms, normalizer)
        x_next = global_step(x, g, plan.global_step)

        record = RoundRecord(
            round=r,
            global_loss_f1=float(check_finite(problem.server.value(x), "f1 loss")),
            penalty_f2=float(np.mean(penalties)),
            grad_estimate_norm=float(np.linalg.norm(g)),
            client_gaps=gaps,
            wall_time=0.0,
            local_steps=2 * sum(plan.budgets.values()),
            client_grad_evals=grad_evals,
            warm_start_distances=warm,
        )
        if self._is_checkpoint(r):
            record.eval = self.evaluate(x_next)
        record.wall_time = max(time.perf_counter() - started, 1e-9)
        return x_next, record

    def _is_checkpoint(self, r: int) -> bool:
        return is_checkpoint(r, self.config.eval_every, self.config.rounds)

    def evaluate(self, x: Vec) -> EvalBlock:
        return evaluate_checkpoint(self.problem, x, self.schedule, self.config.algo_seed,
                                   self.config.eval_budget, self.config.client_batch)


def run_zohfl(config: RunConfig, problem: FederatedProblem, sink: Optional[MetricSink] = None) -> RunResult:
    """Execute config.rounds rounds of ZO-HFL and return the final model with its records"""
    return ZOHFLRunner(config, problem, sink).run()
