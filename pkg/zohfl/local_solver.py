"""
Client-side lower-level solver: projected SGD with diminishing steps gamma0 / (t + Gamma).
"""

import logging
from typing import Optional, Protocol, Tuple

import numpy as np

from .exceptions import InvalidDimensionError, InvalidParameterError
from .models import ConstraintSpec, LocalRunReport, LocalSchedule, LocalState, Vec
from .numkit import (
    ROLE_CLIENT_MINUS, ROLE_CLIENT_PLUS, RngStream, as_vec, check_finite, is_feasible, project,
)

logger = logging.getLogger(__name__)


class LowerLevelObjective(Protocol):
    """h(x, y) with a (possibly stochastic) gradient in y"""
    dim: int

    def value(self, x: Vec, y: Vec) -> float: ...

    def grad(self, x: Vec, y: Vec, rng: Optional[RngStream] = None, batch: Optional[int] = None) -> Vec: ...


def local_solve(x_input: Vec, init: Vec, objective: LowerLevelObjective, spec: ConstraintSpec,
                schedule: LocalSchedule, budget: int, rng: Optional[RngStream],
                batch: Optional[int] = 1) -> LocalRunReport:
    """Run `budget` projected-SGD steps on objective(x_input, .) starting from init

    With rng=None (or batch=None) every step uses the full-batch gradient.
    A zero budget returns init untouched.
    """
    x_input, init = as_vec(x_input), as_vec(init)
    if x_input.shape != init.shape or x_input.size != objective.dim:
        raise InvalidDimensionError(
            f"x_input {x_input.shape}, init {init.shape} and objective dim {objective.dim} disagree"
        )
    if budget < 0:
        raise InvalidParameterError(f"budget must be nonnegative, got {budget}")

    y = init.copy()
    step = 0.0
    for t in range(budget):
        step = schedule.step(t)
        y = project(y - step * objective.grad(x_input, y, rng, batch), spec, x_input)
        assert is_feasible(y, spec, x_input), f"iterate left the feasible set at step {t}"

    check_finite(y, "local iterate")
    return LocalRunReport(
        final_iterate=y,
        steps_taken=budget,
        last_step_size=step,
        grad_eval_count=budget,
        init_distance=float(np.linalg.norm(init - x_input)),
    )


class LocalSolver:
    """One client's solver: owns its objective, constraint and step schedule"""

    def __init__(self, client_id: int, objective: LowerLevelObjective, spec: ConstraintSpec,
                 schedule: LocalSchedule, batch: Optional[int] = 1, seed: int = 0,
                 warm_start: bool = False, shared_stream: bool = False):
        self.client_id = client_id
        self.objective = objective
        self.spec = spec
        self.schedule = schedule
        self.batch = batch
        self.seed = seed
        self.warm_start = warm_start
        self.shared_stream = shared_stream
        self.state = LocalState(client_id=client_id)

    def _streams(self, round_index: int) -> Tuple[RngStream, RngStream]:
        plus = RngStream.for_role(self.seed, ROLE_CLIENT_PLUS, self.client_id, round_index)
        if self.shared_stream:
            # common random numbers: an identical, independent copy of the + stream
            minus = RngStream.for_role(self.seed, ROLE_CLIENT_PLUS, self.client_id, round_index)
        else:
            minus = RngStream.for_role(self.seed, ROLE_CLIENT_MINUS, self.client_id, round_index)
        return plus, minus

    def solve(self, x_input: Vec, budget: int, rng: Optional[RngStream],
              init: Optional[Vec] = None) -> LocalRunReport:
        start = as_vec(x_input) if init is None else init
        return local_solve(x_input, start, self.objective, self.spec, self.schedule,
                           budget, rng, self.batch)

    def solve_pm_pair(self, x: Vec, v: Vec, eta: float, budget: int,
                      round_index: int) -> Tuple[LocalRunReport, LocalRunReport]:
        """Approximate y(x + eta v) and y(x - eta v) with the same budget"""
        x, v = as_vec(x), as_vec(v)
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise InvalidParameterError("direction must have unit norm")
        if eta < 0:
            raise InvalidParameterError(f"eta must be nonnegative, got {eta}")

        x_plus, x_minus = x + eta * v, x - eta * v
        init_plus, init_minus = x_plus, x_minus
        if self.warm_start and self.state.y_plus is not None:
            # last round's iterates may lie outside the sets around the new anchors
            init_plus = project(self.state.y_plus, self.spec, x_plus)
            init_minus = project(self.state.y_minus, self.spec, x_minus)

        rng_plus, rng_minus = self._streams(round_index)
        plus = local_solve(x_plus, init_plus, self.objective, self.spec, self.schedule,
                           budget, rng_plus, self.batch)
        minus = local_solve(x_minus, init_minus, self.objective, self.spec, self.schedule,
                            budget, rng_minus, self.batch)

        self.state.y_plus = plus.final_iterate
        self.state.y_minus = minus.final_iterate
        self.state.last_round = round_index
        return plus, minus
