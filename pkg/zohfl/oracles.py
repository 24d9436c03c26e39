"""
Independent ground truth: the ReLU bilevel example with its closed-form lower level,
central finite differences, and the battery of checks behind `zohfl validate`.
"""

import csv
import io
import logging
from typing import Callable, List, Optional

import numpy as np

from .exceptions import InvalidParameterError
from .local_solver import local_solve
from .models import ConstraintSpec, LocalSchedule, OracleReport, QuadraticProblem, SmoothingParams, Vec
from .numkit import RngStream, as_vec, derive_stream_id, project, sample_unit_ball, sample_unit_sphere
from .objectives import ProximalQuadraticObjective, cross_entropy, cross_entropy_grad, quad_value
from .smoothing import (
    RunningStats, smoothed_grad_difference_mc, smoothed_grad_mc, smoothed_quadratic_exact, smoothed_value_mc,
)
from .data import synth_blobs

logger = logging.getLogger(__name__)

DETERMINISTIC_TOL = 1e-8
MC_BAND = 4.0
# gamma0 * mu > 1 on the unit-curvature lower level; the first step is 2/3, never a one-step solve
PIPELINE_SCHEDULE = LocalSchedule(gamma0=2.0, Gamma=3.0)


def relu_bilevel_implicit(x: Vec) -> float:
    """1/2 ||x + 1 - max(x, 0)||^2, the implicit objective with y(x) = max(x, 0)"""
    x = as_vec(x)
    return 0.5 * float(np.sum((x + 1.0 - np.maximum(x, 0.0)) ** 2))


def pipeline_tolerance(last_step_size: float) -> float:
    return max(DETERMINISTIC_TOL, 0.1 * last_step_size)


def check_bilevel_pipeline(x: Vec, budget: int, schedule: LocalSchedule = PIPELINE_SCHEDULE,
                           init: Optional[Vec] = None) -> OracleReport:
    """Solve the orthant lower level numerically and compare against the closed form

    The solve starts from x unless init is given. From x the first projected step already
    lands on max(x, 0), so only a cold start exercises the step schedule.
    """
    if budget < 1:
        raise InvalidParameterError(f"budget must be >= 1, got {budget}")
    x = as_vec(x)
    start = x if init is None else as_vec(init)
    objective = ProximalQuadraticObjective(None, mu=1.0, dim=x.size)
    report = local_solve(x, start, objective, ConstraintSpec.orthant(), schedule, budget, rng=None, batch=None)
    observed = 0.5 * float(np.sum((x + 1.0 - report.final_iterate) ** 2))
    label = f"H={budget}" if init is None else f"H={budget},cold"
    return OracleReport.compare(
        f"bilevel_pipeline[{label}]", observed, relu_bilevel_implicit(x),
        pipeline_tolerance(report.last_step_size),
    )


def cold_start(x: Vec) -> Vec:
    """A feasible orthant point one unit above the lower-level solution max(x, 0)"""
    return np.maximum(as_vec(x), 0.0) + 1.0


def finite_diff_grad(f: Callable[[Vec], float], x: Vec, h: float = 1e-5) -> Vec:
    """Central differences (f(x + h e_i) - f(x - h e_i)) / 2h"""
    if not h > 0:
        raise InvalidParameterError(f"h must be positive, got {h}")
    x = as_vec(x)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return grad


def relu_grid(lo: float = -2.0, hi: float = 2.0, spacing: float = 0.05) -> np.ndarray:
    """Rows (x1, x2, f) of the two-dimensional implicit function on a square grid"""
    if not spacing > 0 or not hi > lo:
        raise InvalidParameterError("grid needs spacing > 0 and hi > lo")
    axis = lo + spacing * np.arange(int(round((hi - lo) / spacing)) + 1)
    rows = [(a, b, relu_bilevel_implicit([a, b])) for a in axis for b in axis]
    return np.asarray(rows)


def relu_grid_csv(grid: np.ndarray) -> str:
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(["x1", "x2", "f"])
    for a, b, value in grid:
        writer.writerow([f"{a:.2f}", f"{b:.2f}", repr(float(value))])
    return output.getvalue()


class OracleBattery:
    """Ground-truth checks run by `validate`; every check is seeded and deterministic"""

    def __init__(self, seed: int = 0, samples: int = 20000):
        self.seed = seed
        self.samples = samples

    def _rng(self, name: str) -> RngStream:
        return RngStream(self.seed, derive_stream_id(f"oracle:{name}"))

    def run(self) -> List[OracleReport]:
        reports: List[OracleReport] = []
        for check in (
            self.projection_properties,
            self.sampler_statistics,
            self.smoothed_quadratic,
            self.smoothing_gap_bound,
            self.gradient_smoothness,
            self.one_point_equivalence,
            self.finite_differences,
            self.relu_example,
        ):
            produced = check()
            for r in produced:
                logger.debug("%s: %s", r.name, "pass" if r.passed else "FAIL")
            reports.extend(produced)
        failed = sum(not r.passed for r in reports)
        logger.info("Oracle battery: %d checks, %d failed", len(reports), failed)
        return reports

    def projection_properties(self) -> List[OracleReport]:
        rng = self._rng("projection")
        anchor = rng.normal(6)
        specs = {"ball": ConstraintSpec.ball(0.7), "orthant": ConstraintSpec.orthant()}
        reports = []
        for name, spec in specs.items():
            idempotence, expansion, violation = 0.0, 0.0, 0.0
            for _ in range(200):
                a, b = 3.0 * rng.normal(6), 3.0 * rng.normal(6)
                pa, pb = project(a, spec, anchor), project(b, spec, anchor)
                idempotence = max(idempotence, float(np.linalg.norm(project(pa, spec, anchor) - pa)))
                expansion = max(expansion, float(np.linalg.norm(pa - pb) - np.linalg.norm(a - b)))
                if name == "ball":
                    violation = max(violation, float(np.linalg.norm(pa - anchor)) - spec.radius)
                else:
                    violation = max(violation, float(-pa.min()))
            reports.append(OracleReport.compare(f"projection_{name}_idempotent", idempotence, 0.0, 1e-12))
            reports.append(OracleReport.compare(f"projection_{name}_nonexpansive", max(expansion, 0.0), 0.0, 1e-12))
            reports.append(OracleReport.compare(f"projection_{name}_feasible", max(violation, 0.0), 0.0, 1e-12))
        return reports

    def sampler_statistics(self) -> List[OracleReport]:
        dim = 5
        rng = self._rng("samplers")
        norms, first_sq, ball_sq = RunningStats(), RunningStats(), RunningStats()
        for _ in range(self.samples):
            v = sample_unit_sphere(rng, dim)
            norms.push(abs(np.linalg.norm(v) - 1.0))
            first_sq.push(v[0] ** 2)
            ball_sq.push(float(np.sum(sample_unit_ball(rng, dim) ** 2)))
        return [
            OracleReport.compare("sphere_unit_norm", float(norms.mean), 0.0, 1e-12),
            # E[v_1^2] = 1/n on the sphere
            OracleReport.compare("sphere_second_moment", float(first_sq.mean), 1.0 / dim,
                                 MC_BAND * float(first_sq.stderr)),
            # E||u||^2 = n/(n+2) in the ball
            OracleReport.compare("ball_second_moment", float(ball_sq.mean), dim / (dim + 2.0),
                                 MC_BAND * float(ball_sq.stderr)),
        ]

    def _quadratic(self) -> QuadraticProblem:
        A = np.array([[2.0, 0.5, 0.0], [0.5, 1.5, 0.2], [0.0, 0.2, 1.0]])
        return QuadraticProblem(A, np.array([0.3, -0.2, 0.1]))

    def smoothed_quadratic(self) -> List[OracleReport]:
        q = self._quadratic()
        x = np.array([0.4, -0.3, 0.8])
        params = SmoothingParams(eta=0.2, dim=q.dim)
        value, grad = smoothed_quadratic_exact(q.A, q.b, x, params)
        f = lambda z: quad_value(q, z)  # noqa: E731

        g = smoothed_grad_mc(f, x, params, self._rng("smoothed_grad"), self.samples)
        v = smoothed_value_mc(f, x, params, self._rng("smoothed_value"), self.samples)
        return [
            OracleReport.compare("smoothed_quadratic_grad", g.mean, grad, MC_BAND * g.stderr + 1e-12),
            OracleReport.compare("smoothed_quadratic_value", v.mean, value, MC_BAND * v.stderr + 1e-12),
        ]

    def smoothing_gap_bound(self) -> List[OracleReport]:
        """|f_eta(x) - f(x)| <= L0 eta for the 1-Lipschitz f = ||x||"""
        eta, dim = 0.1, 4
        rng = self._rng("gap_bound")
        params = SmoothingParams(eta=eta, dim=dim)
        worst = 0.0
        for _ in range(100):
            x = rng.normal(dim)
            est = smoothed_value_mc(lambda z: float(np.linalg.norm(z)), x, params, rng, 200)
            worst = max(worst, abs(est.mean - float(np.linalg.norm(x))))
        return [OracleReport.compare("smoothing_gap_bound", worst, 0.0, eta)]

    def gradient_smoothness(self) -> List[OracleReport]:
        """||grad f_eta(x) - grad f_eta(y)|| <= L0 sqrt(n) / eta ||x - y|| for f = ||x||"""
        eta, dim = 0.2, 4
        rng = self._rng("gradient_smoothness")
        params = SmoothingParams(eta=eta, dim=dim)
        norm = lambda z: float(np.linalg.norm(z))  # noqa: E731
        samples = max(1000, self.samples // 4)
        worst = 0.0
        for _ in range(10):
            # pairs near the origin, where the smoothed norm bends the most
            x = 0.5 * eta * rng.normal(dim)
            delta = rng.normal(dim)
            delta *= 0.1 * eta / np.linalg.norm(delta)
            est = smoothed_grad_difference_mc(norm, x, x + delta, params, rng, samples)
            slack = MC_BAND * float(np.linalg.norm(est.stderr))
            ratio = max(float(np.linalg.norm(est.mean)) - slack, 0.0) / float(np.linalg.norm(delta))
            worst = max(worst, ratio)
        return [OracleReport.compare("smoothed_gradient_lipschitz", worst, 0.0, np.sqrt(dim) / eta)]

    def one_point_equivalence(self) -> List[OracleReport]:
        q = QuadraticProblem(np.diag([1.0, 2.0]), np.array([0.5, -0.5]))
        x = np.array([0.2, 0.1])
        params = SmoothingParams(eta=0.5, dim=q.dim)
        f = lambda z: quad_value(q, z)  # noqa: E731
        two = smoothed_grad_mc(f, x, params, self._rng("two_point"), self.samples)
        one = smoothed_grad_mc(f, x, params, self._rng("one_point"), self.samples, one_point=True)
        band = MC_BAND * np.sqrt(two.stderr ** 2 + one.stderr ** 2)
        return [OracleReport.compare("one_point_two_point_equivalence", one.mean, two.mean, band)]

    def finite_differences(self) -> List[OracleReport]:
        quad = finite_diff_grad(lambda z: 0.5 * float(z @ z), np.array([1.0, 2.0]), 1e-5)
        shard = synth_blobs(self._rng("fd_shard"), num_classes=3, feature_dim=4, per_class=10)
        w = 0.1 * self._rng("fd_weights").normal(3 * 4)
        numeric = finite_diff_grad(lambda z: cross_entropy(z, shard), w, 1e-5)
        exact = cross_entropy_grad(w, shard)
        scale = max(1.0, float(np.max(np.abs(exact))))
        return [
            OracleReport.compare("finite_diff_quadratic", quad, [1.0, 2.0], 1e-8),
            OracleReport.compare("finite_diff_cross_entropy", numeric, exact, 1e-5 * scale),
        ]

    def relu_example(self) -> List[OracleReport]:
        reports = [
            OracleReport.compare("relu_closed_form(1,1)", relu_bilevel_implicit([1.0, 1.0]), 1.0, DETERMINISTIC_TOL),
            OracleReport.compare("relu_closed_form(-1,-1)", relu_bilevel_implicit([-1.0, -1.0]), 0.0, DETERMINISTIC_TOL),
            OracleReport.compare("relu_closed_form(-2,3)", relu_bilevel_implicit([-2.0, 3.0]), 1.0, DETERMINISTIC_TOL),
            check_bilevel_pipeline(np.array([-5.0, -5.0]), 1000),
            check_bilevel_pipeline(np.array([1.5, 2.0]), 1),
            check_bilevel_pipeline(np.array([1e-9, -1e-9]), 10),
            check_bilevel_pipeline(np.array([-5.0, -5.0]), 1000, init=cold_start([-5.0, -5.0])),
            check_bilevel_pipeline(np.array([1.5, 2.0]), 50, init=cold_start([1.5, 2.0])),
            check_bilevel_pipeline(np.array([0.7, -0.3]), 200, init=cold_start([0.7, -0.3])),
        ]

        rng = self._rng("continuity")
        worst = 0.0
        for _ in range(100):
            x = 2.0 * rng.normal(2)
            delta = rng.normal(2)
            delta *= 1e-6 * (0.5 + 0.5 * rng.uniform()) / np.linalg.norm(delta)
            bound = 10.0 * np.linalg.norm(delta) * (np.linalg.norm(x) + np.sqrt(2.0))
            worst = max(worst, abs(relu_bilevel_implicit(x + delta) - relu_bilevel_implicit(x)) / bound)
        reports.append(OracleReport.compare("relu_continuity", worst, 0.0, 1.0))

        h = 1e-6
        base = relu_bilevel_implicit([0.0])
        forward = (relu_bilevel_implicit([h]) - base) / h
        backward = (relu_bilevel_implicit([-h]) - base) / h
        # a differentiable function has forward + backward -> 0
        reports.append(OracleReport.compare("relu_kink_asymmetry", abs(forward + backward), 1.0, 0.5))
        return reports


def run_oracle_battery(seed: int = 0, samples: Optional[int] = None) -> List[OracleReport]:
    battery = OracleBattery(seed) if samples is None else OracleBattery(seed, samples)
    return battery.run()
