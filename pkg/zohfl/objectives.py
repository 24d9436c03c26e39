"""
Server loss f1, client objective h_i, penalty f2, and quadratic test objectives.

Softmax weights are stored flat with class c occupying the slice
[c * n, (c + 1) * n), i.e. a C x n matrix in row-major order.
"""

import logging
from typing import Optional

import numpy as np

from .exceptions import (
    EmptyDataError, InvalidDimensionError, InvalidParameterError, UnsupportedOracleError,
)
from .models import ConstraintKind, ConstraintSpec, DatasetShard, QuadraticProblem, SoftmaxModel, Vec
from .numkit import RngStream, as_vec, check_finite, project, require_same_dim

logger = logging.getLogger(__name__)


def _check_shard(weights: Vec, shard: DatasetShard) -> int:
    if shard.size == 0:
        raise EmptyDataError("cannot evaluate a loss on an empty shard")
    n = shard.feature_dim
    if weights.size != shard.num_classes * n:
        raise InvalidDimensionError(
            f"model has {weights.size} weights but shard needs {shard.num_classes} x {n}"
        )
    return n


def _log_softmax(weights: Vec, features: np.ndarray, num_classes: int) -> np.ndarray:
    logits = features @ weights.reshape(num_classes, -1).T
    logits = logits - logits.max(axis=1, keepdims=True)
    return logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))


def cross_entropy(weights: Vec, shard: DatasetShard, rows: Optional[np.ndarray] = None) -> float:
    """Mean cross-entropy of flat softmax weights over the selected rows"""
    _check_shard(weights, shard)
    feats = shard.features if rows is None else shard.features[rows]
    labels = shard.labels if rows is None else shard.labels[rows]
    log_p = _log_softmax(weights, feats, shard.num_classes)
    return float(check_finite(-log_p[np.arange(labels.size), labels].mean(), "cross-entropy"))


def cross_entropy_grad(weights: Vec, shard: DatasetShard, rows: Optional[np.ndarray] = None) -> Vec:
    """Gradient of cross_entropy with respect to the flat weights"""
    _check_shard(weights, shard)
    feats = shard.features if rows is None else shard.features[rows]
    labels = shard.labels if rows is None else shard.labels[rows]
    probs = np.exp(_log_softmax(weights, feats, shard.num_classes))
    probs[np.arange(labels.size), labels] -= 1.0
    grad = probs.T @ feats / labels.size
    return check_finite(grad.reshape(-1), "cross-entropy gradient")


def f1_loss(model: SoftmaxModel, shard: DatasetShard) -> float:
    """Server loss: mean cross-entropy over the whole shard"""
    if shard.size and shard.feature_dim != model.feature_dim:
        raise InvalidDimensionError(
            f"model feature_dim {model.feature_dim} != shard feature_dim {shard.feature_dim}"
        )
    return cross_entropy(model.weights, shard)


def f1_stoch_grad(model: SoftmaxModel, shard: DatasetShard, rng: RngStream, batch: int = 1) -> Vec:
    """Cross-entropy gradient on a uniformly drawn minibatch"""
    if batch < 1:
        raise InvalidParameterError(f"batch must be >= 1, got {batch}")
    if shard.size == 0:
        raise EmptyDataError("cannot sample a batch from an empty shard")
    rows = rng.batch_indices(shard.size, batch)
    return cross_entropy_grad(model.weights, shard, rows)


def local_objective_value(x: Vec, y: Vec, shard: DatasetShard, mu: float) -> float:
    """h_i(x, y) = CE(y) + mu/2 ||y - x||^2 on the full shard"""
    require_same_dim(x, y, "x and y")
    return cross_entropy(y, shard) + 0.5 * mu * float(np.sum((y - x) ** 2))


def local_objective_grad(x: Vec, y: Vec, shard: DatasetShard, mu: float,
                         rng: Optional[RngStream] = None, batch: Optional[int] = 1) -> Vec:
    """Stochastic gradient in y of h_i(x, y); rng=None or batch=None uses the full shard"""
    x, y = as_vec(x), as_vec(y)
    require_same_dim(x, y, "x and y")
    if mu < 0:
        raise InvalidParameterError(f"mu must be nonnegative, got {mu}")
    if batch is not None and batch < 1:
        raise InvalidParameterError(f"batch must be >= 1, got {batch}")
    if shard.size == 0:
        raise EmptyDataError("client shard is empty")
    rows = None
    if rng is not None and batch is not None:
        rows = rng.batch_indices(shard.size, min(batch, shard.size))
    return cross_entropy_grad(y, shard, rows) + mu * (y - x)


def penalty_value(x: Vec, y: Vec, lam: float, weight: float) -> float:
    """(lam / 2) * weight * ||x - y||^2"""
    x, y = as_vec(x), as_vec(y)
    require_same_dim(x, y, "x and y")
    if not lam > 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    if weight < 0:
        raise InvalidParameterError(f"weight must be nonnegative, got {weight}")
    return 0.5 * lam * weight * float(np.sum((x - y) ** 2))


def quad_value(q: QuadraticProblem, y: Vec) -> float:
    return 0.5 * float(y @ q.A @ y) + float(q.b @ y)


def quad_stoch_grad(q: QuadraticProblem, y: Vec, rng: Optional[RngStream] = None) -> Vec:
    grad = q.A @ y + q.b
    if rng is not None and q.noise_sigma > 0:
        grad = grad + q.noise_sigma * rng.normal(q.dim)
    return grad


def quad_solution(q: QuadraticProblem, spec: ConstraintSpec, anchor: Optional[Vec] = None) -> Vec:
    """Closed-form minimiser of 1/2 y'Ay + b'y over the constraint set"""
    if spec.kind == ConstraintKind.UNCONSTRAINED:
        return np.linalg.solve(q.A, -q.b)

    if spec.kind == ConstraintKind.ORTHANT:
        if not q.is_diagonal:
            raise UnsupportedOracleError("orthant oracle needs a diagonal A")
        return np.maximum(-q.b / np.diag(q.A), 0.0)

    anchor = as_vec(anchor)
    require_same_dim(anchor, q.b, "anchor and b")
    free = np.linalg.solve(q.A, -q.b)
    if np.linalg.norm(free - anchor) <= spec.radius:
        return free

    # y(nu) - anchor = -(A + nu I)^-1 (A anchor + b); its norm is decreasing in nu
    eigvals, eigvecs = np.linalg.eigh(q.A)
    g = eigvecs.T @ (q.A @ anchor + q.b)

    def offset_norm(nu: float) -> float:
        return float(np.linalg.norm(g / (eigvals + nu)))

    lo, hi = 0.0, np.linalg.norm(g) / spec.radius
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        if offset_norm(mid) > spec.radius:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    y = anchor - eigvecs @ (g / (eigvals + hi))
    return project(y, spec, anchor)


class SoftmaxServerObjective:
    """f1 over the server's shard"""

    def __init__(self, shard: DatasetShard):
        shard.require_nonempty("server shard")
        self.shard = shard
        self.dim = shard.num_classes * shard.feature_dim

    def value(self, x: Vec) -> float:
        return cross_entropy(x, self.shard)

    def stoch_grad(self, x: Vec, rng: Optional[RngStream], batch: Optional[int]) -> Vec:
        rows = None
        if rng is not None and batch is not None:
            rows = rng.batch_indices(self.shard.size, min(batch, self.shard.size))
        return cross_entropy_grad(x, self.shard, rows)


class ProximalSoftmaxObjective:
    """h_i(x, y) = CE_i(y) + mu/2 ||y - x||^2 over a client's shard"""

    def __init__(self, shard: DatasetShard, mu: float):
        shard.require_nonempty("client shard")
        if mu < 0:
            raise InvalidParameterError(f"mu must be nonnegative, got {mu}")
        self.shard = shard
        self.mu = mu
        self.dim = shard.num_classes * shard.feature_dim

    def value(self, x: Vec, y: Vec) -> float:
        return local_objective_value(x, y, self.shard, self.mu)

    def grad(self, x: Vec, y: Vec, rng: Optional[RngStream] = None, batch: Optional[int] = None) -> Vec:
        return local_objective_grad(x, y, self.shard, self.mu, rng, batch)


class QuadraticServerObjective:
    """Quadratic stand-in for f1, used by reduction and rate checks"""

    def __init__(self, problem: QuadraticProblem):
        self.problem = problem
        self.dim = problem.dim

    def value(self, x: Vec) -> float:
        return quad_value(self.problem, x)

    def stoch_grad(self, x: Vec, rng: Optional[RngStream], batch: Optional[int]) -> Vec:
        return quad_stoch_grad(self.problem, x, rng)


class ProximalQuadraticObjective:
    """h(x, y) = q(y) + mu/2 ||y - x||^2; q=None leaves only the proximal term"""

    def __init__(self, problem: Optional[QuadraticProblem], mu: float, dim: Optional[int] = None):
        if mu < 0:
            raise InvalidParameterError(f"mu must be nonnegative, got {mu}")
        if problem is None and not mu > 0:
            raise InvalidParameterError("a pure proximal objective needs mu > 0")
        if problem is None and dim is None:
            raise InvalidDimensionError("dim is required when no quadratic is given")
        self.problem = problem
        self.mu = mu
        self.dim = problem.dim if problem is not None else int(dim)

    def value(self, x: Vec, y: Vec) -> float:
        base = quad_value(self.problem, y) if self.problem is not None else 0.0
        return base + 0.5 * self.mu * float(np.sum((y - x) ** 2))

    def grad(self, x: Vec, y: Vec, rng: Optional[RngStream] = None, batch: Optional[int] = None) -> Vec:
        base = quad_stoch_grad(self.problem, y, rng) if self.problem is not None else 0.0
        return base + self.mu * (y - x)

    def combined(self, x: Vec) -> QuadraticProblem:
        """h(x, .) written as a single quadratic in y (noise carried over)"""
        n = self.dim
        A = self.mu * np.eye(n)
        b = -self.mu * as_vec(x)
        sigma = 0.0
        if self.problem is not None:
            A = A + self.problem.A
            b = b + self.problem.b
            sigma = self.problem.noise_sigma
        return QuadraticProblem(A, b, sigma)

    def solution(self, x: Vec, spec: ConstraintSpec) -> Vec:
        return quad_solution(self.combined(x), spec, anchor=x)
