"""
Vector kernels, seedable random streams, sphere/ball samplers and Euclidean projections.
"""

import hashlib
import logging
from typing import Optional

import numpy as np

from .exceptions import InvalidDimensionError, InvalidParameterError, NumericsError
from .models import ConstraintKind, ConstraintSpec, Vec

logger = logging.getLogger(__name__)

ROLE_SERVER = "server"
ROLE_DIRECTION = "direction"
ROLE_PARTICIPATION = "participation"
ROLE_CLIENT_PLUS = "client+"
ROLE_CLIENT_MINUS = "client-"
ROLE_CLIENT = "client"
ROLE_EVAL = "eval"
ROLE_DATA = "data"


def derive_stream_id(role: str, client_id: int = -1, round_index: int = -1) -> int:
    """Stable 64-bit stream id for (role, client, round), independent of process and hash seed"""
    digest = hashlib.blake2b(f"{role}|{client_id}|{round_index}".encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "little", signed=False)


class RngStream:
    """Single-owner random stream; equal (seed, stream_id) give equal draws"""

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise InvalidParameterError("seed and stream_id must be nonnegative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    @classmethod
    def for_role(cls, seed: int, role: str, client_id: int = -1, round_index: int = -1) -> "RngStream":
        return cls(seed, derive_stream_id(role, client_id, round_index))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id:#018x})"

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def uniform(self, size=None):
        return self.generator.random(size)

    def integers(self, low: int, high: int, size=None):
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)

    def gamma(self, shape: float, size=None):
        return self.generator.standard_gamma(shape, size)

    def multinomial(self, n: int, pvals) -> np.ndarray:
        return self.generator.multinomial(n, pvals)

    def batch_indices(self, population: int, batch: int) -> np.ndarray:
        """Uniform minibatch without replacement; the full population comes back in order"""
        if batch < 1:
            raise InvalidParameterError(f"batch must be >= 1, got {batch}")
        if batch > population:
            raise InvalidParameterError(f"batch {batch} exceeds population {population}")
        if batch == population:
            return np.arange(population)
        if batch == 1:
            return self.generator.integers(0, population, size=1)
        return self.generator.choice(population, size=batch, replace=False)


def as_vec(values) -> Vec:
    return np.asarray(values, dtype=np.float64).reshape(-1)


def require_same_dim(a: Vec, b: Vec, what: str = "operands"):
    if a.shape != b.shape:
        raise InvalidDimensionError(f"{what} disagree in dimension: {a.shape} vs {b.shape}")


def check_finite(values, what: str = "value"):
    """Raise NumericsError if values contain NaN or Inf, else return them"""
    if not np.all(np.isfinite(values)):
        raise NumericsError(f"non-finite {what}")
    return values


def sample_unit_sphere(rng: RngStream, dim: int) -> Vec:
    """Uniform draw from the unit sphere via a normalised Gaussian"""
    if dim < 1:
        raise InvalidDimensionError(f"dim must be >= 1, got {dim}")
    while True:
        z = rng.normal(dim)
        norm = np.linalg.norm(z)
        if norm > 0.0:
            return z / norm


def sample_unit_ball(rng: RngStream, dim: int) -> Vec:
    """Uniform draw from the unit ball: sphere direction scaled by U^(1/dim)"""
    direction = sample_unit_sphere(rng, dim)
    return direction * rng.uniform() ** (1.0 / dim)


def project(point: Vec, spec: ConstraintSpec, anchor: Optional[Vec] = None) -> Vec:
    """Euclidean projection of point onto the set described by spec"""
    point = as_vec(point)
    if anchor is not None:
        anchor = as_vec(anchor)
        require_same_dim(point, anchor, "point and anchor")

    if spec.kind == ConstraintKind.UNCONSTRAINED:
        return point.copy()
    if spec.kind == ConstraintKind.ORTHANT:
        return np.maximum(point, 0.0)
    if spec.kind == ConstraintKind.BALL:
        if anchor is None:
            raise InvalidDimensionError("ball constraint needs an anchor")
        offset = point - anchor
        dist = np.linalg.norm(offset)
        if dist <= spec.radius:
            return point.copy()
        return anchor + offset * (spec.radius / dist)
    raise InvalidParameterError(f"unknown constraint kind {spec.kind}")


def is_feasible(point: Vec, spec: ConstraintSpec, anchor: Optional[Vec] = None, tol: float = 1e-9) -> bool:
    if spec.kind == ConstraintKind.UNCONSTRAINED:
        return True
    if spec.kind == ConstraintKind.ORTHANT:
        return bool(np.all(point >= -tol))
    return bool(np.linalg.norm(point - anchor) <= spec.radius + tol)


def dirichlet(rng: RngStream, alpha: float, m: int) -> Vec:
    """Symmetric Dir(alpha) draw on the (m-1)-simplex from normalised Gamma(alpha, 1) draws"""
    if not alpha > 0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha}")
    if m < 1:
        raise InvalidDimensionError(f"m must be >= 1, got {m}")
    if m == 1:
        return np.ones(1)
    while True:
        draws = rng.gamma(alpha, m)
        total = draws.sum()
        # tiny alpha can underflow every coordinate
        if total > 0.0:
            return draws / total
        logger.debug("Dirichlet draw underflowed (alpha=%g), redrawing", alpha)
