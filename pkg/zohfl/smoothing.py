"""
Randomized spherical smoothing: zeroth-order gradient terms, Monte Carlo estimates of the
smoothed function and its gradient, and closed forms for smoothed quadratics.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Tuple

import numpy as np

from .exceptions import InvalidDimensionError, InvalidParameterError
from .models import MCEstimate, SmoothingParams, Vec
from .numkit import RngStream, as_vec, check_finite, derive_stream_id, sample_unit_ball, sample_unit_sphere

logger = logging.getLogger(__name__)

ScalarFunction = Callable[[Vec], float]


class RunningStats:
    """Welford accumulator for scalar or vector samples"""

    def __init__(self):
        self.count = 0
        self.mean = None
        self._m2 = None

    def push(self, sample):
        sample = np.asarray(sample, dtype=np.float64)
        self.count += 1
        if self.mean is None:
            self.mean = sample.copy()
            self._m2 = np.zeros_like(sample)
            return
        delta = sample - self.mean
        self.mean = self.mean + delta / self.count
        self._m2 = self._m2 + delta * (sample - self.mean)

    def merge(self, other: "RunningStats") -> "RunningStats":
        """Combine two accumulators (Chan et al. pairwise update)"""
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self._m2 = other.count, other.mean.copy(), other._m2.copy()
            return self
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.count / total)
        self._m2 = self._m2 + other._m2 + delta ** 2 * (self.count * other.count / total)
        self.count = total
        return self

    @property
    def variance(self):
        if self.count < 2:
            return np.zeros_like(self.mean)
        return self._m2 / (self.count - 1)

    @property
    def stderr(self):
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.variance / self.count)

    def estimate(self) -> MCEstimate:
        mean, se = self.mean, self.stderr
        if np.ndim(mean) == 0:
            return MCEstimate(float(mean), float(se), self.count)
        return MCEstimate(mean, se, self.count)


def _require_samples(samples: int):
    if samples < 1:
        raise InvalidParameterError(f"samples must be >= 1, got {samples}")


def zo_term(f_plus: float, f_minus: float, v: Vec, params: SmoothingParams) -> Vec:
    """Central-difference zeroth-order term (dim / 2 eta) (f_plus - f_minus) v"""
    if not params.eta > 0:
        raise InvalidParameterError(f"eta must be positive, got {params.eta}")
    v = as_vec(v)
    if v.size != params.dim:
        raise InvalidDimensionError(f"direction has dim {v.size}, expected {params.dim}")
    check_finite([f_plus, f_minus], "function values")
    return (params.dim / (2.0 * params.eta)) * (f_plus - f_minus) * v


def one_point_term(f_value: float, v: Vec, params: SmoothingParams) -> Vec:
    """Single-evaluation term (dim / eta) f(x + eta v) v; same mean as zo_term"""
    return (params.dim / params.eta) * f_value * as_vec(v)


def smoothed_value_mc(f: ScalarFunction, x: Vec, params: SmoothingParams,
                      rng: RngStream, samples: int) -> MCEstimate:
    """Monte Carlo estimate of E_u[f(x + eta u)], u uniform on the unit ball"""
    _require_samples(samples)
    x = as_vec(x)
    stats = RunningStats()
    for _ in range(samples):
        stats.push(f(x + params.eta * sample_unit_ball(rng, params.dim)))
    return stats.estimate()


def _grad_stats(f: ScalarFunction, x: Vec, params: SmoothingParams, rng: RngStream,
                samples: int, one_point: bool = False) -> RunningStats:
    stats = RunningStats()
    for _ in range(samples):
        v = sample_unit_sphere(rng, params.dim)
        if one_point:
            stats.push(one_point_term(f(x + params.eta * v), v, params))
        else:
            stats.push(zo_term(f(x + params.eta * v), f(x - params.eta * v), v, params))
    return stats


def smoothed_grad_mc(f: ScalarFunction, x: Vec, params: SmoothingParams,
                     rng: RngStream, samples: int, one_point: bool = False) -> MCEstimate:
    """Monte Carlo estimate of the smoothed gradient from fresh sphere directions"""
    _require_samples(samples)
    return _grad_stats(f, as_vec(x), params, rng, samples, one_point).estimate()


def smoothed_grad_difference_mc(f: ScalarFunction, x: Vec, y: Vec, params: SmoothingParams,
                               rng: RngStream, samples: int) -> MCEstimate:
    """Estimate of grad f_eta(x) - grad f_eta(y) with one direction per sample shared by both points

    Sharing directions keeps the variance proportional to ||x - y|| for Lipschitz f.
    """
    _require_samples(samples)
    x, y = as_vec(x), as_vec(y)
    if x.shape != y.shape:
        raise InvalidDimensionError(f"points have shapes {x.shape} and {y.shape}")
    eta = params.eta
    stats = RunningStats()
    for _ in range(samples):
        v = sample_unit_sphere(rng, params.dim)
        at_x = zo_term(f(x + eta * v), f(x - eta * v), v, params)
        at_y = zo_term(f(y + eta * v), f(y - eta * v), v, params)
        stats.push(at_x - at_y)
    return stats.estimate()


def smoothed_grad_mc_sharded(f: ScalarFunction, x: Vec, params: SmoothingParams, seed: int,
                             samples: int, shards: int = 4, max_workers: int = 4) -> MCEstimate:
    """smoothed_grad_mc split over shards with their own streams, merged in shard order"""
    _require_samples(samples)
    if shards < 1:
        raise InvalidParameterError(f"shards must be >= 1, got {shards}")
    x = as_vec(x)
    sizes = [samples // shards + (1 if k < samples % shards else 0) for k in range(shards)]
    streams = [RngStream(seed, derive_stream_id("mc-shard", k)) for k in range(shards)]

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [
            executor.submit(_grad_stats, f, x, params, streams[k], sizes[k])
            for k in range(shards) if sizes[k] > 0
        ]
        parts: List[RunningStats] = [fut.result() for fut in futures]

    total = RunningStats()
    for part in parts:
        total.merge(part)
    return total.estimate()


def smoothed_quadratic_exact(A: np.ndarray, b: Vec, x: Vec, params: SmoothingParams) -> Tuple[float, Vec]:
    """Exact ball-smoothed value and gradient of 1/2 x'Ax + b'x"""
    A = np.asarray(A, dtype=np.float64)
    b, x = as_vec(b), as_vec(x)
    value = 0.5 * float(x @ A @ x) + float(b @ x)
    value += params.eta ** 2 * float(np.trace(A)) / (2.0 * (params.dim + 2))
    return value, A @ x + b
