"""
Run configuration: JSON parsing with field-path diagnostics, validation, serialization,
named presets and sweep-grid expansion.
"""

import dataclasses
import json
import logging
import os
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .exceptions import InvalidConfigurationError
from .models import BaselineSettings, ConstraintKind, DatasetConfig, RunConfig

logger = logging.getLogger(__name__)

OUT_DIR_ENV = "ZOHFL_OUT_DIR"

METHOD_NAMES = ("zohfl", "fedavg", "fedprox", "scaffold")
DATASET_SOURCES = ("synth", "idx", "csv")
WEIGHTINGS = ("data", "uniform")
AGGREGATIONS = ("participants", "all")
STRAGGLER_MODES = ("sample", "zero_budget")

# (alpha, beta) pairs from homogeneous to extreme heterogeneity
HETEROGENEITY_LEVELS: Tuple[Tuple[float, float], ...] = ((1000.0, 0.9), (1.0, 0.5), (0.1, 0.1))

_NESTED = {"dataset": DatasetConfig, "baseline": BaselineSettings}
_LISTABLE = ("tau", "radius")


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


def _coerce(value: Any, default: Any, path: str) -> Any:
    """Check a JSON value against the type of the field's default"""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise InvalidConfigurationError(f"expected true/false, got {value!r}", path)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidConfigurationError(f"expected an integer, got {value!r}", path)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidConfigurationError(f"expected a number, got {value!r}", path)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise InvalidConfigurationError(f"expected a string, got {value!r}", path)
        return value
    raise InvalidConfigurationError(f"unsupported value {value!r}", path)


def _coerce_listable(value: Any, path: str):
    if isinstance(value, list):
        return [_coerce(v, 0.0, f"{path}[{k}]") for k, v in enumerate(value)]
    return _coerce(value, 0.0, path)


def _build(cls, data: Any, prefix: str):
    if not isinstance(data, dict):
        raise InvalidConfigurationError(f"expected an object, got {type(data).__name__}", prefix)
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    for key in sorted(data):
        if key not in known:
            raise InvalidConfigurationError("unknown key", _join(prefix, key))

    values = {}
    for key, raw in data.items():
        path = _join(prefix, key)
        if key in _NESTED and cls is RunConfig:
            values[key] = _build(_NESTED[key], raw, path)
        elif key in _LISTABLE and cls is RunConfig:
            values[key] = _coerce_listable(raw, path)
        else:
            values[key] = _coerce(raw, getattr(defaults, key), path)
    return cls(**values)


def parse_config(data: Dict[str, Any]) -> RunConfig:
    """Build and validate a RunConfig from a decoded JSON object"""
    config = _build(RunConfig, data, "")
    validate_config(config)
    return config


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise InvalidConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise InvalidConfigurationError(f"{path} is not valid JSON: {e}")
    return parse_config(data)


def config_to_dict(config: RunConfig) -> Dict[str, Any]:
    return dataclasses.asdict(config)


def dump_config(config: RunConfig) -> str:
    """Canonical JSON text; parse followed by dump reproduces it byte for byte"""
    return json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n"


def _require(condition: bool, message: str, path: str):
    if not condition:
        raise InvalidConfigurationError(message, path)


def _validate_per_client(values, num_clients: int, name: str, minimum: float):
    if isinstance(values, list):
        _require(len(values) == num_clients,
                 f"needs one entry per client ({num_clients}), got {len(values)}", name)
        for k, v in enumerate(values):
            _require(v >= minimum, f"must be >= {minimum:g}, got {v}", f"{name}[{k}]")
    else:
        _require(values >= minimum, f"must be >= {minimum:g}, got {values}", name)


def _validate_dataset(d: DatasetConfig):
    _require(d.source in DATASET_SOURCES, f"must be one of {DATASET_SOURCES}", "dataset.source")
    _require(d.num_classes >= 2, "needs at least 2 classes", "dataset.num_classes")
    _require(d.feature_dim >= 2, "needs at least 2 features", "dataset.feature_dim")
    _require(d.per_class >= 1, "must be >= 1", "dataset.per_class")
    _require(d.spread >= 0, "must be nonnegative", "dataset.spread")
    _require(d.offset >= 0, "must be nonnegative", "dataset.offset")
    _require(d.max_samples >= 0, "must be nonnegative", "dataset.max_samples")
    _require(0 < d.server_fraction < 1, "must lie in (0, 1)", "dataset.server_fraction")
    _require(0 < d.test_fraction < 1, "must lie in (0, 1)", "dataset.test_fraction")
    _require(d.server_fraction + d.test_fraction < 1, "server and test shares leave no client data",
             "dataset.server_fraction")
    if d.source == "idx":
        _require(bool(d.images_path), "required for idx datasets", "dataset.images_path")
        _require(bool(d.labels_path), "required for idx datasets", "dataset.labels_path")
    if d.source == "csv":
        _require(bool(d.csv_path), "required for csv datasets", "dataset.csv_path")


def validate_config(config: RunConfig):
    """Raise InvalidConfigurationError naming the first offending field"""
    c = config
    _require(bool(c.run_id) and "/" not in c.run_id and "\\" not in c.run_id,
             "must be a nonempty name without path separators", "run_id")
    _require(c.method in METHOD_NAMES, f"must be one of {METHOD_NAMES}", "method")
    _require(c.num_clients >= 1, "needs at least one client", "num_clients")
    _require(c.rounds >= 0, "must be nonnegative", "rounds")

    _require(c.eta > 0, "must be positive", "eta")
    _require(c.step_constant > 0, "must be positive", "step_constant")
    if c.asymptotic:
        _require(0.5 < c.step_exponent <= 1, "asymptotic schedules need an exponent in (0.5, 1]",
                 "step_exponent")
    else:
        _require(c.step_exponent > 0, "must be positive", "step_exponent")
    _require(c.server_batch >= 0, "must be nonnegative (0 means full batch)", "server_batch")
    _require(c.client_batch >= 1, "must be >= 1", "client_batch")

    _validate_per_client(c.tau, c.num_clients, "tau", 1.0 if c.theory_budgets else 0.0)
    _require(c.local_gamma0 > 0, "must be positive", "local_gamma0")
    _require(c.local_Gamma > 0, "must be positive", "local_Gamma")

    _require(c.lam >= 0, "must be nonnegative", "lam")
    _require(c.mu > 0, "must be positive", "mu")
    _require(c.penalty_weighting in WEIGHTINGS, f"must be one of {WEIGHTINGS}", "penalty_weighting")
    kinds = tuple(k.value for k in ConstraintKind)
    _require(c.constraint in kinds, f"must be one of {kinds}", "constraint")
    if c.constraint == ConstraintKind.BALL.value:
        _validate_per_client(c.radius, c.num_clients, "radius", 0.0)
        radii = c.radius if isinstance(c.radius, list) else [c.radius]
        _require(all(r > 0 for r in radii), "ball radii must be positive", "radius")

    _require(c.alpha > 0, "must be positive", "alpha")
    _require(0 < c.beta <= 1, "must lie in (0, 1]", "beta")
    _require(c.aggregation in AGGREGATIONS, f"must be one of {AGGREGATIONS}", "aggregation")
    _require(c.straggler_mode in STRAGGLER_MODES, f"must be one of {STRAGGLER_MODES}", "straggler_mode")

    _require(c.data_seed >= 0, "must be nonnegative", "data_seed")
    _require(c.algo_seed >= 0, "must be nonnegative", "algo_seed")
    _require(c.eval_every >= 0, "must be nonnegative", "eval_every")
    _require(c.eval_budget >= 0, "must be nonnegative", "eval_budget")
    _require(c.log_every >= 0, "must be nonnegative", "log_every")
    _require(c.max_workers >= 1, "must be >= 1", "max_workers")

    _validate_dataset(c.dataset)

    b = c.baseline
    _require(b.local_lr > 0, "must be positive", "baseline.local_lr")
    _require(b.local_steps >= 0, "must be nonnegative", "baseline.local_steps")
    _require(b.server_lr > 0, "must be positive", "baseline.server_lr")
    _require(b.prox_mu >= 0, "must be nonnegative", "baseline.prox_mu")
    if c.method == "fedprox":
        _require(b.prox_mu > 0, "fedprox needs a positive proximal coefficient", "baseline.prox_mu")


def with_seed(config: RunConfig, seed: int) -> RunConfig:
    """Copy of config with both data and algorithm seeds replaced"""
    return dataclasses.replace(config, data_seed=seed, algo_seed=seed)


def grid_run_id(method: str, alpha: float, beta: float, tau: float) -> str:
    return f"{method}-a{alpha:g}-b{beta:g}-t{tau:g}"


def expand_grid(base: RunConfig, levels: Iterable[Tuple[float, float]], taus: Sequence[float],
                methods: Sequence[str]) -> List[RunConfig]:
    """Cartesian product over (alpha, beta) levels, tau values and methods"""
    configs = []
    for alpha, beta in levels:
        for tau in taus:
            for method in methods:
                configs.append(dataclasses.replace(
                    base, method=method, alpha=alpha, beta=beta, tau=float(tau),
                    run_id=grid_run_id(method, alpha, beta, tau),
                    dataset=dataclasses.replace(base.dataset),
                    baseline=dataclasses.replace(base.baseline),
                ))
    return configs


def _desk_base(offset: float = 0.0, **overrides) -> RunConfig:
    """Synthetic 10-class, 20-feature problem and the settings every desk preset shares

    local_gamma0 * mu = 2 > 1 for the client solver.
    """
    dataset = DatasetConfig(source="synth", num_classes=10, feature_dim=20, per_class=400, spread=1.0,
                            offset=offset)
    base = RunConfig(dataset=dataset, mu=20.0, step_constant=0.1, server_batch=64)
    return dataclasses.replace(base, **overrides)


def _quickstart() -> List[RunConfig]:
    return [_desk_base(run_id="quickstart", rounds=50, tau=5.0, eval_every=10, eval_budget=100,
                       log_every=10)]


def _tau_sweep() -> List[RunConfig]:
    # independent +/- streams: the estimator noise shrinks with the local budget
    base = _desk_base(rounds=200, lam=10.0, eval_every=20, eval_budget=200)
    return expand_grid(base, HETEROGENEITY_LEVELS, (5.0, 20.0, 50.0), ("zohfl",))


def _heterogeneity() -> List[RunConfig]:
    # shared feature offset: a model fit to a few classes claims every input
    base = _desk_base(offset=1.0, rounds=300, tau=20.0, shared_stream=True, eval_every=50,
                      eval_budget=200)
    return expand_grid(base, HETEROGENEITY_LEVELS, (20.0,), METHOD_NAMES)


def _heterogeneity_idx() -> List[RunConfig]:
    dataset = DatasetConfig(
        source="idx", num_classes=10,
        images_path=os.path.join("data", "train-images-idx3-ubyte"),
        labels_path=os.path.join("data", "train-labels-idx1-ubyte"),
    )
    base = RunConfig(rounds=500, tau=20.0, mu=20.0, step_constant=0.1, server_batch=64, shared_stream=True,
                     eval_every=50, eval_budget=500, dataset=dataset)
    return expand_grid(base, HETEROGENEITY_LEVELS, (20.0,), METHOD_NAMES)


def _convergence() -> List[RunConfig]:
    return [_desk_base(run_id="convergence", rounds=2000, tau=20.0, beta=1.0, step_constant=1.0,
                       server_batch=0, client_batch=8, shared_stream=True, eval_every=200,
                       eval_budget=200, log_every=200)]


def _asymptotic_schedule() -> List[RunConfig]:
    return [_desk_base(run_id="asymptotic", rounds=10000, tau=5.0, asymptotic=True,
                       step_exponent=0.75, eval_every=1000, eval_budget=200, log_every=1000)]


PRESETS: Dict[str, Callable[[], List[RunConfig]]] = {
    "quickstart": _quickstart,
    "tau-sweep": _tau_sweep,
    "heterogeneity": _heterogeneity,
    "heterogeneity-idx": _heterogeneity_idx,
    "convergence": _convergence,
    "asymptotic": _asymptotic_schedule,
}
# result-table names
PRESET_ALIASES: Dict[str, str] = {
    "table1-desk": "heterogeneity",
    "table1-full": "heterogeneity-idx",
}
PRESETS.update({alias: PRESETS[target] for alias, target in PRESET_ALIASES.items()})


def preset_configs(name: str, seed: Optional[int] = None) -> List[RunConfig]:
    """Expand a named preset, optionally overriding both seeds"""
    if name not in PRESETS:
        raise InvalidConfigurationError(f"unknown preset '{name}'; choose from {sorted(PRESETS)}", "preset")
    configs = PRESETS[name]()
    if seed is not None:
        configs = [with_seed(c, seed) for c in configs]
    for config in configs:
        validate_config(config)
    return configs


def resolve_out_dir(cli_value: Optional[str], default: str = "runs") -> str:
    """--out wins, then ZOHFL_OUT_DIR, then the default"""
    if cli_value:
        return cli_value
    return os.environ.get(OUT_DIR_ENV) or default
