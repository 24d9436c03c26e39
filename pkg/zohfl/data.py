"""
Dataset ingestion (IDX, CSV), synthetic Gaussian blobs, and the test / server / Dirichlet
client partition.
"""

import csv
import io
import json
import logging
import os
import struct
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import (
    BadMagicError, CountMismatchError, EmptyDataError, IDXFormatError, InvalidParameterError,
    PartitionInfeasibleError, TruncatedFileError,
)
from .models import DatasetShard, FederatedData, PartitionPlan
from .numkit import RngStream, dirichlet

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
MAX_PARTITION_RETRIES = 100


def _read_idx(path: str, expected_magic: int) -> Tuple[Tuple[int, ...], bytes]:
    """Return (dims, payload) of a big-endian IDX file holding unsigned bytes"""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 4:
        raise TruncatedFileError("file shorter than the magic number", path, len(blob))
    (magic,) = struct.unpack(">I", blob[:4])
    if magic != expected_magic:
        raise BadMagicError(f"magic {magic:#010x}, expected {expected_magic:#010x}", path, 0)

    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise TruncatedFileError(f"header needs {header} bytes, file has {len(blob)}", path, len(blob))
    dims = struct.unpack(f">{ndim}I", blob[4:header])
    payload = int(np.prod(dims))
    if len(blob) < header + payload:
        raise TruncatedFileError(
            f"payload needs {payload} bytes after the header, found {len(blob) - header}",
            path, len(blob),
        )
    return dims, blob[header:header + payload]


def load_idx(images_path: str, labels_path: str, num_classes: int = 10, flatten: bool = True) -> DatasetShard:
    """Load an IDX image/label pair with pixels scaled to [0, 1]"""
    image_dims, pixels = _read_idx(images_path, IDX_IMAGE_MAGIC)
    label_dims, label_bytes = _read_idx(labels_path, IDX_LABEL_MAGIC)
    if image_dims[0] != label_dims[0]:
        raise CountMismatchError(
            f"{image_dims[0]} images but {label_dims[0]} labels", labels_path, 4
        )

    images = np.frombuffer(pixels, dtype=np.uint8).reshape(image_dims).astype(np.float64) / 255.0
    if flatten:
        images = images.reshape(image_dims[0], -1)
    elif images.ndim != 2:
        raise IDXFormatError("unflattened images cannot form a feature matrix", images_path)
    labels = np.frombuffer(label_bytes, dtype=np.uint8).astype(np.int64)
    logger.info("Loaded %d samples of dimension %d from %s", images.shape[0], images.shape[1], images_path)
    return DatasetShard(images, labels, num_classes)


def write_idx(path: str, array: np.ndarray, magic: int):
    """Write unsigned bytes as an IDX file (fixtures and exports)"""
    array = np.asarray(array, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(f">{array.ndim}I", *array.shape))
        f.write(array.tobytes())


def load_csv(path: str, num_classes: Optional[int] = None) -> DatasetShard:
    """Flat-vector CSV: every column but the last is a feature, the last is the label"""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if line_no == 1:
                    continue  # header
                raise InvalidParameterError(f"{path}:{line_no}: non-numeric value")
    if not rows:
        raise EmptyDataError(f"{path} holds no samples")
    table = np.asarray(rows, dtype=np.float64)
    labels = table[:, -1].astype(np.int64)
    return DatasetShard(table[:, :-1], labels, num_classes or int(labels.max()) + 1)


def _simplex_centers(num_classes: int, feature_dim: int, distance: float, rng: RngStream) -> np.ndarray:
    """Class centers with equal pairwise distance, randomly rotated into R^n"""
    basis = np.eye(num_classes) - 1.0 / num_classes
    u, s, _ = np.linalg.svd(basis)
    coords = u[:, :num_classes - 1] * s[:num_classes - 1]  # C x (C-1), pairwise distance sqrt(2)
    rotation, _ = np.linalg.qr(rng.normal((feature_dim, num_classes - 1)))
    return (coords @ rotation.T) * (distance / np.sqrt(2.0))


def synth_blobs(rng: RngStream, num_classes: int, feature_dim: int, per_class: int,
                spread: float = 1.0, offset: float = 0.0) -> DatasetShard:
    """Balanced isotropic Gaussian classes around well separated centers

    Centers sit on a regular simplex with pairwise distance max(4 * spread, 1), centered at
    the origin and then shifted by `offset` in every coordinate, the common component that
    nonnegative pixel intensities share. When C > n + 1 no simplex fits, so centers are
    random directions at the same radius.
    """
    if num_classes < 2 or feature_dim < 2:
        raise InvalidParameterError("synth_blobs needs at least 2 classes and 2 features")
    if per_class < 1 or spread < 0 or offset < 0:
        raise InvalidParameterError("per_class must be >= 1, spread and offset >= 0")

    distance = max(4.0 * spread, 1.0)
    if num_classes <= feature_dim + 1:
        centers = _simplex_centers(num_classes, feature_dim, distance, rng)
    else:
        logger.warning("%d classes do not fit a simplex in R^%d; using random centers",
                       num_classes, feature_dim)
        directions = rng.normal((num_classes, feature_dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        centers = directions * (distance / np.sqrt(2.0))

    labels = np.repeat(np.arange(num_classes), per_class)
    features = offset + centers[labels] + spread * rng.normal((labels.size, feature_dim))
    return DatasetShard(features, labels, num_classes)


def _route_to_clients(labels: np.ndarray, pool: np.ndarray, num_classes: int, alpha: float,
                      num_clients: int, rng: RngStream) -> List[List[int]]:
    owners: List[List[int]] = [[] for _ in range(num_clients)]
    for c in range(num_classes):
        members = pool[labels[pool] == c]
        if members.size == 0:
            continue
        members = members[rng.permutation(members.size)]
        counts = rng.multinomial(members.size, dirichlet(rng, alpha, num_clients))
        start = 0
        for client, k in enumerate(counts):
            owners[client].extend(int(i) for i in members[start:start + k])
            start += k
    return owners


def partition(shard: DatasetShard, alpha: float, num_clients: int, server_fraction: float,
              test_fraction: float, rng: RngStream) -> FederatedData:
    """Uniform test split, uniform server carve-out, then per-class Dir(alpha) routing"""
    if not alpha > 0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha}")
    if num_clients < 1:
        raise InvalidParameterError(f"need at least one client, got {num_clients}")
    if not 0 <= server_fraction < 1 or not 0 < test_fraction < 1:
        raise InvalidParameterError("need 0 <= server_fraction < 1 and 0 < test_fraction < 1")
    shard.require_nonempty("dataset")

    total = shard.size
    order = rng.permutation(total)
    n_test = max(1, int(round(test_fraction * total)))
    test_rows, train_rows = order[:n_test], order[n_test:]
    n_server = int(round(server_fraction * train_rows.size))
    server_rows, pool = train_rows[:n_server], np.sort(train_rows[n_server:])

    present = set(int(c) for c in np.unique(shard.labels))
    pool_classes = set(int(c) for c in np.unique(shard.labels[pool]))
    missing = sorted(present - pool_classes)
    if missing:
        raise PartitionInfeasibleError(f"class {missing[0]} has no samples left for clients after the split")
    if pool.size < num_clients:
        raise PartitionInfeasibleError(f"{pool.size} client samples cannot cover {num_clients} clients")

    for attempt in range(MAX_PARTITION_RETRIES + 1):
        owners = _route_to_clients(shard.labels, pool, shard.num_classes, alpha, num_clients, rng)
        if all(owners):
            break
        logger.warning("Dirichlet draw left a client empty (alpha=%g); redrawing (attempt %d)",
                       alpha, attempt + 1)
    else:
        raise PartitionInfeasibleError(
            f"no client allocation without empty clients after {MAX_PARTITION_RETRIES} retries"
        )

    assignment = np.empty(total, dtype=np.int64)
    assignment[test_rows] = PartitionPlan.TEST
    assignment[server_rows] = PartitionPlan.SERVER
    for client, rows in enumerate(owners):
        assignment[rows] = client

    plan = PartitionPlan(
        seed=rng.seed, alpha=alpha, num_clients=num_clients, server_fraction=server_fraction,
        test_fraction=test_fraction, assignment=assignment, retries=attempt,
    )
    return shards_from_plan(shard, plan)


def shards_from_plan(shard: DatasetShard, plan: PartitionPlan) -> FederatedData:
    """Rebuild every shard from a plan's owner tags"""
    def rows_of(tag: int) -> np.ndarray:
        return np.flatnonzero(plan.assignment == tag)

    return FederatedData(
        server=shard.subset(rows_of(PartitionPlan.SERVER)),
        clients=[shard.subset(rows_of(i)) for i in range(plan.num_clients)],
        test=shard.subset(rows_of(PartitionPlan.TEST)),
        plan=plan,
    )


def emit_partition_histogram(data: FederatedData) -> np.ndarray:
    """client x class sample counts"""
    return np.vstack([c.class_counts for c in data.clients])


def histogram_csv(counts: np.ndarray) -> str:
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(["client"] + [f"class_{c}" for c in range(counts.shape[1])])
    for client, row in enumerate(counts):
        writer.writerow([client] + [int(v) for v in row])
    return output.getvalue()


def save_partition(data: FederatedData, out_dir: str):
    """Write plan.json, histogram.csv and one .npz per shard"""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "plan.json"), "w", encoding="utf-8") as f:
        json.dump(data.plan.to_dict(), f, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, "histogram.csv"), "w", encoding="utf-8") as f:
        f.write(histogram_csv(emit_partition_histogram(data)))

    named = [("server", data.server), ("test", data.test)]
    named += [(f"client_{i:03d}", c) for i, c in enumerate(data.clients)]
    for name, part in named:
        np.savez(os.path.join(out_dir, f"{name}.npz"), features=part.features,
                 labels=part.labels, indices=part.indices)


def load_plan(path: str) -> PartitionPlan:
    with open(path, "r", encoding="utf-8") as f:
        return PartitionPlan.from_dict(json.load(f))
