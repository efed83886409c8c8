"""Dirichlet non-i.i.d. partitioning into equally sized client shards."""

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import ConfigurationError
from .nn import class_proportions


@dataclass
class PartitionConfig:
    alpha: float
    num_clients: int
    seed: int
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigurationError(f"alpha must be positive, got {self.alpha}")
        if self.num_clients < 1:
            raise ConfigurationError(f"num_clients must be >= 1, got {self.num_clients}")
        if not 0 <= self.val_fraction < 1:
            raise ConfigurationError(f"val_fraction must be in [0, 1), got {self.val_fraction}")


@dataclass
class DatasetShard:
    client_id: int
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    beta: np.ndarray                 # class proportions of the train split
    train_idx: np.ndarray = field(repr=False)  # indices into the source dataset
    val_idx: np.ndarray = field(repr=False)

    @property
    def n_train(self):
        return self.train_y.shape[0]

    @property
    def n_total(self):
        return self.train_y.shape[0] + self.val_y.shape[0]


def _client_class_counts(q, target, remaining):
    """Counts per class for one client, honoring drawn proportions q.

    Initial request is round(q_c * target) per class, capped by pool stock.
    Any deficit is re-requested proportionally over non-empty pools; final
    off-by-one corrections come from the largest remaining pool (lowest class
    index on ties).
    """
    num_classes = q.size
    take = np.zeros(num_classes, dtype=np.int64)
    got = 0
    want = np.rint(q * target).astype(np.int64)
    for c in range(num_classes):
        t = min(want[c], remaining[c], target - got)
        take[c] = t
        got += t
    while got < target:
        open_mask = remaining - take > 0
        weights = np.where(open_mask, q, 0.0)
        total = weights.sum()
        if total <= 0:
            break
        req = np.rint(weights / total * (target - got)).astype(np.int64)
        progress = 0
        for c in range(num_classes):
            t = min(req[c], remaining[c] - take[c], target - got)
            take[c] += t
            got += t
            progress += t
        if progress == 0:
            break
    while got < target:
        c = int(np.argmax(remaining - take))
        if remaining[c] - take[c] <= 0:
            raise ConfigurationError("class pools exhausted before shard filled")
        take[c] += 1
        got += 1
    return take


def dirichlet_partition(dataset, cfg):
    """Split a dataset into `num_clients` equally sized non-i.i.d. shards.

    Per-client class proportions are drawn from Dir(alpha); each client gets
    exactly floor(N / K) samples without replacement (the remainder is
    discarded). Deterministic in (dataset, cfg): each client has its own
    seed stream, so the result does not depend on evaluation order.
    """
    n = dataset.num_samples
    k = cfg.num_clients
    if k > n:
        raise ConfigurationError(f"cannot split {n} samples across {k} clients")
    per_client = n // k
    num_classes = dataset.num_classes

    pool_rng = rngmod.stream(cfg.seed, rngmod.DOMAIN_PARTITION, k)
    pools = []
    for c in range(num_classes):
        idx = np.flatnonzero(dataset.labels == c)
        pools.append(pool_rng.permutation(idx))
    cursor = np.zeros(num_classes, dtype=np.int64)
    remaining = np.array([p.size for p in pools], dtype=np.int64)

    val_n = round(cfg.val_fraction * per_client)
    shards = []
    for cid in range(k):
        crng = rngmod.stream(cfg.seed, rngmod.DOMAIN_PARTITION, k, cid)
        q = crng.dirichlet(np.full(num_classes, cfg.alpha))
        take = _client_class_counts(q, per_client, remaining)
        chosen = []
        for c in range(num_classes):
            chosen.append(pools[c][cursor[c]:cursor[c] + take[c]])
            cursor[c] += take[c]
        remaining -= take
        idx = crng.permutation(np.concatenate(chosen))
        val_idx, train_idx = idx[:val_n], idx[val_n:]
        shards.append(DatasetShard(
            client_id=cid,
            train_x=dataset.features[train_idx],
            train_y=dataset.labels[train_idx],
            val_x=dataset.features[val_idx],
            val_y=dataset.labels[val_idx],
            beta=class_proportions(dataset.labels[train_idx], num_classes),
            train_idx=train_idx,
            val_idx=val_idx,
        ))
    return shards


def partition_hash(shards):
    """Content hash over shard index assignments, for cross-run comparison."""
    h = hashlib.sha256()
    for s in shards:
        h.update(np.ascontiguousarray(s.train_idx, dtype="<i8").tobytes())
        h.update(b"|")
        h.update(np.ascontiguousarray(s.val_idx, dtype="<i8").tobytes())
        h.update(b";")
    return h.hexdigest()


def write_manifest(shards, num_classes, path):
    """Per-client class-count manifest CSV (client_id, class, count)."""
    with open(path, "w", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["client_id", "class", "count"])
        for s in shards:
            counts = np.bincount(np.concatenate([s.train_y, s.val_y]),
                                 minlength=num_classes)
            for c in range(num_classes):
                writer.writerow([s.client_id, c, int(counts[c])])
