"""Synthetic data, non-IID partitioning, accuracy metrics and cost accounting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod
from .model import ParamStore, predict


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features must be (n, d) with one label per row")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)

    def label_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass
class PartitionPlan:
    shards: list[np.ndarray]

    def __len__(self):
        return len(self.shards)

    def sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.shards])

    def validate(self, n_examples: int) -> None:
        if any(len(s) == 0 for s in self.shards):
            raise ValueError("partition has an empty shard")
        allidx = np.concatenate(self.shards)
        if allidx.min() < 0 or allidx.max() >= n_examples:
            raise ValueError("partition indexes outside the dataset")
        if np.unique(allidx).size != allidx.size:
            raise ValueError("partition shards overlap")


def class_means(num_classes: int, dim: int, separation: float) -> np.ndarray:
    """Deterministic class centres whose nearest pairwise distance is ``separation``.

    Scaled one-hot vectors when there are at most ``dim`` classes, otherwise
    vertices of the hypercube ``{0, separation}^dim`` in binary order.
    """
    if num_classes <= dim:
        return np.eye(num_classes, dim) * (separation / np.sqrt(2.0))
    if num_classes > 2**dim:
        raise ValueError(f"cannot place {num_classes} distinct classes in {dim} dimensions")
    bits = (np.arange(num_classes)[:, None] >> np.arange(dim)[None, :]) & 1
    return bits.astype(np.float64) * separation


def gen_synthetic(
    num_classes: int,
    dim: int,
    per_class: int,
    spread: float,
    seed: int,
    separation: float = 10.0,
) -> Dataset:
    """Balanced isotropic Gaussian mixture, one component per class."""
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if spread < 0:
        raise ValueError("spread must be >= 0")
    gen = rng_mod.stream(seed, rng_mod.DATA)
    means = class_means(num_classes, dim, separation)
    labels = np.repeat(np.arange(num_classes), per_class)
    noise = gen.standard_normal((labels.size, dim)) * spread
    order = gen.permutation(labels.size)
    return Dataset((means[labels] + noise)[order], labels[order], num_classes)


def partition_by_labels(ds: Dataset, n_clients: int, labels_per_client: int, seed: int) -> PartitionPlan:
    """Give each client examples from exactly ``labels_per_client`` classes.

    Client ``n`` holds classes ``perm[(n*L + t) mod C]`` for ``t < L`` under
    a seeded class permutation, so every class is held by ``floor`` or
    ``ceil`` of ``N*L/C`` clients. Each class's examples are shuffled and
    split as evenly as possible among its holders.
    """
    C, L = ds.num_classes, labels_per_client
    if not 1 <= L <= C:
        raise ValueError(f"labels_per_client must lie in [1, {C}], got {L}")
    if n_clients < 1:
        raise ValueError("n_clients must be >= 1")
    gen = rng_mod.stream(seed, rng_mod.PARTITION)
    perm = gen.permutation(C)
    holders: list[list[int]] = [[] for _ in range(C)]
    for n in range(n_clients):
        for t in range(L):
            holders[perm[(n * L + t) % C]].append(n)

    parts: list[list[np.ndarray]] = [[] for _ in range(n_clients)]
    for c in range(C):
        if not holders[c]:
            continue
        idx = np.flatnonzero(ds.labels == c)
        if idx.size < len(holders[c]):
            raise ValueError(f"class {c} has {idx.size} examples for {len(holders[c])} clients")
        idx = gen.permutation(idx)
        for n, chunk in zip(holders[c], np.array_split(idx, len(holders[c]))):
            parts[n].append(chunk)
    plan = PartitionPlan([np.sort(np.concatenate(p)) for p in parts])
    plan.validate(len(ds))
    return plan


def partition_dirichlet(ds: Dataset, n_clients: int, alpha: float, seed: int, max_tries: int = 100) -> PartitionPlan:
    """Split every class across clients in Dirichlet(alpha) proportions.

    Draws that leave any client empty are discarded and redrawn.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if n_clients > len(ds):
        raise ValueError("more clients than examples")
    gen = rng_mod.stream(seed, rng_mod.PARTITION)
    for _ in range(max_tries):
        parts: list[list[np.ndarray]] = [[] for _ in range(n_clients)]
        for c in range(ds.num_classes):
            idx = gen.permutation(np.flatnonzero(ds.labels == c))
            if idx.size == 0:
                continue
            props = gen.dirichlet(np.full(n_clients, alpha))
            cuts = np.round(np.cumsum(props)[:-1] * idx.size).astype(np.int64)
            for n, chunk in enumerate(np.split(idx, cuts)):
                parts[n].append(chunk)
        shards = [np.sort(np.concatenate(p)) if p else np.array([], dtype=np.int64) for p in parts]
        if all(len(s) for s in shards):
            return PartitionPlan(shards)
    raise RuntimeError(f"could not draw a partition without empty shards in {max_tries} tries")


def global_accuracy(params: ParamStore, test: Dataset) -> float:
    if len(test) == 0:
        raise ValueError("empty test set")
    return float(np.mean(predict(params, test.features) == test.labels))


@dataclass
class LocalAccuracy:
    per_client: np.ndarray
    histogram: np.ndarray
    bin_edges: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.per_client.mean())

    @property
    def min(self) -> float:
        return float(self.per_client.min())

    @property
    def max(self) -> float:
        return float(self.per_client.max())


def local_accuracy(params: ParamStore, plan: PartitionPlan, ds: Dataset, bins: int = 10) -> LocalAccuracy:
    """Accuracy of the global model on every client's shard."""
    correct = predict(params, ds.features) == ds.labels
    accs = []
    for n, shard in enumerate(plan.shards):
        if len(shard) == 0:
            raise ValueError(f"client {n} has an empty shard")
        accs.append(correct[shard].mean())
    accs = np.array(accs)
    hist, edges = np.histogram(accs, bins=bins, range=(0.0, 1.0))
    return LocalAccuracy(accs, hist, edges)


def majority_baseline(ds: Dataset) -> float:
    return float(ds.label_histogram().max() / len(ds))


# --- cost accounting -------------------------------------------------------

BYTES_PER_VALUE = 4


def payload_header_bytes(n_connections: int) -> int:
    """Snapshot header: magic, layer count, then rows/cols per connection."""
    return 4 + 4 + 8 * n_connections


def payload_bytes(num_params: int, n_connections: int) -> int:
    return num_params * BYTES_PER_VALUE + payload_header_bytes(n_connections)


@dataclass
class ClientCost:
    client_id: int
    capacity: float
    params: int
    macs: int
    payload: int


@dataclass
class RunTrace:
    rounds: list[list[ClientCost]] = field(default_factory=list)


@dataclass
class CostReport:
    avg_params: float
    avg_macs: float
    avg_payload_bytes: float
    rounds: int
    client_rounds: int

    def as_dict(self) -> dict:
        return {
            "avg_params": self.avg_params,
            "avg_macs": self.avg_macs,
            "avg_payload_bytes": self.avg_payload_bytes,
            "avg_payload_mb": self.avg_payload_bytes / 2**20,
            "rounds": self.rounds,
            "client_rounds": self.client_rounds,
        }


def cost_report(trace: RunTrace) -> CostReport:
    """Averages over every (round, cohort member) pair in the trace."""
    entries = [c for r in trace.rounds for c in r]
    if not entries:
        raise ValueError("empty run trace")
    return CostReport(
        avg_params=float(np.mean([c.params for c in entries])),
        avg_macs=float(np.mean([c.macs for c in entries])),
        avg_payload_bytes=float(np.mean([c.payload for c in entries])),
        rounds=len(trace.rounds),
        client_rounds=len(entries),
    )
