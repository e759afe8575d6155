"""Server loop for partial-training federated learning.

One round samples a cohort, extracts a sub-model per cohort member with the
configured schedule, trains it locally, and folds the results back with
selective averaging. Every random choice comes from a stream derived from
the master seed, so results do not depend on how client work is scheduled.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from .aggregation import AggregationReport, ClientUpdate, aggregate
from .config import ConfigError, ExperimentConfig, MetricsRecord
from .data import (
    ClientCost,
    Dataset,
    PartitionPlan,
    RunTrace,
    gen_synthetic,
    global_accuracy,
    local_accuracy,
    partition_by_labels,
    partition_dirichlet,
    payload_bytes,
)
from .extraction import SubModel, extract_submodel, index_sets
from .model import Batch, ModelSpec, OptimizerState, ParamStore, init_params, loss_and_grad, sgd_step

log = logging.getLogger(__name__)


@dataclass
class ClientProfile:
    client_id: int
    capacity: float
    shard: np.ndarray

    @property
    def sample_count(self) -> int:
        return len(self.shard)


@dataclass
class Schedule:
    rounds: int
    lr: float
    milestones: tuple[int, ...] = ()
    decay: float = 0.1
    local_epochs: int = 1
    batch_size: int = 10
    momentum: float = 0.0
    weight_decay: float = 0.0

    def lr_at(self, j: int) -> float:
        """Learning rate for round ``j``: decayed once after each milestone round."""
        k = sum(1 for m in self.milestones if m < j)
        return self.lr * self.decay**k

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "Schedule":
        return cls(
            rounds=cfg.rounds,
            lr=cfg.lr,
            milestones=tuple(cfg.milestones),
            decay=cfg.decay,
            local_epochs=cfg.local_epochs,
            batch_size=cfg.batch_size,
            momentum=cfg.momentum,
            weight_decay=cfg.weight_decay,
        )


def assign_capacities(n_clients: int, dist, seed: int) -> np.ndarray:
    """Largest-remainder apportionment of ``n_clients`` over ``dist``, then a seeded shuffle."""
    if not dist:
        raise ValueError("empty capacity distribution")
    betas = np.array([b for b, _ in dist], dtype=np.float64)
    probs = np.array([p for _, p in dist], dtype=np.float64)
    if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
        raise ValueError("capacity probabilities must be >= 0 and sum to 1")
    quotas = probs * n_clients
    counts = np.floor(quotas + 1e-9).astype(np.int64)
    remainder = n_clients - counts.sum()
    if remainder > 0:
        # stable sort keeps listed order on ties
        order = np.argsort(-(quotas - counts), kind="stable")
        counts[order[:remainder]] += 1
    assigned = np.repeat(betas, counts)
    return rng_mod.stream(seed, rng_mod.CAPACITY).permutation(assigned)


def sample_cohort(n_clients: int, size: int, j: int, seed: int) -> np.ndarray:
    if not 1 <= size <= n_clients:
        raise ValueError(f"cohort size {size} must lie in [1, {n_clients}]")
    gen = rng_mod.stream(seed, rng_mod.COHORT, j)
    return np.sort(gen.choice(n_clients, size=size, replace=False))


def client_stream(seed: int, client_id: int, j: int) -> np.random.Generator:
    return rng_mod.stream(seed, rng_mod.CLIENT, client_id, j)


def client_step(sub: SubModel, shard: Dataset, schedule: Schedule, gen: np.random.Generator, lr: float | None = None):
    """Local mini-batch SGD on ``shard``. Returns ``(trained sub-model, mean batch loss)``.

    Optimizer state starts fresh; the input sub-model is not modified.
    """
    n = len(shard)
    if n == 0:
        raise ValueError("empty shard")
    opt = OptimizerState(
        learning_rate=schedule.lr if lr is None else lr,
        momentum=schedule.momentum,
        weight_decay=schedule.weight_decay,
    )
    params = sub.params.copy()
    losses = []
    for _ in range(schedule.local_epochs):
        order = gen.permutation(n)
        for start in range(0, n, schedule.batch_size):
            idx = order[start : start + schedule.batch_size]
            value, grads = loss_and_grad(params, Batch(shard.features[idx], shard.labels[idx]))
            params = sgd_step(params, grads, opt)
            losses.append(value)
    return SubModel(params, [s.copy() for s in sub.index_maps], sub.capacity), float(np.mean(losses))


@dataclass
class ServerState:
    params: ParamStore
    profiles: list[ClientProfile]
    schedule: Schedule
    train: Dataset
    scheme: str = "rolling"
    overlap: float = 1.0
    weighting: str = "none"
    cohort_size: int = 10
    master_seed: int = 0
    workers: int = 1


@dataclass
class RoundResult:
    params: ParamStore
    lr: float
    train_loss: float
    costs: list[ClientCost]
    report: AggregationReport
    updates: list[ClientUpdate] = field(repr=False, default_factory=list)


def run_round(state: ServerState, j: int, keep_updates: bool = False) -> RoundResult:
    spec = state.params.spec
    cohort = sample_cohort(len(state.profiles), state.cohort_size, j, state.master_seed)
    lr = state.schedule.lr_at(j)
    n_conn = len(state.params.weights)

    def work(cid: int):
        prof = state.profiles[cid]
        maps = index_sets(
            state.scheme,
            spec,
            prof.capacity,
            j,
            overlap=state.overlap,
            master_seed=state.master_seed,
            client_id=cid,
            canonical=True,
        )
        sub = extract_submodel(state.params, maps, prof.capacity)
        shard = state.train.subset(prof.shard)
        trained, loss_value = client_step(sub, shard, state.schedule, client_stream(state.master_seed, cid, j), lr)
        cost = ClientCost(
            client_id=cid,
            capacity=prof.capacity,
            params=sub.num_params(),
            macs=sub.params.spec.macs(),
            payload=payload_bytes(sub.num_params(), n_conn),
        )
        update = ClientUpdate(cid, trained.index_maps, trained.params, prof.sample_count, prof.capacity)
        return cid, update, loss_value, cost

    ids = [int(c) for c in cohort]
    if state.workers > 1:
        with ThreadPoolExecutor(max_workers=state.workers) as pool:
            results = list(pool.map(work, ids))
    else:
        results = [work(c) for c in ids]
    results.sort(key=lambda r: r[0])

    updates = [r[1] for r in results]
    new_params, report = aggregate(state.params, updates, state.weighting)
    return RoundResult(
        params=new_params,
        lr=lr,
        train_loss=float(np.mean([r[2] for r in results])),
        costs=[r[3] for r in results],
        report=report,
        updates=updates if keep_updates else [],
    )


# --- whole experiments ----------------------------------------------------


def split_per_class(ds: Dataset, test_per_class: int) -> tuple[Dataset, Dataset]:
    """First ``test_per_class`` examples of each class become the test set."""
    test_mask = np.zeros(len(ds), dtype=bool)
    for c in range(ds.num_classes):
        test_mask[np.flatnonzero(ds.labels == c)[:test_per_class]] = True
    return ds.subset(np.flatnonzero(~test_mask)), ds.subset(np.flatnonzero(test_mask))


def load_data(cfg: ExperimentConfig, seed: int) -> tuple[Dataset, Dataset]:
    if cfg.data == "synthetic":
        full = gen_synthetic(
            cfg.classes, cfg.dim, cfg.per_class + cfg.test_per_class, cfg.spread, seed, separation=cfg.separation
        )
        return split_per_class(full, cfg.test_per_class)
    from .fileio import load_dataset

    try:
        train = load_dataset(cfg.data)
        if cfg.test_data:
            return train, load_dataset(cfg.test_data)
    except OSError as err:
        raise ConfigError("data", f"cannot read dataset: {err}") from None
    perm = rng_mod.stream(seed, rng_mod.DATA, 1).permutation(len(train))
    cut = max(1, len(train) // 5)
    return train.subset(np.sort(perm[cut:])), train.subset(np.sort(perm[:cut]))


def make_partition(cfg: ExperimentConfig, train: Dataset, seed: int) -> PartitionPlan:
    kind, arg = cfg.partition_kind()
    if kind == "labels":
        return partition_by_labels(train, cfg.clients, int(arg), seed)
    if kind == "dirichlet":
        return partition_dirichlet(train, cfg.clients, arg, seed)
    return partition_by_labels(train, cfg.clients, train.num_classes, seed)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seed: int
    records: list[MetricsRecord]
    params: ParamStore
    trace: RunTrace
    profiles: list[ClientProfile]
    plan: PartitionPlan
    train: Dataset
    test: Dataset

    @property
    def final_accuracy(self) -> float:
        return global_accuracy(self.params, self.test)


def run_experiment(
    cfg: ExperimentConfig,
    seed: int | None = None,
    *,
    workers: int | None = None,
    out_dir=None,
    on_record=None,
) -> ExperimentResult:
    """Run ``cfg.rounds`` rounds for one master seed.

    Metrics are recorded every ``eval_every`` rounds and after the final
    round. When ``out_dir`` is given the final global model is written
    there as ``model_seed{seed}.fmd``.
    """
    cfg.validate()
    seed = cfg.seeds[0] if seed is None else seed
    if cfg.scheme == "static" and cfg.gamma > 1:
        log.warning("static extraction with gamma=%d leaves part of the server model untrained", cfg.gamma)

    train, test = load_data(cfg, seed)
    if train.dim != cfg.dim and cfg.data == "synthetic":
        raise ConfigError("dim", "synthetic data has unexpected dimension")
    spec = ModelSpec(tuple(h * cfg.gamma for h in cfg.hidden), train.dim, train.num_classes)
    for beta, p in cfg.capacities:
        if p > 0:
            # surfaces floor(beta*K) = 0 as a named config error
            index_sets("static", spec, beta, 0)
    plan = make_partition(cfg, train, seed)
    caps = assign_capacities(cfg.clients, cfg.capacities, seed)
    profiles = [ClientProfile(n, float(caps[n]), plan.shards[n]) for n in range(cfg.clients)]

    state = ServerState(
        params=init_params(spec, seed),
        profiles=profiles,
        schedule=Schedule.from_config(cfg),
        train=train,
        scheme=cfg.scheme,
        overlap=cfg.overlap,
        weighting=cfg.weighting,
        cohort_size=cfg.cohort,
        master_seed=seed,
        workers=cfg.workers if workers is None else workers,
    )
    trace = RunTrace()
    records: list[MetricsRecord] = []
    cumulative = 0
    for j in range(cfg.rounds):
        res = run_round(state, j)
        state.params = res.params
        trace.rounds.append(res.costs)
        cumulative += sum(c.payload for c in res.costs)
        done = j + 1
        if done % cfg.eval_every == 0 or done == cfg.rounds:
            la = local_accuracy(state.params, plan, train)
            rec = MetricsRecord(
                round=done,
                lr=res.lr,
                train_loss=res.train_loss,
                global_acc=global_accuracy(state.params, test),
                local_acc_mean=la.mean,
                local_acc_min=la.min,
                local_acc_max=la.max,
                payload_bytes=cumulative,
                seed=seed,
                scheme=cfg.scheme,
            )
            records.append(rec)
            if on_record is not None:
                on_record(rec)

    if out_dir is not None:
        from .fileio import write_model

        write_model(Path(out_dir) / f"model_seed{seed}.fmd", state.params)
    return ExperimentResult(cfg, seed, records, state.params, trace, profiles, plan, train, test)


def simulate_cost_trace(cfg: ExperimentConfig, rounds: int, seed: int | None = None) -> RunTrace:
    """Cohort sampling and sub-model sizing only, no training."""
    cfg.validate()
    seed = cfg.seeds[0] if seed is None else seed
    spec = cfg.server_spec()
    caps = assign_capacities(cfg.clients, cfg.capacities, seed)
    n_conn = len(spec.layer_widths) + 1
    from .extraction import submodel_spec

    sizes = {}
    for beta in set(caps.tolist()):
        sub = submodel_spec(spec, beta)
        sizes[beta] = (sub.num_params(), sub.macs())
    trace = RunTrace()
    for j in range(rounds):
        cohort = sample_cohort(cfg.clients, cfg.cohort, j, seed)
        trace.rounds.append(
            [
                ClientCost(int(c), float(caps[c]), sizes[caps[c]][0], sizes[caps[c]][1], payload_bytes(sizes[caps[c]][0], n_conn))
                for c in cohort
            ]
        )
    return trace
