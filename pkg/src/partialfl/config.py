"""Experiment configuration: ``key = value`` text files and metrics records."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .aggregation import WEIGHTINGS
from .extraction import SCHEMES, kept_nodes
from .model import ModelSpec

# capacity presets: (beta, probability) pairs
UNIFORM_CAPACITIES = ((1.0, 0.2), (0.5, 0.2), (0.25, 0.2), (0.125, 0.2), (0.0625, 0.2))
# household income tiers mapped to capacities
INCOME_CAPACITIES = ((1.0, 0.06), (0.5, 0.10), (0.25, 0.11), (0.125, 0.18), (0.0625, 0.55))


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def two_point(rho: float, large: float = 1.0, small: float = 0.0625):
    """Share ``rho`` of clients at ``large`` capacity, the rest at ``small``."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    return ((large, rho), (small, 1.0 - rho))


def parse_capacities(text: str):
    text = text.strip()
    if text == "uniform":
        return UNIFORM_CAPACITIES
    if text == "income":
        return INCOME_CAPACITIES
    if text.startswith("rho:"):
        return two_point(float(text[4:]))
    pairs = []
    for item in text.split(","):
        beta, _, prob = item.partition(":")
        pairs.append((float(beta), float(prob) if prob else None))
    if all(p is None for _, p in pairs):
        pairs = [(b, 1.0 / len(pairs)) for b, _ in pairs]
    if any(p is None for _, p in pairs):
        raise ValueError("either every capacity has a ':probability' or none does")
    return tuple(pairs)


def format_capacities(pairs) -> str:
    return ", ".join(f"{b!r}:{p!r}" for b, p in pairs)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


@dataclass
class ExperimentConfig:
    scheme: str = "rolling"
    overlap: float = 1.0
    capacities: tuple = UNIFORM_CAPACITIES
    clients: int = 100
    cohort: int = 10
    rounds: int = 300
    lr: float = 0.05
    milestones: tuple[int, ...] = ()
    decay: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    local_epochs: int = 1
    batch_size: int = 10
    hidden: tuple[int, ...] = (64,)
    gamma: int = 1
    weighting: str = "none"
    data: str = "synthetic"
    test_data: str = ""
    classes: int = 10
    dim: int = 20
    per_class: int = 600
    test_per_class: int = 200
    spread: float = 1.0
    separation: float = 4.0
    partition: str = "labels:2"
    seeds: tuple[int, ...] = (0,)
    eval_every: int = 25
    workers: int = 1
    out: str = "runs"

    # -- derived ---------------------------------------------------------

    def client_spec(self, input_dim: int | None = None, output_dim: int | None = None) -> ModelSpec:
        return ModelSpec(self.hidden, input_dim or self.dim, output_dim or self.classes)

    def server_spec(self, input_dim: int | None = None, output_dim: int | None = None) -> ModelSpec:
        return self.client_spec(input_dim, output_dim).scaled(self.gamma)

    def partition_kind(self) -> tuple[str, float]:
        kind, _, arg = self.partition.partition(":")
        if kind == "iid":
            return "iid", 0.0
        if kind not in ("labels", "dirichlet") or not arg:
            raise ConfigError("partition", f"expected 'labels:L', 'dirichlet:ALPHA' or 'iid', got {self.partition!r}")
        return kind, float(arg)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # -- validation ------------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        if self.scheme not in SCHEMES:
            raise ConfigError("scheme", f"must be one of {SCHEMES}, got {self.scheme!r}")
        if self.weighting not in WEIGHTINGS:
            raise ConfigError("weighting", f"must be one of {WEIGHTINGS}, got {self.weighting!r}")
        if not 0.0 <= self.overlap <= 1.0:
            raise ConfigError("overlap", "must lie in [0, 1]")
        if self.clients < 1:
            raise ConfigError("clients", "must be >= 1")
        if not 1 <= self.cohort <= self.clients:
            raise ConfigError("cohort", f"must lie in [1, clients={self.clients}]")
        if self.rounds < 0:
            raise ConfigError("rounds", "must be >= 0")
        if self.lr < 0:
            raise ConfigError("lr", "must be >= 0")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ConfigError("milestones", "must be strictly increasing")
        if self.milestones and (self.milestones[0] < 0 or self.milestones[-1] >= max(self.rounds, 1)):
            raise ConfigError("milestones", f"must lie in [0, rounds={self.rounds})")
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError("decay", "must lie in (0, 1]")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum", "must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay", "must be >= 0")
        if self.local_epochs < 1:
            raise ConfigError("local_epochs", "must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size", "must be >= 1")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError("hidden", "need at least one hidden layer, all widths >= 1")
        if self.gamma < 1:
            raise ConfigError("gamma", "must be a positive integer")
        if not self.seeds:
            raise ConfigError("seeds", "need at least one seed")
        if self.eval_every < 1:
            raise ConfigError("eval_every", "must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        if self.data == "synthetic":
            if self.classes < 2:
                raise ConfigError("classes", "must be >= 2")
            if self.dim < 2:
                raise ConfigError("dim", "must be >= 2")
            if self.per_class < 1 or self.test_per_class < 1:
                raise ConfigError("per_class", "per_class and test_per_class must be >= 1")
            if self.spread < 0:
                raise ConfigError("spread", "must be >= 0")
        kind, arg = self.partition_kind()
        if kind == "labels" and (arg != int(arg) or not 1 <= arg <= self.classes):
            raise ConfigError("partition", f"labels per client must be an integer in [1, classes={self.classes}]")
        if kind == "dirichlet" and not arg > 0:
            raise ConfigError("partition", "dirichlet alpha must be > 0")

        if not self.capacities:
            raise ConfigError("capacities", "empty capacity distribution")
        probs = [p for _, p in self.capacities]
        if any(p < 0 for p in probs) or not math.isclose(sum(probs), 1.0, abs_tol=1e-9):
            raise ConfigError("capacities", f"probabilities must be >= 0 and sum to 1, got {probs}")
        limit = 1.0 / self.gamma
        server = self.server_spec()
        for beta, p in self.capacities:
            if not 0.0 < beta <= 1.0:
                raise ConfigError("capacities", f"capacity {beta} outside (0, 1]")
            if p > 0 and beta > limit + 1e-12:
                raise ConfigError("capacities", f"capacity {beta} exceeds 1/gamma = {limit} for gamma={self.gamma}")
            for K in server.layer_widths:
                try:
                    kept_nodes(K, beta)
                except ValueError as err:
                    raise ConfigError("capacities", str(err)) from None
        return self

    # -- text format -----------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "capacities":
                text = format_capacities(v)
            elif isinstance(v, tuple):
                text = ", ".join(repr(x) for x in v)
            else:
                text = repr(v) if isinstance(v, float) else str(v)
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        kinds = {f.name: f for f in dataclasses.fields(cls)}
        defaults = cls()
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not sep:
                raise ConfigError(key or f"line {lineno}", "expected 'key = value'")
            if key not in kinds:
                raise ConfigError(key, f"unknown key on line {lineno}")
            values[key] = parse_value(key, val, getattr(defaults, key))
        return cls(**values)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise ConfigError("config", f"cannot read {path}: {err.strerror}") from None
        return cls.from_text(text)


def parse_value(key: str, text: str, default):
    try:
        if key == "capacities":
            return parse_capacities(text)
        if key in ("milestones", "seeds", "hidden"):
            return _ints(text)
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return _floats(text)
        return text
    except ValueError as err:
        raise ConfigError(key, f"cannot parse {text!r}: {err}") from None


@dataclass
class MetricsRecord:
    round: int
    lr: float
    train_loss: float
    global_acc: float
    local_acc_mean: float
    local_acc_min: float
    local_acc_max: float
    payload_bytes: int
    seed: int
    scheme: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        extra = d.pop("extra")
        d.update(extra)
        return json.dumps(d, sort_keys=False)
