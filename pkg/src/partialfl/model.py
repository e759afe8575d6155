"""Width-scalable multilayer perceptron with analytic gradients.

Parameters are stored per connection between consecutive layers: a weight
matrix with one row per destination node and one column per source node,
and a bias vector with one entry per destination node. Hidden layers use
ReLU; the output layer produces logits for a softmax cross-entropy loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rng_mod


@dataclass(frozen=True)
class ModelSpec:
    layer_widths: tuple[int, ...]
    input_dim: int
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if not self.layer_widths:
            raise ValueError("layer_widths: at least one hidden layer is required")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError(f"layer_widths: all widths must be >= 1, got {self.layer_widths}")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")

    @property
    def sizes(self) -> tuple[int, ...]:
        """All layer sizes, input first and output last."""
        return (self.input_dim, *self.layer_widths, self.output_dim)

    def shapes(self) -> list[tuple[int, int]]:
        s = self.sizes
        return [(s[i + 1], s[i]) for i in range(len(s) - 1)]

    def num_params(self) -> int:
        return sum(r * c + r for r, c in self.shapes())

    def macs(self) -> int:
        """Multiply-accumulates for one example through the dense layers."""
        return sum(r * c for r, c in self.shapes())

    def scaled(self, factor: int) -> "ModelSpec":
        return ModelSpec(tuple(w * factor for w in self.layer_widths), self.input_dim, self.output_dim)


@dataclass
class ParamStore:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def spec(self) -> ModelSpec:
        widths = tuple(w.shape[0] for w in self.weights[:-1])
        return ModelSpec(widths, self.weights[0].shape[1], self.weights[-1].shape[0])

    def copy(self) -> "ParamStore":
        return ParamStore([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "ParamStore":
        return ParamStore([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def equals(self, other: "ParamStore") -> bool:
        """Bitwise equality of every array."""
        a, b = self.arrays(), other.arrays()
        return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


@dataclass
class Batch:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"row count mismatch: {self.features.shape[0]} feature rows, {self.labels.shape[0]} labels"
            )

    def __len__(self):
        return self.labels.shape[0]


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    velocity: ParamStore | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


def init_params(spec: ModelSpec, seed: int) -> ParamStore:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    gen = rng_mod.stream(seed, rng_mod.INIT)
    weights, biases = [], []
    for rows, cols in spec.shapes():
        bound = 1.0 / np.sqrt(cols)
        weights.append(gen.uniform(-bound, bound, size=(rows, cols)))
        biases.append(np.zeros(rows))
    return ParamStore(weights, biases)


def _check_input(params: ParamStore, batch: Batch) -> None:
    if batch.features.shape[1] != params.weights[0].shape[1]:
        raise ValueError(
            f"shape mismatch: batch has {batch.features.shape[1]} features, "
            f"model expects {params.weights[0].shape[1]}"
        )


def forward(params: ParamStore, batch: Batch):
    """Return ``(logits, cache)``; ``cache`` holds the per-layer activations."""
    _check_input(params, batch)
    h = batch.features
    activations = [h]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        h = z if i == last else np.maximum(z, 0.0)
        activations.append(h)
    return h, activations


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss(params: ParamStore, batch: Batch) -> float:
    if len(batch) == 0:
        raise ValueError("empty batch")
    logits, _ = forward(params, batch)
    logp = _log_softmax(logits)
    return float(-logp[np.arange(len(batch)), batch.labels].mean())


def loss_and_grad(params: ParamStore, batch: Batch) -> tuple[float, ParamStore]:
    """Mean cross-entropy over the batch and its exact gradient."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    n_out = params.weights[-1].shape[0]
    if batch.labels.min() < 0 or batch.labels.max() >= n_out:
        raise ValueError(f"labels must lie in [0, {n_out})")
    logits, acts = forward(params, batch)
    n = len(batch)
    rows = np.arange(n)
    logp = _log_softmax(logits)
    value = float(-logp[rows, batch.labels].mean())

    delta = np.exp(logp)
    delta[rows, batch.labels] -= 1.0
    delta /= n

    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i]) * (acts[i] > 0)
    return value, ParamStore(gw, gb)


def sgd_step(params: ParamStore, grads: ParamStore, opt: OptimizerState) -> ParamStore:
    """Momentum SGD with L2 weight decay; updates ``opt.velocity`` in place.

    v <- mu * v + (g + lambda * theta);  theta <- theta - eta * v
    """
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or any(p.shape != g.shape for p, g in zip(p_arrays, g_arrays)):
        raise ValueError("shape mismatch between parameters and gradients")
    if opt.velocity is None:
        opt.velocity = params.zeros_like()
    v_arrays = opt.velocity.arrays()
    if any(v.shape != p.shape for v, p in zip(v_arrays, p_arrays)):
        raise ValueError("shape mismatch between parameters and velocity buffer")

    new = []
    for p, g, v in zip(p_arrays, g_arrays, v_arrays):
        step = g + opt.weight_decay * p if opt.weight_decay else g
        v *= opt.momentum
        v += step
        new.append(p - opt.learning_rate * v)
    return ParamStore(new[0::2], new[1::2])


def predict(params: ParamStore, features: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class index."""
    logits, _ = forward(params, Batch(features, np.zeros(len(features), dtype=np.int64)))
    return np.argmax(logits, axis=1)
