"""Sub-model extraction schedules and parameter slicing.

Three schedules pick, per hidden layer, which global nodes a client trains:

* rolling -- a contiguous window that advances every round and wraps
* random  -- a fresh uniform subset every round
* static  -- always the leading ``floor(beta * K)`` nodes

Input features and output nodes are never sliced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rng_mod
from .model import ModelSpec, ParamStore

SCHEMES = ("rolling", "random", "static")

# absorbs representation error such as 0.29 * 100 = 28.999999999999996
_FLOOR_EPS = 1e-9


def kept_nodes(K: int, beta: float) -> int:
    """``floor(beta * K)``; raises if that leaves no node."""
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"capacity must lie in (0, 1], got {beta}")
    n = int(math.floor(beta * K + _FLOOR_EPS))
    if n < 1:
        raise ValueError(f"capacity {beta} keeps no node of a layer with {K} nodes")
    return n


def stride(K: int, beta: float, overlap: float = 1.0) -> int:
    """Window advance per round: ``1 + floor(beta * (1 - r) * K)``."""
    if not 0.0 <= overlap <= 1.0:
        raise ValueError(f"overlap must lie in [0, 1], got {overlap}")
    return 1 + int(math.floor(beta * (1.0 - overlap) * K + _FLOOR_EPS))


def rolling_index_set(K: int, beta: float, j: int, overlap: float = 1.0) -> np.ndarray:
    """Window of ``floor(beta*K)`` consecutive indices starting at ``(j*stride) mod K``."""
    n = kept_nodes(K, beta)
    start = (j * stride(K, beta, overlap)) % K
    return (start + np.arange(n)) % K


def random_index_set(K: int, beta: float, gen: np.random.Generator) -> np.ndarray:
    """``floor(beta*K)`` distinct indices drawn uniformly without replacement."""
    n = kept_nodes(K, beta)
    return gen.choice(K, size=n, replace=False)


def static_index_set(K: int, beta: float) -> np.ndarray:
    return np.arange(kept_nodes(K, beta))


def random_stream(master_seed: int, client_id: int, j: int, layer: int) -> np.random.Generator:
    return rng_mod.stream(master_seed, rng_mod.EXTRACT, client_id, j, layer)


def index_sets(
    scheme: str,
    spec: ModelSpec,
    beta: float,
    j: int,
    *,
    overlap: float = 1.0,
    master_seed: int = 0,
    client_id: int = 0,
    canonical: bool = False,
) -> list[np.ndarray]:
    """One index set per hidden layer of ``spec`` for a client at round ``j``.

    With ``canonical=True`` each set is sorted ascending. Hidden-node order
    does not change the function the sub-model computes, but it does change
    floating-point summation order, so the training loop sorts to make
    schedules that select the same nodes produce identical results.
    """
    out = []
    for layer, K in enumerate(spec.layer_widths):
        if scheme == "rolling":
            s = rolling_index_set(K, beta, j, overlap)
        elif scheme == "random":
            s = random_index_set(K, beta, random_stream(master_seed, client_id, j, layer))
        elif scheme == "static":
            s = static_index_set(K, beta)
        else:
            raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
        out.append(np.sort(s) if canonical else s)
    return out


@dataclass
class SubModel:
    params: ParamStore
    index_maps: list[np.ndarray]
    capacity: float

    def num_params(self) -> int:
        return self.params.num_params()

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.index_maps)


def _layer_maps(global_params: ParamStore, index_maps):
    """Per-layer index arrays including unsliced input and output layers."""
    n_hidden = len(global_params.weights) - 1
    if len(index_maps) != n_hidden:
        raise ValueError(f"expected {n_hidden} index sets, got {len(index_maps)}")
    maps = []
    for layer, s in enumerate(index_maps):
        K = global_params.weights[layer].shape[0]
        s = np.asarray(s, dtype=np.int64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError(f"index set for hidden layer {layer} must be a non-empty vector")
        if s.min() < 0 or s.max() >= K:
            raise IndexError(f"index out of range for hidden layer {layer} with {K} nodes")
        if np.unique(s).size != s.size:
            raise ValueError(f"duplicate indices in hidden layer {layer}")
        maps.append(s)
    full_in = np.arange(global_params.weights[0].shape[1])
    full_out = np.arange(global_params.weights[-1].shape[0])
    return [full_in, *maps, full_out]


def extract_submodel(global_params: ParamStore, index_maps, capacity: float = 1.0) -> SubModel:
    """Copy the rows/columns of the global parameters selected by ``index_maps``."""
    maps = _layer_maps(global_params, index_maps)
    weights, biases = [], []
    for l, (w, b) in enumerate(zip(global_params.weights, global_params.biases)):
        rows, cols = maps[l + 1], maps[l]
        weights.append(w[np.ix_(rows, cols)].copy())
        biases.append(b[rows].copy())
    return SubModel(ParamStore(weights, biases), [m.copy() for m in maps[1:-1]], capacity)


def scatter_submodel(global_params: ParamStore, sub: SubModel) -> ParamStore:
    """Write the sub-model values back into a copy of ``global_params``."""
    maps = _layer_maps(global_params, sub.index_maps)
    out = global_params.copy()
    for l, (w, b) in enumerate(zip(sub.params.weights, sub.params.biases)):
        rows, cols = maps[l + 1], maps[l]
        if w.shape != (rows.size, cols.size):
            raise ValueError(f"sub-model weight {l} has shape {w.shape}, index maps imply {(rows.size, cols.size)}")
        out.weights[l][np.ix_(rows, cols)] = w
        out.biases[l][rows] = b
    return out


def submodel_num_params(spec: ModelSpec, beta: float) -> int:
    """Analytic parameter count of a capacity-``beta`` sub-model of ``spec``."""
    widths = tuple(kept_nodes(K, beta) for K in spec.layer_widths)
    return ModelSpec(widths, spec.input_dim, spec.output_dim).num_params()


def submodel_spec(spec: ModelSpec, beta: float) -> ModelSpec:
    widths = tuple(kept_nodes(K, beta) for K in spec.layer_widths)
    return ModelSpec(widths, spec.input_dim, spec.output_dim)


def coverage_counts(
    scheme: str,
    K: int,
    beta: float,
    rounds: int,
    *,
    overlap: float = 1.0,
    master_seed: int = 0,
    client_id: int = 0,
    start: int = 0,
) -> np.ndarray:
    """How many of ``rounds`` consecutive rounds selected each of the ``K`` indices."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    counts = np.zeros(K, dtype=np.int64)
    spec = ModelSpec((K,), 1, 1)
    for j in range(start, start + rounds):
        (s,) = index_sets(scheme, spec, beta, j, overlap=overlap, master_seed=master_seed, client_id=client_id)
        counts[s] += 1
    return counts
