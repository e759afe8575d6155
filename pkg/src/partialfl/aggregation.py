"""Selective, per-parameter averaging of heterogeneous sub-model updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extraction import _layer_maps
from .model import ParamStore

WEIGHTINGS = ("none", "model_size", "model_update", "hybrid")


@dataclass
class ClientUpdate:
    client_id: int
    index_maps: list[np.ndarray]
    params: ParamStore
    sample_count: int = 1
    capacity: float = 1.0
    update_mass: int | None = None

    def __post_init__(self):
        if self.update_mass is None:
            self.update_mass = self.params.num_params()


@dataclass
class AggregationReport:
    updater_counts: list[np.ndarray]  # per connection, weight-shaped then bias-shaped, interleaved
    untouched: int

    @property
    def max_count(self) -> int:
        return max(int(c.max()) for c in self.updater_counts)


def client_weight(update: ClientUpdate, scheme: str = "none") -> float:
    if scheme == "none":
        return 1.0
    size = float(sum(len(s) for s in update.index_maps))
    if scheme == "model_size":
        return size
    if scheme == "model_update":
        return float(update.update_mass)
    if scheme == "hybrid":
        return size * float(update.update_mass)
    raise ValueError(f"unknown weighting scheme {scheme!r}; expected one of {WEIGHTINGS}")


def aggregate(global_params: ParamStore, updates: list[ClientUpdate], scheme: str = "none"):
    """Average each global parameter over the clients whose sub-model held it.

    Parameters nobody updated keep their value bit for bit. Updates are
    folded in ascending ``client_id`` order regardless of list order, and
    client weights are divided by the cohort's smallest weight first, which
    makes the result independent of any exact rescaling of the weights.
    Means are clamped to the range of the contributing values, since rounding
    can otherwise land one ulp outside it.
    """
    updates = sorted(updates, key=lambda u: u.client_id)
    ids = [u.client_id for u in updates]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate client_id in updates")

    raw = [client_weight(u, scheme) for u in updates]
    if any(not w > 0 for w in raw):
        raise ValueError("client weights must be positive")
    base = min(raw) if raw else 1.0
    weights = [w / base for w in raw]

    num_w = [np.zeros_like(w) for w in global_params.weights]
    num_b = [np.zeros_like(b) for b in global_params.biases]
    den_w = [np.zeros_like(w) for w in global_params.weights]
    den_b = [np.zeros_like(b) for b in global_params.biases]
    cnt_w = [np.zeros(w.shape, dtype=np.int64) for w in global_params.weights]
    cnt_b = [np.zeros(b.shape, dtype=np.int64) for b in global_params.biases]
    lo_w = [np.full(w.shape, np.inf) for w in global_params.weights]
    hi_w = [np.full(w.shape, -np.inf) for w in global_params.weights]
    lo_b = [np.full(b.shape, np.inf) for b in global_params.biases]
    hi_b = [np.full(b.shape, -np.inf) for b in global_params.biases]

    for u, p in zip(updates, weights):
        maps = _layer_maps(global_params, u.index_maps)
        for l, (w, b) in enumerate(zip(u.params.weights, u.params.biases)):
            rows, cols = maps[l + 1], maps[l]
            if w.shape != (rows.size, cols.size) or b.shape != (rows.size,):
                raise ValueError(
                    f"client {u.client_id}: layer {l} shapes {w.shape}/{b.shape} "
                    f"disagree with index maps {(rows.size, cols.size)}"
                )
            sel = np.ix_(rows, cols)
            num_w[l][sel] += p * w
            den_w[l][sel] += p
            cnt_w[l][sel] += 1
            lo_w[l][sel] = np.minimum(lo_w[l][sel], w)
            hi_w[l][sel] = np.maximum(hi_w[l][sel], w)
            num_b[l][rows] += p * b
            den_b[l][rows] += p
            cnt_b[l][rows] += 1
            lo_b[l][rows] = np.minimum(lo_b[l][rows], b)
            hi_b[l][rows] = np.maximum(hi_b[l][rows], b)

    out_w, out_b, counts = [], [], []
    untouched = 0
    for l in range(len(global_params.weights)):
        for g, num, den, cnt, lo, hi, dst in (
            (global_params.weights[l], num_w[l], den_w[l], cnt_w[l], lo_w[l], hi_w[l], out_w),
            (global_params.biases[l], num_b[l], den_b[l], cnt_b[l], lo_b[l], hi_b[l], out_b),
        ):
            touched = cnt > 0
            new = g.copy()
            new[touched] = np.clip(num[touched] / den[touched], lo[touched], hi[touched])
            dst.append(new)
            counts.append(cnt)
            untouched += int((~touched).sum())
    return ParamStore(out_w, out_b), AggregationReport(counts, untouched)


def fedavg_reference(stores: list[ParamStore]) -> ParamStore:
    """Plain elementwise mean of full-size models, summed in list order."""
    if not stores:
        raise ValueError("need at least one parameter store")
    shapes = [a.shape for a in stores[0].arrays()]
    acc = [np.zeros(s) for s in shapes]
    lo = [np.full(s, np.inf) for s in shapes]
    hi = [np.full(s, -np.inf) for s in shapes]
    for st in stores:
        arrays = st.arrays()
        if [a.shape for a in arrays] != shapes:
            raise ValueError("parameter stores have different model specs")
        for a, mn, mx, x in zip(acc, lo, hi, arrays):
            a += x
            np.minimum(mn, x, out=mn)
            np.maximum(mx, x, out=mx)
    n = float(len(stores))
    # clamp: the rounded mean of equal values can exceed them by one ulp
    mean = [np.clip(a / n, mn, mx) for a, mn, mx in zip(acc, lo, hi)]
    return ParamStore(mean[0::2], mean[1::2])
