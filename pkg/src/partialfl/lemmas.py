"""Coupon-collector round counts for random versus cyclic index selection.

With ``I`` indices and one drawn uniformly per round, the expected number
of rounds until every index has been drawn ``m`` times is

    I * integral_0^inf 1 - (1 - S_m(t) e^{-t})^I dt,
    S_m(t) = sum_{l<m} t^l / l!

which for ``m = 1`` equals ``I * H_I``. A cyclic schedule needs exactly
``m * I`` rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rng_mod

# 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1]
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KRONROD_W = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss nodes sit at odd positions of _XGK (1, 3, 5, 7 = centre)
_GAUSS_W = np.zeros(15)
for _k, _pos in enumerate((1, 3, 5)):
    _GAUSS_W[_pos] = _GAUSS_W[14 - _pos] = _WG[_k]
_GAUSS_W[7] = _WG[3]


def _gk15(f, a: float, b: float) -> tuple[float, float]:
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    fx = f(mid + half * _NODES)
    kronrod = half * float(_KRONROD_W @ fx)
    gauss = half * float(_GAUSS_W @ fx)
    return kronrod, abs(kronrod - gauss)


def adaptive_quad(f, a: float, b: float, abs_tol: float = 1e-10, max_intervals: int = 2000) -> tuple[float, float]:
    """Integrate vectorised ``f`` over ``[a, b]`` by global adaptive Gauss-Kronrod 7/15.

    Returns ``(value, error_estimate)``. The interval with the largest error
    estimate is bisected until the summed estimate falls below ``abs_tol``.
    """
    val, err = _gk15(f, a, b)
    intervals = [(err, a, b, val)]
    total_err = err
    while total_err > abs_tol and len(intervals) < max_intervals:
        worst = max(range(len(intervals)), key=lambda i: intervals[i][0])
        e, lo, hi, _ = intervals.pop(worst)
        mid = 0.5 * (lo + hi)
        left, right = _gk15(f, lo, mid), _gk15(f, mid, hi)
        intervals.append((left[1], lo, mid, left[0]))
        intervals.append((right[1], mid, hi, right[0]))
        total_err += left[1] + right[1] - e
    value = math.fsum(iv[3] for iv in intervals)
    return value, sum(iv[0] for iv in intervals)


def _check(I: int, m: int = 1) -> None:
    if int(I) != I or I < 1:
        raise ValueError(f"I must be a positive integer, got {I}")
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")


def expected_rounds_once(I: int) -> float:
    """``I * H_I`` by direct harmonic summation."""
    _check(I)
    return I * math.fsum(1.0 / k for k in range(1, I + 1))


def poisson_cdf(t: np.ndarray, m: int) -> np.ndarray:
    """``S_m(t) e^{-t}``, the chance a rate-1 Poisson count at time ``t`` is below ``m``."""
    t = np.asarray(t, dtype=np.float64)
    term = np.exp(-t)
    total = term.copy()
    for l in range(1, m):
        term = term * t / l
        total += term
    return total


def survival_integrand(t, I: int, m: int) -> np.ndarray:
    """``1 - (1 - S_m(t) e^{-t})^I``, written to stay accurate when it is tiny."""
    q = np.minimum(poisson_cdf(t, m), 1.0)
    with np.errstate(divide="ignore"):
        return -np.expm1(I * np.log1p(-q))


def tail_cutoff(I: int, m: int, threshold: float = 1e-12) -> float:
    """Smallest doubling ``T`` with the (decreasing) integrand below ``threshold``."""
    T = 1.0
    while survival_integrand(T, I, m) >= threshold:
        T *= 2.0
    return T


def expected_rounds_m(I: int, m: int = 1, abs_tol: float = 1e-6) -> float:
    """Expected rounds to draw each of ``I`` indices at least ``m`` times, by quadrature."""
    _check(I, m)
    T = tail_cutoff(I, m)
    # the outer factor I multiplies the quadrature error
    value, _ = adaptive_quad(lambda t: survival_integrand(t, I, m), 0.0, T, abs_tol=abs_tol / (10.0 * I))
    return I * value


def expected_rounds_once_integral(I: int, abs_tol: float = 1e-6) -> float:
    return expected_rounds_m(I, 1, abs_tol)


def rolling_rounds_to_cover(I: int, m: int = 1) -> int:
    _check(I, m)
    return m * I


def asymptotic_rounds(I: int, m: int = 1) -> float:
    """Large-``I`` growth ``I log I + I (m-1) log log I``; informational only."""
    _check(I, m)
    if I < 3:
        return float("nan")
    return I * math.log(I) + I * (m - 1) * math.log(math.log(I))


@dataclass
class MonteCarloResult:
    mean: float
    std_error: float
    trials: int


def monte_carlo_rounds(I: int, m: int, trials: int, seed: int) -> MonteCarloResult:
    """Simulate uniform draws until every index has been drawn ``m`` times.

    All trials advance in lockstep; finished trials drop out of the active set.
    """
    _check(I, m)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    gen = rng_mod.stream(seed, rng_mod.MONTE_CARLO, I, m)
    counts = np.zeros((trials, I), dtype=np.int32)
    rounds = np.zeros(trials, dtype=np.int64)
    active = np.arange(trials)
    step = 0
    while active.size:
        step += 1
        picks = gen.integers(0, I, size=active.size)
        counts[active, picks] += 1
        done = counts[active].min(axis=1) >= m
        rounds[active[done]] = step
        active = active[~done]
    mean = float(rounds.mean())
    se = float(rounds.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return MonteCarloResult(mean, se, trials)


@dataclass
class LemmaRow:
    I: int
    m: int
    closed_form: float
    monte_carlo: float
    std_error: float
    rolling: int
    asymptotic: float

    @property
    def z(self) -> float:
        if self.std_error == 0:
            # deterministic stop (I = 1): compare at quadrature tolerance
            return 0.0 if abs(self.monte_carlo - self.closed_form) <= 1e-6 else math.inf
        return abs(self.monte_carlo - self.closed_form) / self.std_error

    @property
    def agrees(self) -> bool:
        return self.z <= 3.0


def lemma_table(max_i: int, m: int, trials: int = 20000, seed: int = 0, min_i: int = 1) -> list[LemmaRow]:
    rows = []
    for I in range(min_i, max_i + 1):
        mc = monte_carlo_rounds(I, m, trials, seed)
        rows.append(
            LemmaRow(I, m, expected_rounds_m(I, m), mc.mean, mc.std_error, rolling_rounds_to_cover(I, m), asymptotic_rounds(I, m))
        )
    return rows
