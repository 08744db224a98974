"""Exact Bernoulli-product (binomial cascade) computations.

The dyadic measure with m(I_eps) = p^{S_n} (1-p)^{n-S_n}, S_n the number of
1-digits, has every multifractal quantity in closed form, which makes it a
machine-precision oracle for the estimators.  Digit 1 carries the factor p
throughout this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BetaOutOfRange, InvalidParameter
from .records import StructureFunctionTable


@dataclass(frozen=True)
class BinomialParams:
    """Parameter of the dyadic Bernoulli product; 0 < p < 1."""

    p: float

    def __post_init__(self):
        if not (0.0 < self.p < 1.0):
            raise InvalidParameter(f"binomial p must lie in (0, 1), got {self.p}")


def bernoulli_mass(params: BinomialParams, path) -> float:
    """Mass of the dyadic interval indexed by a binary path."""
    digits = getattr(path, "digits", path)
    m = 1.0
    for d in digits:
        if d not in (0, 1):
            raise InvalidParameter(f"binomial paths are binary, got digit {d}")
        m = m * (params.p if d == 1 else 1.0 - params.p)
    return m


def bernoulli_tau(params: BinomialParams, q: float) -> float:
    """Structure function log2(p^q + (1-p)^q)."""
    p = params.p
    return math.log2(p ** q + (1.0 - p) ** q)


def entropy(theta: float) -> float:
    """Dyadic entropy h(theta) = -(theta log2 theta + (1-theta) log2(1-theta))."""
    if theta in (0.0, 1.0):
        return 0.0
    return -(theta * math.log2(theta) + (1.0 - theta) * math.log2(1.0 - theta))


def exponent_range(params: BinomialParams) -> tuple[float, float]:
    """Closed interval of attainable local exponents."""
    lo = -math.log2(max(params.p, 1.0 - params.p))
    hi = -math.log2(min(params.p, 1.0 - params.p))
    return (lo, hi)


def bernoulli_spectrum(params: BinomialParams, beta: float) -> float:
    """Spectrum F(beta) = h(theta) with theta the affine inversion of beta.

    beta must lie between -log2 p and -log2(1-p) (closed interval,
    endpoints map to entropy 0); outside raises BetaOutOfRange.
    """
    p = params.p
    lo, hi = exponent_range(params)
    if not (lo <= beta <= hi):
        raise BetaOutOfRange(f"beta = {beta} outside [{lo}, {hi}]")
    theta = (beta + math.log2(1.0 - p)) / (math.log2(1.0 - p) - math.log2(p))
    theta = min(1.0, max(0.0, theta))
    return entropy(theta)


def gibbs_theta(params: BinomialParams, q: float) -> float:
    """Tilted parameter theta = p^q / (p^q + (1-p)^q)."""
    p = params.p
    pq = p ** q
    return pq / (pq + (1.0 - p) ** q)


def digit_sums(depth: int) -> np.ndarray:
    """Number of 1-digits of every length-``depth`` binary word, in
    lexicographic order (equivalently: popcount of 0 .. 2^depth - 1)."""
    s = np.zeros(1, dtype=np.int64)
    for _ in range(depth):
        s = np.concatenate([s, s + 1])
    return s


def level_log_masses(params: BinomialParams, depth: int) -> np.ndarray:
    """Natural-log masses of all 2^depth intervals, lexicographic order."""
    s = digit_sums(depth)
    return s * math.log(params.p) + (depth - s) * math.log(1.0 - params.p)


def binomial_level(params: BinomialParams, depth: int):
    """The deterministic binomial measure at one depth as a LevelMassArray,
    usable everywhere a simulated cascade level is."""
    from .engine import CascadeConfig, LevelMassArray

    lm = level_log_masses(params, depth)
    config = CascadeConfig(ell=2, depth=depth, seed=0, replica=0)
    return LevelMassArray(
        config=config,
        model={"kind": "binomial-oracle", "p": params.p},
        log_masses=lm,
        zero_mask=np.zeros(lm.size, dtype=bool),
    )


def binomial_tau_table(params: BinomialParams, q_grid) -> StructureFunctionTable:
    """Exact tau on a grid (kind "analytic")."""
    q_grid = np.asarray(q_grid, dtype=np.float64)
    values = np.array([bernoulli_tau(params, float(q)) for q in q_grid])
    return StructureFunctionTable(q_grid=q_grid, values=values, kind="analytic")
