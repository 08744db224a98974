"""Result records shared by the analytic, simulation and estimation layers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONVEXITY_TOL = 1e-9
TAU_AT_ONE_TOL = 1e-12


@dataclass
class StructureFunctionTable:
    """tau or tau-tilde sampled on a q grid.

    kind is "analytic" (closed-form tau) or "empirical" (partition-sum
    tau-tilde, with the generation depth recorded).
    """

    q_grid: np.ndarray
    values: np.ndarray
    kind: str
    depth: int | None = None

    def __post_init__(self):
        self.q_grid = np.asarray(self.q_grid, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.q_grid.ndim != 1 or self.q_grid.shape != self.values.shape:
            raise ValueError("q_grid and values must be 1-d arrays of equal length")
        if self.q_grid.size > 1 and not np.all(np.diff(self.q_grid) > 0):
            raise ValueError("q_grid must be strictly increasing")

    def is_convex(self, tol: float = CONVEXITY_TOL) -> bool:
        """Midpoint-below-chord check along the grid."""
        q, v = self.q_grid, self.values
        if q.size < 3:
            return True
        lam = (q[1:-1] - q[:-2]) / (q[2:] - q[:-2])
        chord = (1.0 - lam) * v[:-2] + lam * v[2:]
        return bool(np.all(v[1:-1] <= chord + tol))

    def value_at(self, q: float) -> float:
        idx = np.nonzero(np.isclose(self.q_grid, q, rtol=0.0, atol=1e-12))[0]
        if idx.size == 0:
            raise KeyError(f"q = {q} not on the grid")
        return float(self.values[idx[0]])


@dataclass
class SpectrumEstimate:
    """Multifractal spectrum values on a beta grid.

    kind "coarse" counts intervals with local exponent within epsilon of
    beta; kind "legendre" comes from the discrete Legendre transform of a
    structure-function table.  Empty coarse bins carry NaN sentinels.
    ``smoothed`` records whether an isotonic projection was needed before
    the transform.
    """

    beta_grid: np.ndarray
    values: np.ndarray
    kind: str
    depth: int | None = None
    epsilon: float | None = None
    smoothed: bool = False

    def __post_init__(self):
        self.beta_grid = np.asarray(self.beta_grid, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.beta_grid.shape != self.values.shape:
            raise ValueError("beta_grid and values must have equal length")


@dataclass
class MartingaleTrace:
    """Total masses Y_1 .. Y_n of one replica (linear scale)."""

    values: np.ndarray
    ell: int = 2
    seed: int = 0
    replica: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def depth(self) -> int:
        return int(self.values.size)

    @property
    def final_mass(self) -> float:
        return float(self.values[-1])


@dataclass
class MassStatistics:
    """Sample statistics of Y_n^q over a replica ensemble."""

    q: float
    mean: float
    variance: float
    standard_error: float
    replica_count: int
    extinct_fraction: float  # exact zeros / replicas
    depth: int
    used_count: int = 0  # replicas entering the mean (q <= 0 excludes zeros)
    below_threshold_fraction: float = 0.0
    zero_threshold: float = 0.0
