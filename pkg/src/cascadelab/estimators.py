"""Monte Carlo estimators confronting simulated cascades with the theory.

All limits of the theory (structure function, local exponents, dimension,
spectra, mass moments) are evaluated at a finite configured depth; depth
and tolerances travel with every result record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import LevelMassArray, CoupledCascade, NodePath, leaf_indices, sample_paths
from .errors import (
    AllMassZero,
    DegenerateGrid,
    InsufficientData,
    InsufficientReplicas,
    ZeroMassEncountered,
    ZeroMassPath,
    ZeroTotalMass,
)
from .records import MartingaleTrace, MassStatistics, SpectrumEstimate, StructureFunctionTable

NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# Structure function
# ---------------------------------------------------------------------------

def empirical_tau(level: LevelMassArray, q_grid) -> StructureFunctionTable:
    """tau_tilde_n(q) = (1/n) log_ell sum of m(I)^q over non-extinct I."""
    q_grid = np.asarray(q_grid, dtype=np.float64)
    lm = level.log_masses[level.log_masses != NEG_INF]
    if lm.size == 0:
        raise AllMassZero("every interval of the level is extinct")
    logs = q_grid[:, None] * lm[None, :]
    m = logs.max(axis=1)
    lse = m + np.log(np.sum(np.exp(logs - m[:, None]), axis=1))
    values = lse / (level.depth * math.log(level.ell))
    return StructureFunctionTable(q_grid=q_grid, values=values,
                                  kind="empirical", depth=level.depth)


# ---------------------------------------------------------------------------
# Local exponents and dimension
# ---------------------------------------------------------------------------

def local_exponent(level: LevelMassArray, path: NodePath) -> float:
    """log m(I) / log |I| for the depth-n interval addressed by ``path``."""
    if len(path) != level.depth:
        raise ZeroMassPath(
            f"path length {len(path)} does not match level depth {level.depth}"
        )
    lm = float(level.log_masses[path.index(level.ell)])
    if lm == NEG_INF:
        raise ZeroMassPath(f"interval at {path.digits} carries no mass")
    return -lm / (level.depth * math.log(level.ell))


def _exponents_at(level: LevelMassArray, indices: np.ndarray) -> np.ndarray:
    lm = level.log_masses[indices]
    if np.any(lm == NEG_INF):
        raise ZeroMassPath("sampled an extinct interval")
    return -lm / (level.depth * math.log(level.ell))


def dimension_estimate(level: LevelMassArray, sample_count: int,
                       sample_seed: int) -> tuple[float, float]:
    """Mean and standard error of the local exponent over measure-distributed
    paths; estimates dim(m) = -tau'(1)."""
    if sample_count < 2:
        raise InsufficientReplicas("need at least 2 sampled paths")
    digits = sample_paths(level, sample_count, sample_seed)  # ZeroTotalMass inside
    exps = _exponents_at(level, leaf_indices(digits, level.ell))
    return float(exps.mean()), float(exps.std(ddof=1) / math.sqrt(sample_count))


def simultaneous_exponent(coupled: CoupledCascade, sample_count: int,
                          sample_seed: int) -> tuple[float, float]:
    """Local exponent of the *base* cascade along paths drawn from the
    *tilted* one; the mean estimates beta = -tau'(q)."""
    if sample_count < 2:
        raise InsufficientReplicas("need at least 2 sampled paths")
    digits = sample_paths(coupled.tilted_level, sample_count, sample_seed)
    exps = _exponents_at(coupled.base_level, leaf_indices(digits, coupled.base_level.ell))
    return float(exps.mean()), float(exps.std(ddof=1) / math.sqrt(sample_count))


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------

def coarse_spectrum(level: LevelMassArray, beta_grid, epsilon: float) -> SpectrumEstimate:
    """Counting proxy for the spectrum: for each beta, log_ell(N)/n with N
    the number of intervals whose exponent lies in [beta - eps, beta + eps].
    Empty bins carry NaN."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    beta_grid = np.asarray(beta_grid, dtype=np.float64)
    lm = level.log_masses[level.log_masses != NEG_INF]
    n, ell = level.depth, level.ell
    exps = np.sort(-lm / (n * math.log(ell)))
    lo = np.searchsorted(exps, beta_grid - epsilon, side="left")
    hi = np.searchsorted(exps, beta_grid + epsilon, side="right")
    counts = hi - lo
    values = np.full(beta_grid.size, np.nan)
    hit = counts > 0
    values[hit] = np.log(counts[hit]) / (n * math.log(ell))
    return SpectrumEstimate(beta_grid=beta_grid, values=values, kind="coarse",
                            depth=n, epsilon=epsilon)


def _isotonic_increasing(y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted L2 projection onto nondecreasing sequences (PAVA)."""
    blocks: list[tuple[float, float, int]] = []  # (mean, weight, size)
    for yi, wi in zip(y, w):
        m, wt, sz = float(yi), float(wi), 1
        while blocks and blocks[-1][0] > m:
            pm, pw, ps = blocks.pop()
            m = (pm * pw + m * wt) / (pw + wt)
            wt += pw
            sz += ps
        blocks.append((m, wt, sz))
    result = np.empty(len(y))
    pos = 0
    for m, _, sz in blocks:
        result[pos:pos + sz] = m
        pos += sz
    return result


def legendre_spectrum(table: StructureFunctionTable,
                      convexity_tol: float = 1e-9) -> SpectrumEstimate:
    """Discrete Legendre transform of a structure-function table.

    beta values are minus the central chord slopes and the spectrum value
    at each grid q is q*beta + tau(q), sorted by beta.  If sampling noise
    broke convexity, the chord slopes are first projected onto
    nondecreasing sequences (flagged in the output).  Identical betas
    (affine tau) collapse to a single point.
    """
    q = table.q_grid
    v = table.values
    if q.size < 3:
        raise DegenerateGrid("the Legendre transform needs at least 3 grid points")
    dq = np.diff(q)
    slopes = np.diff(v) / dq
    smoothed = False
    if np.any(np.diff(slopes) < -convexity_tol):
        slopes = _isotonic_increasing(slopes, dq)
        v = np.concatenate([[v[0]], v[0] + np.cumsum(slopes * dq)])
        smoothed = True
    beta = -(v[2:] - v[:-2]) / (q[2:] - q[:-2])
    values = q[1:-1] * beta + v[1:-1]
    order = np.argsort(beta, kind="stable")
    beta, values = beta[order], values[order]
    keep = np.concatenate([[True], np.diff(beta) > 1e-12])
    return SpectrumEstimate(beta_grid=beta[keep], values=values[keep],
                            kind="legendre", depth=table.depth, smoothed=smoothed)


# ---------------------------------------------------------------------------
# Total-mass statistics
# ---------------------------------------------------------------------------

def mass_statistics(traces: list[MartingaleTrace], q: float,
                    zero_threshold: float = 0.0) -> MassStatistics:
    """Sample statistics of Y_n^q over a replica ensemble.

    Exact zeros (extinct replicas) contribute 0 to the mean for q > 0 and
    are excluded for q <= 0; both the exact-zero fraction and the
    below-threshold fraction are reported.
    """
    if len(traces) < 2:
        raise InsufficientReplicas("need at least 2 replicas")
    depth = traces[0].depth
    if any(t.depth != depth for t in traces):
        raise InsufficientReplicas("all traces must share one depth")
    y = np.array([t.final_mass for t in traces])
    n = y.size
    exact_zero = y == 0.0
    below = y < zero_threshold if zero_threshold > 0.0 else exact_zero
    if q > 0.0:
        vals = np.where(exact_zero, 0.0, y) ** q
    else:
        vals = y[~exact_zero] ** q
    used = vals.size
    if used < 2:
        raise InsufficientReplicas("fewer than 2 non-extinct replicas for q <= 0")
    mean = float(vals.mean())
    var = float(vals.var(ddof=1))
    return MassStatistics(
        q=q, mean=mean, variance=var,
        standard_error=math.sqrt(var / used),
        replica_count=n,
        extinct_fraction=float(exact_zero.mean()),
        depth=depth,
        used_count=used,
        below_threshold_fraction=float(below.mean()),
        zero_threshold=zero_threshold,
    )


@dataclass(frozen=True)
class DegeneracyVerdict:
    verdict: str  # "nondegenerate" | "degenerate" | "inconclusive"
    slope: float
    slope_se: float


def degeneracy_probe(traces: list[MartingaleTrace]) -> DegeneracyVerdict:
    """Empirical counterpart of the L log L criterion.

    Least-squares slope of log(median Y_k) against k over the last half of
    the depths: clearly negative (below -0.02 ln ell at 3 sigma) means
    degenerate, flat within 3 sigma means non-degenerate, anything else is
    inconclusive.  The thresholds are desk-scale heuristics, not theory.
    """
    if len(traces) < 100:
        raise InsufficientData("degeneracy probe needs >= 100 replicas")
    depth = traces[0].depth
    if depth < 8:
        raise InsufficientData("degeneracy probe needs depth >= 8")
    ell = traces[0].ell
    y = np.array([t.values for t in traces])
    med = np.median(y, axis=0)
    ks = np.arange(depth - depth // 2, depth) + 1.0  # last half of the depths
    med = med[depth - depth // 2:]
    if np.any(med == 0.0):
        return DegeneracyVerdict("degenerate", NEG_INF, 0.0)
    logs = np.log(med)
    kc = ks - ks.mean()
    sxx = float(np.sum(kc * kc))
    slope = float(np.sum(kc * logs) / sxx)
    resid = logs - logs.mean() - slope * kc
    dof = ks.size - 2
    se = math.sqrt(float(np.sum(resid * resid)) / dof / sxx) if dof > 0 else 0.0
    if slope < -0.02 * math.log(ell) and abs(slope) > 3.0 * se:
        return DegeneracyVerdict("degenerate", slope, se)
    if abs(slope) <= 3.0 * se:
        return DegeneracyVerdict("nondegenerate", slope, se)
    return DegeneracyVerdict("inconclusive", slope, se)


def negative_moment_probe(traces: list[MartingaleTrace],
                          alpha_grid) -> list[tuple[float, float, bool]]:
    """Empirical E[Y^(-alpha)] with a tail-stability flag.

    Purely diagnostic: the flag is True when the largest 1% of the terms
    contribute less than half of the mean.  Requires every replica to
    carry positive mass (laws with zero atoms are out of scope).
    """
    y = np.array([t.final_mass for t in traces])
    if np.any(y == 0.0):
        raise ZeroMassEncountered("an extinct replica has no negative moments")
    out = []
    for alpha in alpha_grid:
        vals = y ** (-float(alpha))
        top = max(1, math.ceil(0.01 * vals.size))
        head = np.sort(vals)[::-1][:top].sum()
        out.append((float(alpha), float(vals.mean()), bool(head / vals.sum() < 0.5)))
    return out
