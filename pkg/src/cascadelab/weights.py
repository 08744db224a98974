"""Analytic theory of mean-one cascade weights.

A weight law W with E[W] = 1 drives a multiplicative cascade on the
ell-adic tree.  This module holds everything that can be computed in closed
form from the law alone: moments E[W^q], the structure function

    tau(q) = log_ell E[W^q] - (q - 1),

its derivatives, the Legendre transform tau*(beta) = inf_q (q beta + tau(q)),
the non-degeneracy / moment / dimension diagnostics, exponential tilting
W' = W^q / E[W^q], and the extinction probability of the total mass.

Three families are supported:

* ``BirthDeath(p)``     P[W = 1/p] = p, P[W = 0] = 1 - p
* ``LogNormal(sigma)``  W = exp(sigma N - sigma^2 / 2), N standard normal
* ``DiscreteAtoms``     finite law on nonnegative values with unit mean

All internal logarithms are natural; conversion to base ell happens once at
the boundary.  The convention 0^q = 0 is applied everywhere, so E[W^0] means
P[W != 0] and negative moments of laws with a zero atom are infinite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateModel,
    InvalidParameter,
    MeanNotOne,
    MomentInfinite,
    NegativeMomentOfZeroAtom,
    ZeroMoment,
)
from .records import StructureFunctionTable

MEAN_TOL = 1e-12

# Root finding: absolute tolerance on q, and the bracket-expansion cap beyond
# which an endpoint is reported as unbounded (double exponentials overflow
# well before |q| = 64 matters for any admissible law).
ROOT_TOL = 1e-10
Q_CAP = 64.0

# A degenerate (linear) structure function has a single attainable slope;
# requested slopes are snapped to it within this absolute tolerance.
SLOPE_SNAP_TOL = 1e-5

NEG_INF = float("-inf")
POS_INF = float("inf")


@dataclass(frozen=True)
class BirthDeath:
    """Two-atom law: P[W = 1/p] = p, P[W = 0] = 1 - p."""

    p: float


@dataclass(frozen=True)
class LogNormal:
    """W = exp(sigma N - sigma^2 / 2) with N standard normal."""

    sigma: float


@dataclass(frozen=True)
class DiscreteAtoms:
    """Finite law on nonnegative atoms: ((value, prob), ...)."""

    atoms: tuple[tuple[float, float], ...]


WeightModel = BirthDeath | LogNormal | DiscreteAtoms


def validate(model: WeightModel) -> WeightModel:
    """Check invariants and return a normalized copy of the model.

    Discrete atoms are sorted by value, zero-probability atoms dropped and
    duplicate values merged.  Raises InvalidParameter for out-of-range
    parameters and MeanNotOne when a discrete law misses E[W] = 1 by more
    than 1e-12.
    """
    if isinstance(model, BirthDeath):
        p = float(model.p)
        if not (0.0 < p <= 1.0) or math.isnan(p):
            raise InvalidParameter(f"birth-death p must lie in (0, 1], got {p}")
        return BirthDeath(p)
    if isinstance(model, LogNormal):
        sigma = float(model.sigma)
        if not (sigma > 0.0) or math.isinf(sigma):
            raise InvalidParameter(f"log-normal sigma must be positive, got {sigma}")
        return LogNormal(sigma)
    if isinstance(model, DiscreteAtoms):
        if not model.atoms:
            raise InvalidParameter("discrete law needs at least one atom")
        merged: dict[float, float] = {}
        total_prob = 0.0
        for value, prob in model.atoms:
            value = float(value)
            prob = float(prob)
            if not (0.0 <= prob <= 1.0) or math.isnan(prob):
                raise InvalidParameter(f"atom probability {prob} outside [0, 1]")
            if value < 0.0 or math.isnan(value) or math.isinf(value):
                raise InvalidParameter(f"atom value {value} must be finite and >= 0")
            total_prob += prob
            if prob > 0.0:
                merged[value] = merged.get(value, 0.0) + prob
        if abs(total_prob - 1.0) > MEAN_TOL:
            raise InvalidParameter(f"atom probabilities sum to {total_prob}, not 1")
        atoms = tuple(sorted(merged.items()))
        mean = sum(v * p for v, p in atoms)
        if abs(mean - 1.0) > MEAN_TOL:
            raise MeanNotOne(f"E[W] = {mean}, expected 1")
        return DiscreteAtoms(atoms)
    raise InvalidParameter(f"unknown weight model {model!r}")


# ---------------------------------------------------------------------------
# Descriptor JSON (the wire format shared with the CLI and snapshots)
# ---------------------------------------------------------------------------

def model_descriptor(model: WeightModel) -> dict:
    """JSON-able descriptor, e.g. {"kind": "lognormal", "sigma": 0.5}."""
    if isinstance(model, BirthDeath):
        return {"kind": "birthdeath", "p": model.p}
    if isinstance(model, LogNormal):
        return {"kind": "lognormal", "sigma": model.sigma}
    if isinstance(model, DiscreteAtoms):
        return {"kind": "discrete", "atoms": [[v, p] for v, p in model.atoms]}
    raise InvalidParameter(f"unknown weight model {model!r}")


def parse_model(descriptor) -> WeightModel:
    """Build and validate a model from a descriptor dict (or JSON string)."""
    if isinstance(descriptor, str):
        import json

        try:
            descriptor = json.loads(descriptor)
        except json.JSONDecodeError as exc:
            raise InvalidParameter(f"bad model JSON: {exc}") from exc
    if not isinstance(descriptor, dict) or "kind" not in descriptor:
        raise InvalidParameter(f"model descriptor must be a dict with 'kind': {descriptor!r}")
    kind = descriptor["kind"]
    try:
        if kind == "birthdeath":
            return validate(BirthDeath(descriptor["p"]))
        if kind == "lognormal":
            return validate(LogNormal(descriptor["sigma"]))
        if kind == "discrete":
            return validate(DiscreteAtoms(tuple((v, p) for v, p in descriptor["atoms"])))
    except KeyError as exc:
        raise InvalidParameter(f"model descriptor missing field {exc}") from exc
    raise InvalidParameter(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

def zero_probability(model: WeightModel) -> float:
    """P[W = 0]."""
    if isinstance(model, BirthDeath):
        return 1.0 - model.p
    if isinstance(model, LogNormal):
        return 0.0
    return sum(p for v, p in model.atoms if v == 0.0)


def has_zero_atom(model: WeightModel) -> bool:
    return zero_probability(model) > 0.0


def _nonzero_atoms(model: DiscreteAtoms) -> tuple[np.ndarray, np.ndarray]:
    vals = np.array([v for v, p in model.atoms if v > 0.0])
    probs = np.array([p for v, p in model.atoms if v > 0.0])
    return vals, probs


def _check_negative_q(model: WeightModel, q: float) -> None:
    if q < 0.0 and has_zero_atom(model):
        raise NegativeMomentOfZeroAtom(
            f"E[W^{q}] is infinite: the law has P[W=0] = {zero_probability(model)}"
        )


def log_mgf(model: WeightModel, q: float) -> float:
    """ln E[W^q] under the 0^q = 0 convention (stable for large |q|)."""
    _check_negative_q(model, q)
    if q == 0.0:
        nz = 1.0 - zero_probability(model)
        return math.log(nz) if nz > 0.0 else NEG_INF
    if isinstance(model, BirthDeath):
        return (1.0 - q) * math.log(model.p)
    if isinstance(model, LogNormal):
        return 0.5 * model.sigma ** 2 * (q * q - q)
    vals, probs = _nonzero_atoms(model)
    if vals.size == 0:
        return NEG_INF
    logs = np.log(probs) + q * np.log(vals)
    m = logs.max()
    return float(m + np.log(np.sum(np.exp(logs - m))))


def moment(model: WeightModel, q: float) -> float:
    """E[W^q] as an extended nonnegative real.

    Closed forms: p^(1-q) for birth-death, exp(sigma^2 (q^2 - q)/2) for
    log-normal, an atom sum for discrete laws.  E[W^0] is P[W != 0].
    Raises NegativeMomentOfZeroAtom when the value is genuinely infinite.
    """
    return math.exp(log_mgf(model, q))


def log_moment(model: WeightModel, q: float) -> float:
    """E[W^q ln W] in natural-log units (zero atoms contribute nothing)."""
    _check_negative_q(model, q)
    if isinstance(model, BirthDeath):
        return -math.exp((1.0 - q) * math.log(model.p)) * math.log(model.p)
    if isinstance(model, LogNormal):
        s2 = model.sigma ** 2
        return s2 * (q - 0.5) * math.exp(0.5 * s2 * (q * q - q))
    vals, probs = _nonzero_atoms(model)
    if vals.size == 0:
        return 0.0
    logv = np.log(vals)
    return float(np.sum(probs * np.exp(q * logv) * logv))


def _tilted_log_mean(model: WeightModel, q: float) -> float:
    """E[W^q ln W] / E[W^q], computed without overflow."""
    if isinstance(model, BirthDeath):
        return -math.log(model.p)
    if isinstance(model, LogNormal):
        return model.sigma ** 2 * (q - 0.5)
    vals, _ = _nonzero_atoms(model)
    logv = np.log(vals)
    w = _tilted_atom_probs(model, q)
    return float(np.sum(w * logv))


def _tilted_log_var(model: WeightModel, q: float) -> float:
    """Var[ln W] under the q-tilted law (the curvature of ln E[W^q])."""
    if isinstance(model, BirthDeath):
        return 0.0
    if isinstance(model, LogNormal):
        return model.sigma ** 2
    vals, _ = _nonzero_atoms(model)
    logv = np.log(vals)
    w = _tilted_atom_probs(model, q)
    mu = float(np.sum(w * logv))
    return float(np.sum(w * (logv - mu) ** 2))


def _tilted_atom_probs(model: DiscreteAtoms, q: float) -> np.ndarray:
    vals, probs = _nonzero_atoms(model)
    logits = np.log(probs) + q * np.log(vals)
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


# ---------------------------------------------------------------------------
# Structure function and derivatives
# ---------------------------------------------------------------------------

def _check_ell(ell: int) -> int:
    if int(ell) != ell or ell < 2:
        raise InvalidParameter(f"branching base ell must be an integer >= 2, got {ell}")
    return int(ell)


def tau(model: WeightModel, ell: int, q: float) -> float:
    """Structure function tau(q) = log_ell E[W^q] - (q - 1).

    tau(0) uses P[W != 0] in place of E[W^0]; for q < 0 a zero atom makes
    the moment infinite and MomentInfinite is raised.
    """
    ell = _check_ell(ell)
    return log_mgf(model, q) / math.log(ell) - (q - 1.0)


def tau_prime(model: WeightModel, ell: int, q: float) -> float:
    """tau'(q) = E[W^q ln W] / (E[W^q] ln ell) - 1."""
    ell = _check_ell(ell)
    _check_negative_q(model, q)
    return _tilted_log_mean(model, q) / math.log(ell) - 1.0


def tau_second(model: WeightModel, ell: int, q: float) -> float:
    """tau''(q), the curvature of the structure function (>= 0)."""
    ell = _check_ell(ell)
    _check_negative_q(model, q)
    return _tilted_log_var(model, q) / math.log(ell)


def tau_table(model: WeightModel, ell: int, q_grid) -> StructureFunctionTable:
    """Analytic tau sampled on a grid, as a StructureFunctionTable."""
    q_grid = np.asarray(q_grid, dtype=np.float64)
    values = np.array([tau(model, ell, float(q)) for q in q_grid])
    return StructureFunctionTable(q_grid=q_grid, values=values, kind="analytic")


def _is_linear(model: WeightModel) -> bool:
    # tau is affine iff ln W is a.s. constant on {W != 0}.
    if isinstance(model, BirthDeath):
        return True
    if isinstance(model, LogNormal):
        return False
    return sum(1 for v, _ in model.atoms if v > 0.0) <= 1


def slope_range(model: WeightModel, ell: int) -> tuple[float, float]:
    """Closure [beta_min, beta_max] of the attainable slopes {-tau'(q)}.

    -tau' is decreasing in q; the limits are set by the extreme nonzero
    atom values for discrete laws and are infinite for log-normal laws.
    """
    ell = _check_ell(ell)
    log_ell = math.log(ell)
    if isinstance(model, LogNormal):
        return (NEG_INF, POS_INF)
    if isinstance(model, BirthDeath):
        beta = 1.0 + math.log(model.p) / log_ell
        return (beta, beta)
    vals, _ = _nonzero_atoms(model)
    v_min, v_max = float(vals.min()), float(vals.max())
    return (1.0 - math.log(v_max) / log_ell, 1.0 - math.log(v_min) / log_ell)


def _solve_slope(model: WeightModel, ell: int, beta: float) -> float:
    """Solve tau'(q) = -beta by bracketed bisection plus Newton polish."""
    target = -beta

    def f(q: float) -> float:
        return tau_prime(model, ell, q) - target

    lo, hi = 0.0, 1.0
    if has_zero_atom(model):
        lo = 0.0  # tau is infinite below 0 for zero-atom laws
    while f(lo) > 0.0:
        lo = lo * 2.0 - 1.0
        if has_zero_atom(model):
            lo = max(lo, 0.0)
            if lo == 0.0 and f(lo) > 0.0:
                return 0.0
        if lo < -Q_CAP:
            return -Q_CAP
    while f(hi) < 0.0:
        hi = hi * 2.0 + 1.0
        if hi > Q_CAP:
            return Q_CAP
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if f(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < ROOT_TOL:
            break
    q = 0.5 * (lo + hi)
    for _ in range(2):
        curv = tau_second(model, ell, q)
        if curv <= 0.0:
            break
        step = f(q) / curv
        q_new = q - step
        if lo <= q_new <= hi:
            q = q_new
    return q


def legendre(model: WeightModel, ell: int, beta: float) -> float:
    """Legendre transform tau*(beta) = inf_q (q beta + tau(q)).

    Convexity makes tau' monotone, so the infimum is found by solving
    tau'(q) = -beta.  Outside the closure of the attainable slopes the
    transform is genuinely -inf and that sentinel is returned; at the
    closure endpoints of a discrete law the limiting value
    1 + log_ell P[W = v_extreme] is returned.  For affine tau (a single
    nonzero atom) slopes within SLOPE_SNAP_TOL of the unique one are
    accepted.
    """
    ell = _check_ell(ell)
    validate(model)
    log_ell = math.log(ell)
    beta_min, beta_max = slope_range(model, ell)

    if _is_linear(model):
        if abs(beta - beta_min) <= SLOPE_SNAP_TOL:
            return beta_min
        return NEG_INF
    if beta < beta_min or beta > beta_max:
        return NEG_INF
    if isinstance(model, DiscreteAtoms):
        # Endpoint values are attained only in the q -> +-inf limit.
        vals, probs = _nonzero_atoms(model)
        if beta == beta_min:
            return 1.0 + math.log(float(probs[np.argmax(vals)])) / log_ell
        if beta == beta_max:
            return 1.0 + math.log(float(probs[np.argmin(vals)])) / log_ell
    q = _solve_slope(model, ell, beta)
    return q * beta + tau(model, ell, q)


# ---------------------------------------------------------------------------
# q-range of non-degenerate tilts, diagnostics, extinction
# ---------------------------------------------------------------------------

def _auxiliary_dimension(model: WeightModel, ell: int, q: float) -> float:
    """g(q) = tau(q) - q tau'(q) = tau*(-tau'(q)); positive iff the
    q-tilted cascade is non-degenerate."""
    return tau(model, ell, q) - q * tau_prime(model, ell, q)


def q_range(model: WeightModel, ell: int) -> tuple[float, float]:
    """The interval (q_min, q_max) = {q : tau*(-tau'(q)) > 0}.

    Roots of g(q) = tau(q) - q tau'(q) are bracketed outward from q = 1
    and bisected to 1e-10; an endpoint where g stays positive out to
    |q| = 64 is reported as unbounded (+-inf).  For laws with a zero atom
    g is only defined for q >= 0 and the lower endpoint is -inf whenever
    g stays positive down to 0.  Raises DegenerateModel when g(1) <= 0.
    """
    ell = _check_ell(ell)
    g = lambda q: _auxiliary_dimension(model, ell, q)
    if g(1.0) <= 0.0:
        raise DegenerateModel("the base cascade is degenerate: tau'(1) >= 0")

    def bisect(inner: float, outer: float) -> float:
        # g(inner) > 0 >= g(outer); shrink the bracket onto the root.
        for _ in range(120):
            mid = 0.5 * (inner + outer)
            if g(mid) > 0.0:
                inner = mid
            else:
                outer = mid
            if abs(outer - inner) < ROOT_TOL:
                break
        return 0.5 * (inner + outer)

    inner, outer = 1.0, 2.0
    q_max = POS_INF
    while outer <= Q_CAP:
        if g(outer) <= 0.0:
            q_max = bisect(inner, outer)
            break
        inner, outer = outer, outer * 2.0

    floor = 0.0 if has_zero_atom(model) else -Q_CAP
    inner, outer = 1.0, 0.0
    q_min = NEG_INF
    while True:
        if g(outer) <= 0.0:
            q_min = bisect(inner, outer)
            break
        if outer <= floor:
            break
        inner, outer = outer, max(floor, outer * 2.0 - 1.0)
    return (q_min, q_max)


@dataclass(frozen=True)
class TheoryReport:
    """Closed-form diagnostics of one (model, ell) pair."""

    nondegenerate: bool
    information_dimension: float | None  # 1 - E[W log_ell W], only if non-deg.
    support_dimension: float  # tau(0)
    lq_bound_sup: float  # sup{q > 1 : tau(q) < 0}, +-inf sentinels
    extinction_probability: float
    q_min: float
    q_max: float


def extinction_probability(model: WeightModel, ell: int) -> float:
    """P[Y_inf = 0]: smallest fixed point of f(x) = (r + (1 - r) x)^ell.

    Degenerate cascades die with probability 1; otherwise the fixed point
    is reached by monotone iteration from 0 (r = P[W = 0]), and equals 0
    exactly when r = 0.
    """
    ell = _check_ell(ell)
    model = validate(model)
    if log_moment(model, 1.0) >= math.log(ell):
        return 1.0
    r = zero_probability(model)
    if r == 0.0:
        return 0.0
    x = 0.0
    for _ in range(100000):
        x_next = (r + (1.0 - r) * x) ** ell
        if abs(x_next - x) < 1e-12:
            return x_next
        x = x_next
    return x


def diagnostics(model: WeightModel, ell: int) -> TheoryReport:
    """Assemble the TheoryReport; sentinel-valued fields, never raises."""
    ell = _check_ell(ell)
    model = validate(model)
    log_ell = math.log(ell)
    nondeg = log_moment(model, 1.0) < log_ell
    info_dim = 1.0 - log_moment(model, 1.0) / log_ell if nondeg else None
    support_dim = tau(model, ell, 0.0)

    # sup{q > 1 : tau(q) < 0}; empty for degenerate laws (-inf), unbounded
    # when tau stays negative out to the cap (+inf).
    if not nondeg:
        lq_sup = NEG_INF
    else:
        hi = 2.0
        while tau(model, ell, hi) < 0.0:
            hi *= 2.0
            if hi > Q_CAP:
                break
        if hi > Q_CAP:
            lq_sup = POS_INF
        else:
            lo = hi / 2.0
            for _ in range(120):
                mid = 0.5 * (lo + hi)
                if tau(model, ell, mid) < 0.0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < ROOT_TOL:
                    break
            lq_sup = 0.5 * (lo + hi)

    try:
        q_lo, q_hi = q_range(model, ell)
    except DegenerateModel:
        q_lo, q_hi = (float("nan"), float("nan"))

    return TheoryReport(
        nondegenerate=nondeg,
        information_dimension=info_dim,
        support_dimension=support_dim,
        lq_bound_sup=lq_sup,
        extinction_probability=extinction_probability(model, ell),
        q_min=q_lo,
        q_max=q_hi,
    )


# ---------------------------------------------------------------------------
# Tilting
# ---------------------------------------------------------------------------

def tilt(model: WeightModel, q: float) -> WeightModel:
    """The law of W' = W^q / E[W^q].

    Birth-death laws are fixed points of tilting; log-normal sigma maps to
    |q| sigma; discrete atoms map to (v^q / E[W^q], prob).  The result is
    validated (E[W'] = 1 holds by construction).
    """
    model = validate(model)
    if q == 1.0:
        return model
    _check_negative_q(model, q)
    if isinstance(model, BirthDeath):
        return model
    if isinstance(model, LogNormal):
        if q == 0.0:
            # W' is identically 1.
            return validate(DiscreteAtoms(((1.0, 1.0),)))
        return validate(LogNormal(abs(q) * model.sigma))
    log_m = log_mgf(model, q)
    if log_m == NEG_INF:
        raise ZeroMoment(f"E[W^{q}] = 0, cannot tilt")
    new_atoms = []
    zero_p = zero_probability(model)
    if zero_p > 0.0:
        new_atoms.append((0.0, zero_p))
    for v, p in model.atoms:
        if v > 0.0:
            new_atoms.append((math.exp(q * math.log(v) - log_m), p))
    return validate(DiscreteAtoms(tuple(new_atoms)))
