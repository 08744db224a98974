"""cascadelab: simulation and estimation for multiplicative cascades on
ell-adic trees — closed-form theory, seeded Monte Carlo, and an exact
binomial oracle to verify the estimators against."""

from .binomial import (
    BinomialParams,
    bernoulli_mass,
    bernoulli_spectrum,
    bernoulli_tau,
    binomial_level,
    binomial_tau_table,
    gibbs_theta,
)
from .engine import (
    CascadeConfig,
    CoupledCascade,
    LevelMassArray,
    MATERIALIZE_CAP,
    NodePath,
    coupled_generate,
    generate,
    generate_many,
    martingale_trace,
    martingale_traces,
    node_weight,
    refine,
    sample_paths,
    sample_point,
    stream_log_partition_sums,
    stream_partition_sums,
    total_mass,
)
from .estimators import (
    DegeneracyVerdict,
    coarse_spectrum,
    degeneracy_probe,
    dimension_estimate,
    empirical_tau,
    legendre_spectrum,
    local_exponent,
    mass_statistics,
    negative_moment_probe,
    simultaneous_exponent,
)
from .records import (
    MartingaleTrace,
    MassStatistics,
    SpectrumEstimate,
    StructureFunctionTable,
)
from .snapshots import Snapshot, export_csv, load_snapshot, save_snapshot
from .weights import (
    BirthDeath,
    DiscreteAtoms,
    LogNormal,
    TheoryReport,
    WeightModel,
    diagnostics,
    extinction_probability,
    legendre,
    log_moment,
    model_descriptor,
    moment,
    parse_model,
    q_range,
    slope_range,
    tau,
    tau_prime,
    tau_second,
    tau_table,
    tilt,
    validate,
)

__version__ = "0.1.0"
