"""
Closed-form mutation, recombination and selection dynamics on finite
product type spaces, with linkage-disequilibrium extraction and an RK4
reference integrator for cross-checks.
"""
from .correlations import (
    MomentTable,
    SetPartition,
    correlations_from_moments,
    moebius_partition,
    moments_from_correlations,
    partitions_of,
    site_correlation,
    site_moments,
)
from .dynamics import (
    ClosedFormWarning,
    CombinedFlow,
    IntegrationError,
    ModelSpec,
    Trajectory,
    closed_form_exact,
    discrete_interference_step,
    equilibrium,
    full_rhs,
    integrate_rk4,
    iterate_interference,
    site_equilibria,
    solve_combined,
    t_decay_rate,
)
from .measure import Cylinder, Measure, SignedMeasure, marginal, point_mass, product, random_measure, uniform
from .mutation import GeneratorError, MutationModel, apply_semigroup, expm, mutation_rhs, validate_generator
from .recombination import (
    RecombinationFlow,
    RecombinationRates,
    coeff_a,
    coeff_b,
    coefficient_table,
    kpoint_function,
    ld_basis,
    linkage_disequilibria,
    recombine_link,
    recombine_set,
    solve_recombination,
    span_links,
    t_operator,
    t_operators,
)
from .selection import FitnessModel, diploid_rhs, mean_fitness, selection_rhs, thompson_factor
from .type_space import TypeSpace, flat_index, unflat_index

__version__ = "0.1.0"

__all__ = [
    "ClosedFormWarning",
    "CombinedFlow",
    "Cylinder",
    "FitnessModel",
    "GeneratorError",
    "IntegrationError",
    "Measure",
    "ModelSpec",
    "MomentTable",
    "MutationModel",
    "RecombinationFlow",
    "RecombinationRates",
    "SetPartition",
    "SignedMeasure",
    "Trajectory",
    "TypeSpace",
    "apply_semigroup",
    "closed_form_exact",
    "coeff_a",
    "coeff_b",
    "coefficient_table",
    "correlations_from_moments",
    "diploid_rhs",
    "discrete_interference_step",
    "equilibrium",
    "expm",
    "flat_index",
    "full_rhs",
    "integrate_rk4",
    "iterate_interference",
    "kpoint_function",
    "ld_basis",
    "linkage_disequilibria",
    "marginal",
    "mean_fitness",
    "moebius_partition",
    "moments_from_correlations",
    "mutation_rhs",
    "partitions_of",
    "point_mass",
    "product",
    "random_measure",
    "recombine_link",
    "recombine_set",
    "selection_rhs",
    "site_correlation",
    "site_equilibria",
    "site_moments",
    "solve_combined",
    "solve_recombination",
    "span_links",
    "t_decay_rate",
    "t_operator",
    "t_operators",
    "thompson_factor",
    "unflat_index",
    "uniform",
    "validate_generator",
]
