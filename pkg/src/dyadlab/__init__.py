"""Dyadic two-weight laboratory.

Finite dyadic lattices, weighted mixed-norm estimates for Haar shifts and
square functions, sharp-constant search by ratio ascent, and reproducible
verification suites for the comparability theorems the package implements.
"""

from .lattice import Cube, DyadicLattice
from .functions import (
    ExponentPair,
    Measure,
    StepFunction,
    average,
    cube_measure,
    integrate,
    lp_l2_norm,
    lp_norm,
    pairing,
)
from .martingale import (
    HaarFunction,
    MartingaleExpansion,
    block_difference,
    burkholder_ratio,
    conditional_expectation,
    expand,
    haar_evaluate,
    martingale_difference,
    rademacher_expectation,
)
from .shifts import (
    HaarMultiplier,
    ShiftApplicator,
    ShiftBlock,
    ShiftConstructionError,
    ShiftSpec,
    SquareFunctionApplicator,
    SquareFunctionSpec,
    adjoint_spec,
    apply_shift,
    apply_square_function,
    coefficient_bound,
    generate_random_shift,
    haar_multiplier_family,
    kernel_matrix,
)
from .sparse import (
    SparseFamily,
    carleson_check,
    dyadic_maximal,
    principal_cubes,
    stein_check,
    verify_sparse,
)
from .ratio import AscentOptions, ConstantEstimate, RatioProblem, maximize_ratio, spectral_norm_22
from .constants import (
    OneWeightPack,
    indicator_assignment_vector,
    one_weight_pack,
    positive_mass_cubes,
    quadratic_constant,
    quadratic_constant_disjoint,
    quadratic_constant_weighted,
    r_bound,
    r_bound_instance_value,
    shift_testing_constant,
    simple_constant,
    square_testing_constant,
    stein_constant,
    testing_instance_value,
    two_weight_norm,
)
from .serialize import (
    Instance,
    ParseError,
    canonical_json,
    estimate_record,
    format_instance,
    parse_instance,
    read_instance,
    write_instance,
)
from .experiments import (
    CounterexampleInstance,
    SuiteReport,
    build_counterexample,
    counterexample_growth,
    one_weight_stein_experiment,
    verify_lower_bound_lemma,
    verify_shift_theorem,
    verify_specific_form,
    verify_square_theorem,
)

__version__ = "0.1.0"

__all__ = [
    "AscentOptions",
    "ConstantEstimate",
    "CounterexampleInstance",
    "Cube",
    "DyadicLattice",
    "ExponentPair",
    "HaarFunction",
    "HaarMultiplier",
    "Instance",
    "MartingaleExpansion",
    "Measure",
    "OneWeightPack",
    "ParseError",
    "RatioProblem",
    "ShiftApplicator",
    "ShiftBlock",
    "ShiftConstructionError",
    "ShiftSpec",
    "SparseFamily",
    "SquareFunctionApplicator",
    "SquareFunctionSpec",
    "StepFunction",
    "SuiteReport",
    "adjoint_spec",
    "apply_shift",
    "apply_square_function",
    "average",
    "block_difference",
    "build_counterexample",
    "burkholder_ratio",
    "canonical_json",
    "carleson_check",
    "coefficient_bound",
    "conditional_expectation",
    "counterexample_growth",
    "cube_measure",
    "dyadic_maximal",
    "estimate_record",
    "expand",
    "format_instance",
    "generate_random_shift",
    "haar_evaluate",
    "haar_multiplier_family",
    "indicator_assignment_vector",
    "integrate",
    "kernel_matrix",
    "lp_l2_norm",
    "lp_norm",
    "martingale_difference",
    "maximize_ratio",
    "one_weight_pack",
    "one_weight_stein_experiment",
    "pairing",
    "parse_instance",
    "positive_mass_cubes",
    "principal_cubes",
    "quadratic_constant",
    "quadratic_constant_disjoint",
    "quadratic_constant_weighted",
    "r_bound",
    "r_bound_instance_value",
    "rademacher_expectation",
    "read_instance",
    "shift_testing_constant",
    "simple_constant",
    "spectral_norm_22",
    "square_testing_constant",
    "stein_constant",
    "stein_check",
    "testing_instance_value",
    "two_weight_norm",
    "verify_lower_bound_lemma",
    "verify_shift_theorem",
    "verify_sparse",
    "verify_specific_form",
    "verify_square_theorem",
    "write_instance",
]
