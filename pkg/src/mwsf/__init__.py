"""Numerical engine for matrix-weighted dyadic square functions:
Haar analysis on finite dyadic grids, reducing matrices, A_p / A_p^wk
characteristics, sparse domination and corona stopping times, and
Carleson-embedding verification."""

from .grid import (
    CellField,
    DyadicCube,
    GridError,
    GridSpec,
    average,
    constant_field,
    cube_cells,
    lp_norm,
    weighted_lp_norm,
)
from .haar import (
    HaarCoefficients,
    HaarSignature,
    haar_transform,
    haar_value,
    reconstruct,
)
from .weights import (
    Characteristics,
    DefinitenessError,
    MatrixWeightField,
    ReducingCache,
    a_infty_fujii_wilson,
    ap_characteristic,
    ap_characteristic_reduced,
    apwk_characteristic,
    compute_characteristics,
    dual_reducing_matrix,
    operator_norm,
    reducing_matrix,
    reverse_holder_exponent,
    spd_power,
)
from .operators import (
    CoefficientField,
    ExponentConfig,
    carleson_operator,
    carleson_star_norm,
    dyadic_maximal,
    dyadic_square_function_scalar,
    generalized_sparse_operator,
    linear_sparse_domination_check,
    localized_square_function,
    operator_norm_lower_bound,
    scalar_carleson_embedding_check,
    sparse_family_coefficients,
    sparse_positive_operator,
    square_function,
)
from .generators import WeightFamilySpec, generate_function, generate_weight
from .experiments import (
    EnsembleConfig,
    emit_report,
    john_constant,
    load_report,
    run_domination_experiment,
    run_norm_bound_experiment,
    run_sharpness_scan,
    theoretical_bound,
)
from .stopping import (
    CalibrationError,
    CoronaDecomposition,
    SparseFamily,
    StoppingConfig,
    build_corona,
    build_sparse_family,
    calibrate_lambda,
    corona_children,
    disjoint_sets,
    stopping_children_sq,
    verify_corona,
    verify_pointwise_domination,
    verify_sparse,
)

__version__ = "0.1.0"
