"""Scaling flows for frames, operator tuples, and nonnegative matrices:
measures, discrete and continuous balancing, capacity with certificates,
and the perturbation-based repair pipelines.
"""

from .core import (
    Frame,
    Measures,
    NonNegMatrix,
    OperatorTuple,
    delta_of,
    dist,
    distance,
    dumps,
    eps_nearness,
    frame_to_operator,
    from_dict,
    hadamard_square,
    is_doubly_balanced,
    is_doubly_stochastic,
    load_json,
    loads,
    measures_of,
    save_json,
    size_of,
    to_dict,
)
from .discrete_scaling import (
    IterationReport,
    ScalingError,
    ScalingPair,
    frame_alternating,
    operator_sinkhorn,
    sinkhorn,
)
from .dynamics import (
    CSV_HEADER,
    FlowError,
    FlowOptions,
    FlowState,
    RateReport,
    Trajectory,
    frame_flow,
    matrix_flow,
    operator_flow,
    rate_monitor,
    trajectory_csv,
    validation_options,
)
from .capacity import (
    CapacityError,
    CapacityResult,
    TightExample,
    capacity_bounds,
    capacity_zero_check,
    frame_capacity,
    frame_weight_minimizer,
    matrix_capacity,
    matrix_capacity_convex,
    operator_capacity,
    reduce_operator_to_matrix,
    tensor_square,
    tight_example,
)
from .paulsen import (
    PathTrace,
    PerturbationError,
    PerturbationNoise,
    PseudorandomReport,
    SolveReport,
    capacity_from_rate,
    certify_pseudorandom,
    diagonalize_right_scaling,
    frame_to_matrix,
    perturb,
    solve_basic,
    solve_smoothed,
)
from .generate import (
    harmonic_frame,
    near_parseval_frame,
    random_frame,
    random_matrix,
    random_operator,
)

__all__ = [
    "CSV_HEADER",
    "CapacityError",
    "CapacityResult",
    "FlowError",
    "FlowOptions",
    "FlowState",
    "Frame",
    "IterationReport",
    "Measures",
    "NonNegMatrix",
    "OperatorTuple",
    "PathTrace",
    "PerturbationError",
    "PerturbationNoise",
    "PseudorandomReport",
    "RateReport",
    "ScalingError",
    "ScalingPair",
    "SolveReport",
    "TightExample",
    "Trajectory",
    "capacity_bounds",
    "capacity_from_rate",
    "capacity_zero_check",
    "certify_pseudorandom",
    "delta_of",
    "diagonalize_right_scaling",
    "dist",
    "distance",
    "dumps",
    "eps_nearness",
    "frame_alternating",
    "frame_capacity",
    "frame_flow",
    "frame_to_matrix",
    "frame_to_operator",
    "frame_weight_minimizer",
    "from_dict",
    "hadamard_square",
    "harmonic_frame",
    "is_doubly_balanced",
    "is_doubly_stochastic",
    "load_json",
    "loads",
    "matrix_capacity",
    "matrix_capacity_convex",
    "matrix_flow",
    "measures_of",
    "near_parseval_frame",
    "operator_capacity",
    "operator_flow",
    "operator_sinkhorn",
    "perturb",
    "random_frame",
    "random_matrix",
    "random_operator",
    "rate_monitor",
    "reduce_operator_to_matrix",
    "save_json",
    "sinkhorn",
    "size_of",
    "solve_basic",
    "solve_smoothed",
    "tensor_square",
    "tight_example",
    "to_dict",
    "trajectory_csv",
    "validation_options",
]

__version__ = "0.1.0"
