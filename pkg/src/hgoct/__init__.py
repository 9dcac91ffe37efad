"""Optimal control of harmonic generation with band-limited driving fields."""

from .functional import (
    FunctionalWeights,
    GammaSchedule,
    JBreakdown,
    SubspaceSpec,
    UnsupportedConfiguration,
    adjoint_source,
    chi_terminal,
    evaluate_terms,
    gradient_spectrum,
    projected_expectation_signal,
    solve_costate,
    target_spectrum,
)
from .optimizer import (
    IterationRecord,
    OptimizationResult,
    RelaxationConfig,
    convergence_metric,
    euler_lagrange_field,
    field_update,
    optimize,
)
from .problems import ProblemSpec, build, build_11ls, build_coulomb, build_hcl, build_tls
from .quantum import (
    HamiltonianModel,
    OperatorSpec,
    SpatialGrid,
    Trajectory,
    apply_operator,
    eigensolve,
    expectation,
    propagate_backward_inhomogeneous,
    propagate_forward,
)
from .spectral import FrequencyGrid, TimeGrid, apply_filter, cosine_forward, cosine_inverse

__version__ = "0.1.0"
