"""Solvers and benchmarks for deterministic and stochastic Stefan problems.

Mass-lumped P1 space discretisation, implicit Euler in time, and three
interchangeable nonlinear iteration strategies (Newton, a fixed-operator
linearised scheme, and regularised variants) with Monte Carlo ensembles over
finite-rank Wiener noise.
"""

from .discretisation import (
    DiscreteField,
    GradientDiscretisation,
    build_gd,
    dual_norm,
    estimate_poincare_constant,
    h1_seminorm,
    interpolate,
    l2_norm,
    x_norm,
)
from .mesh import FAMILY_TABLE, Mesh, generate_mesh, load_mesh, refine, save_mesh
from .noise import (
    NoiseOperator,
    QWienerModel,
    WienerIncrement,
    apply_noise,
    laplace_mode_model,
    mc_expectation,
    sample_increment,
)
from .nonlinearity import (
    Nonlinearity,
    RegularisedNonlinearity,
    check_slope_bounds,
    identity_zeta,
    regularise,
    stefan_zeta,
)
from .solvers import (
    LinearBackend,
    SolveCounters,
    SolverConfig,
    StepResult,
    contraction_alpha,
    l_scheme_solve,
    newton_solve,
    r_scheme_solve,
    residual,
    rgs_inverse_solve,
    rgs_residual,
)
from .timestepper import (
    EnsembleResult,
    NoiseSettings,
    RunContext,
    RunSpec,
    SolverReport,
    SolverSettings,
    TimeGrid,
    Trajectory,
    run_ensemble,
    run_gs,
    run_rgs,
    tolerance_policy,
)

__version__ = "0.1.0"
