"""Simulation and verification toolkit for general Vicsek collective dynamics."""

__version__ = "0.1.0"

from .coefficients import (
    CoefficientSet,
    ConstantsReport,
    Kernel,
    RegularizationSpec,
    VonMisesParams,
    alpha_norm,
    constants_report,
    flux_empirical,
    flux_field,
    flux_kinetic,
    gamma_clamp,
    lipschitz_probe,
    preset,
    psi,
    tau0,
    tau1,
    tau2,
    tau_eps0,
    tau_soft,
    vonmises_density,
    vonmises_values,
)
from .errors import (
    ConfigError,
    DegenerateInitialFluxError,
    GridMismatchError,
    InvalidInputError,
    SingularFluxError,
    SnapshotRangeError,
    VicsekError,
)
from .kinetic import (
    EnergyReport,
    KineticState,
    KineticTrajectory,
    LinearCoefficientField,
    SpatialGrid1D,
    coefficient_dependence_check,
    equilibrium_residual,
    flux_floor_check,
    free_energy_and_dissipation,
    lp_growth_check,
    solve_nonlinear,
    step_linear,
    uniform_state,
)
from .particles import (
    InitialSpec,
    KineticCoefficientPath,
    ParticleEnsemble,
    SimConfig,
    TrajectoryRecord,
    brownian_increments,
    run_particles,
    sample_initial,
    step_auxiliary,
    step_particles,
)
from .sphere import (
    SphereGridS1,
    discrete_laplacian_s1,
    ddtheta,
    project_tangent,
    quadrature_s1,
    tangential_gradient_coordinate,
    unit_vector,
)
