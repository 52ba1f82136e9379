"""viscflow: a numerical laboratory for anchored (viscosity) fixed-point
flows of nonexpansive maps, their discrete counterparts, and the diagnostics
that check the convergence claims attached to them."""

from .analysis import (
    BoundednessReport,
    GronwallReport,
    ProbeReport,
    RateReport,
    StabilityReport,
    VPSolution,
    boundedness_verdict,
    fit_rate,
    gronwall_check,
    solve_vp,
    stability_verdict,
    trajectory_gronwall_triple,
    vp_residual,
)
from .discrete import (
    IterateSequence,
    iterate_dds,
    iterate_halpern,
    iterate_km,
    iterate_lions,
)
from .errors import (
    ConfigError,
    DimensionMismatch,
    MembershipViolation,
    NonConvergence,
    StepSizeUnderflow,
)
from .flows import (
    EulerBridgeReport,
    Perturbation,
    PowerDecayPerturbation,
    SolverConfig,
    Trajectory,
    ZeroPerturbation,
    euler_dds_equivalence,
    integrate,
    rhs_cds,
    rhs_pcds,
)
from .operators import (
    AffineContraction,
    Averaged,
    Composition,
    ConstantMap,
    Contraction,
    DomainSampler,
    Negation,
    Operator,
    Problem,
    ProjectionOp,
    Reflection,
    Rotation,
    project_fix,
    verify_contraction,
    verify_nonexpansive,
)
from .schedules import (
    ConditionFlag,
    ConditionReport,
    ConstantSchedule,
    PowerSchedule,
    TableSchedule,
    ThetaSchedule,
    check_continuous_conditions,
    check_discrete_conditions,
)
from .sets import (
    AffineSubspace,
    Ball,
    Box,
    ConvexSet,
    Halfspace,
    Intersection,
    WholeSpace,
    as_point,
    check_projection_characterization,
    inner,
    norm,
)

__version__ = "0.1.0"
