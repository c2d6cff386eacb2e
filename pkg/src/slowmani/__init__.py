"""Exact dimension reduction of SDEs forced onto a slow manifold.

The package computes the projection matrix P, curvature tensor Q and
noise-induced drift g that turn

    dx/dt = f(x) + eps h(x) + sqrt(mu) G(x) eta(t)

into the reduced equation on the manifold of equilibria of f,

    dz/dt = eps P h(z) + mu g(z) + sqrt(mu) P G(z) eta(t),

and validates the reduction by simulation of full, reduced and discrete
jump-process models.
"""

from .core import (
    CoDimOne,
    General,
    Jet,
    Parametrized1D,
    SdeSystem,
    Unknown,
    eval_jet,
    validate_manifold_point,
)
from .errors import (
    AmbiguousSlowDirection,
    BlowUpError,
    ConfigError,
    DefectiveJacobian,
    DomainError,
    EvaluationError,
    LinAlgError,
    NoConvergence,
    SingularFrame,
    SlowmaniError,
    StiffnessError,
    UnstableManifold,
)
from .flow import FlowResult, integrate_outer, pi_jet_fd, pi_map
from .models import BUILTIN_NAMES, BuiltinModel, build_model, reference_reduced
from .reduction import (
    LocalFrame1D,
    ReducedSystem,
    assemble_reduced,
    build_local_frame_1d,
    lyapunov_solve,
    noise_drift,
    project_general,
    q_1d,
    q_general,
    reduce_at,
    reduce_codim1,
)
from .simulate import (
    JumpModel,
    MomentReport,
    ParticleResult,
    TrajectoryEnsemble,
    compare_projected,
    euler_maruyama_1d,
    replicate_rng,
    simulate_full,
    simulate_particles_competition,
    simulate_reduced,
    simulate_ssa,
)

__version__ = "0.1.0"

__all__ = [
    "SdeSystem", "Parametrized1D", "CoDimOne", "General", "Unknown", "Jet",
    "eval_jet", "validate_manifold_point",
    "ReducedSystem", "LocalFrame1D", "project_general", "lyapunov_solve",
    "q_general", "build_local_frame_1d", "q_1d", "reduce_codim1",
    "noise_drift", "assemble_reduced", "reduce_at",
    "FlowResult", "integrate_outer", "pi_map", "pi_jet_fd",
    "TrajectoryEnsemble", "JumpModel", "MomentReport", "ParticleResult",
    "simulate_full", "simulate_reduced", "euler_maruyama_1d", "simulate_ssa",
    "simulate_particles_competition", "compare_projected", "replicate_rng",
    "BuiltinModel", "build_model", "reference_reduced", "BUILTIN_NAMES",
    "SlowmaniError", "EvaluationError", "LinAlgError", "DefectiveJacobian",
    "AmbiguousSlowDirection", "SingularFrame", "UnstableManifold",
    "NoConvergence", "StiffnessError", "BlowUpError", "ConfigError",
    "DomainError",
    "__version__",
]
