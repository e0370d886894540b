"""Simulation, fluid and diffusion tools for heavily loaded processor-sharing queues."""

from .distributions import (
    Deterministic,
    Erlang,
    Exponential,
    HeavyTrafficFamily,
    HyperExponential,
    BoundedPareto,
    Pareto,
    Uniform,
    InterarrivalDistribution,
    Streams,
    excess_cdf,
    excess_mean,
    from_spec,
    instantiate_r,
    validate_assumptions,
)
from .errors import (
    ConfigError,
    DomainError,
    EvaluationError,
    NoSteadyState,
    SimulationAbort,
    SingularityError,
    UnsupportedOperation,
)
from .fluid import FluidPath, fluid_measure_at, fluid_solve, fluid_steady_state, residual
from .harness import (
    ExperimentConfig,
    ks_statistic,
    run_collapse_experiment,
    run_fluid_comparison,
    run_steady_state_experiment,
)
from .measure import (
    DEFAULT_FAMILY,
    FiniteMeasure,
    TestFunctionFamily,
    integrate,
    lift,
    metric_d,
    modulus,
    shift_kill,
)
from .rbm import RbmParams, c_nu, rbm_simulate, rbm_steady_cdf, zstar_steady_cdf
from .simulation import QueueState, SimPath, init, replay_check, run, scaled_view, state_measure

__version__ = "0.1.0"
