"""Stability certificates and large-deviation tools for mass-action reaction networks."""

from .kinetics import (
    Attractor,
    BlowupDetected,
    ODETrajectory,
    asymptotic_rate,
    asymptotic_rates,
    drift_field,
    find_attractors,
    generator_drift,
    integrate_ode,
    jacobian,
    lyapunov_U,
    volume_rate,
    volume_rates,
)
from .lagrangian import DiscretePath, LagrangianResult, Status, lagrangian, path_rate, segment_costs
from .network import Complex, CountState, Network, NetworkError, Reaction, reaction_vector
from .parse import ErrorKind, ParseError, load_network, parse_network, serialize_network
from .quasipotential import (
    AttractorGraph,
    QPotResult,
    attractor_graph,
    exit_exponent,
    quasipotential,
    stability_check,
    w_graph_min,
)
from .rational import LinearProgram, lp_solve, maximal_subsets
from .ssa import (
    DomainSpec,
    EventCap,
    ExitRecord,
    JumpTrajectory,
    ensemble_exit,
    exit_time,
    hitting_time,
    simulate,
    sup_distance,
)
from .topology import (
    Verdict,
    find_siphons,
    full_report,
    is_strongly_endotactic,
    is_strongly_P_endotactic,
    reachability_chain,
)

__version__ = "0.1.0"
