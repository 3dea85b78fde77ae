"""Online time-optimal trajectory generation for one or two quadrotors.

A point-mass velocity search supplies waypoint velocities and reference
trajectories; a joint model predictive controller tracks them with full
quadrotor dynamics while keeping the two vehicles apart.
"""

from .core_model import ControlInput, ModelParams, QuadState, SinusoidMotion, Waypoint, rk4_step
from .pmpc_solver import OcpProblem, OcpSolution, SolverConfig, solve_ocp
from .pointmass import MassPointTrajectory, solve_3d_min_time, solve_axis_min_time, sync_axis_to_time
from .sim_harness import QuadSpec, SimLog, TrackScenario, compute_metrics, run_scenario
from .velocity_search import PlannerConfig, VelocityPlan, first_collision_time, plan_velocities

__version__ = "0.1.0"

__all__ = [
    "ControlInput",
    "MassPointTrajectory",
    "ModelParams",
    "OcpProblem",
    "OcpSolution",
    "PlannerConfig",
    "QuadSpec",
    "QuadState",
    "SimLog",
    "SinusoidMotion",
    "SolverConfig",
    "TrackScenario",
    "VelocityPlan",
    "Waypoint",
    "compute_metrics",
    "first_collision_time",
    "plan_velocities",
    "rk4_step",
    "run_scenario",
    "solve_3d_min_time",
    "solve_axis_min_time",
    "solve_ocp",
    "sync_axis_to_time",
]
