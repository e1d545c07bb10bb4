"""Sigmoid-corridor trajectory planning with constrained DDP inside MPC."""

from .corridor import (
    CorridorConfig,
    CorridorSpec,
    CorridorStep,
    Obstacle,
    RoadGeometry,
    SigmoidParams,
    aggregate_corridor,
    corridor_at,
    obstacle_sigmoid_params,
    sigmoid_boundary,
)
from .ddp import OcpDefinition, SolveResult, backward_pass, forward_pass, solve, stage_cost
from .dynamics import Control, EgoState, VehicleLimits, lateral_bounds, longitudinal_bounds, step
from .errors import (
    AllPinched,
    CorridorMpcError,
    DegenerateQuu,
    LineSearchFailed,
    MarginOverflow,
    NotConverged,
    PinchedCorridor,
    PlacementFailure,
)
from .mpc import (
    ClosedLoopTrace,
    LaneChangeScript,
    MpcConfig,
    World,
    collision_check,
    plan_cycle,
    predict_obstacles,
    run,
)
from .reasoner import (
    DrivingConditionSummary,
    LambdaAssignment,
    LlmConfig,
    ReasonerConfig,
    decide_lambdas,
    efficiency_check,
    llm_decide,
    static_rule,
)
from .sim import (
    MetricsReport,
    Scenario,
    evaluate,
    generate_scenarios,
    lane_locked_baseline,
    slow_leader_scenario,
)

__version__ = "0.1.0"
