"""Model predictive control for pushing a box with a nonholonomic mobile robot."""
from .harness import ExperimentConfig, RunMetrics, run_line_tracking, run_manipulation
from .mpc import ControllerConfig, HorizonDecision, McpWeights, MpcController, MpcWeights
from .plant import ContactStatus, PlantModel, PlantParams, WorldState, resolve_contact, step_world
from .pushing import ContactForces, FrictionParams, GraspMatrix, LimitSurface, ObjectGeometry
from .qp import QpProblem, QpSolution, solve_qp
from .robot import ControlInput, ErrorState, ReferenceSample, RobotState

__version__ = "0.1.0"
