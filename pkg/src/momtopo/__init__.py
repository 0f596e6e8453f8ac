"""Joint-topology estimation for serial articulated objects.

Each joint of a chain is classified as revolute or prismatic by checking
which hypothesis makes the rate of change of the system momentum agree with
the net wrench measured at the two terminal links.
"""
from .errors import AliasingError, DivergenceError, JointLimitError, TrialFormatError
from .estimator import EstimationReport, EstimatorConfig, HypothesisError, hypothesis_error, select_topology
from .exploration import SinusoidSpec, evaluate, sample_sinusoid
from .model import JointModel, JointSpec, LinkSpec, ObjectSpec, Topology, enumerate_topologies, forward_kinematics
from .sim import SimConfig, run_trial, run_trials
from .spatial import Pose, SpatialInertia, Transform
from .store import SCHEMA, TrialRecord, TrialSample, read_trial, write_trial

__version__ = "0.1.0"

__all__ = [
    "AliasingError",
    "DivergenceError",
    "EstimationReport",
    "EstimatorConfig",
    "HypothesisError",
    "JointLimitError",
    "JointModel",
    "JointSpec",
    "LinkSpec",
    "ObjectSpec",
    "Pose",
    "SCHEMA",
    "SimConfig",
    "SinusoidSpec",
    "SpatialInertia",
    "Topology",
    "Transform",
    "TrialFormatError",
    "TrialRecord",
    "TrialSample",
    "enumerate_topologies",
    "evaluate",
    "forward_kinematics",
    "hypothesis_error",
    "read_trial",
    "run_trial",
    "run_trials",
    "sample_sinusoid",
    "select_topology",
    "write_trial",
]
