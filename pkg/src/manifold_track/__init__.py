"""Tracking a rigid body from IMU and range data with SO(3)-aware Kalman filters."""
from ._backend import get_backend, set_backend
from .exceptions import InvalidArgumentError, NumericalError, SingularRetractionError
from .filters import FilterConfig, FilterKind, FilterState, run_filter
from .kinematics import TransmitterGeometry
from .scenarios import ScenarioSpec, generate_truth, load_scenario
from .sensors import BeaconMap

__all__ = [
    "BeaconMap",
    "FilterConfig",
    "FilterKind",
    "FilterState",
    "InvalidArgumentError",
    "NumericalError",
    "ScenarioSpec",
    "SingularRetractionError",
    "TransmitterGeometry",
    "generate_truth",
    "get_backend",
    "load_scenario",
    "run_filter",
    "set_backend",
]
__version__ = "0.1.0"
