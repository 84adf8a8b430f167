"""Simulation, weak-form online identification and TPBVP tracking control
for a four-thruster micro surface vehicle."""
from .allocation import project_thrusts
from .config import ScenarioConfig, load_config
from .controller import IdentificationSettings, ModelStore, OnlineIdentifier, TrackingController
from .dynamics import VehicleParams, eom_accel, state_derivative, true_basis_coefficients
from .ocp import CostWeights, OCProblem, OCSolution, solve_tpbvp
from .reference import CurveSpec, ReferenceTrajectory, reference_state
from .simulator import RunLog, ScenarioEvent, run_scenario
from .sysid import LearnedModel, fit_model

__all__ = [
    "CostWeights", "CurveSpec", "IdentificationSettings", "LearnedModel", "ModelStore",
    "OCProblem", "OCSolution", "OnlineIdentifier", "ReferenceTrajectory", "RunLog",
    "ScenarioConfig", "ScenarioEvent", "TrackingController", "VehicleParams", "eom_accel",
    "fit_model", "load_config", "project_thrusts", "reference_state", "run_scenario",
    "solve_tpbvp", "state_derivative", "true_basis_coefficients",
]
__version__ = "0.1.0"
