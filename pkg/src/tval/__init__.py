"""Torque-vectoring active learning: tyre/road friction estimation with a
dual exploration/exploitation controller, regulation layer and drive-cycle
simulation harness."""

from .belief import (AugmentedState, Belief, FilterConfig, Measurement,
                     expectation, init_prior, predict, retrogressive_resample,
                     uncertainty, update)
from .config import ScenarioConfig, load_scenario
from .dcee import ActionSet, ControlCommand, reactive_front, select_action
from .driver_env import (DriveCycle, DriverState, SurfaceSchedule,
                         SurfaceSegment, driver_demand, environment_at)
from .harness import RunResult, run_scenario
from .plant import PlantState, VehicleParams, plant_step, static_loads
from .regulation import (ActivationState, HysteresisSwitch, availability_gate,
                         blend, cornering_stiffness, energy_gate,
                         stability_gate, understeer_gradient, update_request)
from .tyre import TyreParams, friction, slip_ratio, tyre_force

__all__ = [
    "ActionSet", "ActivationState", "AugmentedState", "Belief",
    "ControlCommand", "DriveCycle", "DriverState", "FilterConfig",
    "HysteresisSwitch", "Measurement", "PlantState", "RunResult",
    "ScenarioConfig", "SurfaceSchedule", "SurfaceSegment", "TyreParams",
    "VehicleParams", "availability_gate", "blend", "cornering_stiffness",
    "driver_demand", "energy_gate", "environment_at", "expectation",
    "friction", "init_prior", "load_scenario", "plant_step", "predict",
    "reactive_front", "retrogressive_resample", "run_scenario",
    "select_action", "slip_ratio", "stability_gate", "static_loads",
    "tyre_force", "uncertainty", "understeer_gradient", "update",
    "update_request",
]

__version__ = "0.1.0"
