"""Cross-layer ad hoc mesh network simulator and protocol stack."""

from .core import (
    EnergyState,
    GeoCoordinate,
    NodeId,
    TransmissionStrategy,
    haversine_distance,
    residual_fraction,
)
from .engine import Engine, ScenarioError
from .phy import LinkModel, airtime, calibrate, default_link_model
from .scenarios import Scenario, builtin_scenarios, load_scenario

__all__ = [
    "EnergyState",
    "Engine",
    "GeoCoordinate",
    "LinkModel",
    "NodeId",
    "Scenario",
    "ScenarioError",
    "TransmissionStrategy",
    "airtime",
    "builtin_scenarios",
    "calibrate",
    "default_link_model",
    "haversine_distance",
    "load_scenario",
    "residual_fraction",
]

__version__ = "0.1.0"
