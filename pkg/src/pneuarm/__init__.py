"""Pneumatic serial-chain arm simulator with data-driven tracking control."""

__version__ = "0.1.0"

from .config import JointParams, PlantConfig, load_plant_config
from .plant import PneumaticPlant, SensorFrame, SimulationError

__all__ = [
    "JointParams", "PlantConfig", "load_plant_config",
    "PneumaticPlant", "SensorFrame", "SimulationError",
    "__version__",
]
