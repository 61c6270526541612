"""Multi-vehicle navigation with dynamic velocity vector fields."""

from .core import ControlCommand, ModelParams, ObstacleState, Scene, VehicleState, wrap_angle

__version__ = "0.1.0"

__all__ = ["ControlCommand", "ModelParams", "ObstacleState", "Scene", "VehicleState", "wrap_angle"]
