"""Deterministic open-city simulation service and embodied-agent benchmark."""

__version__ = "0.1.0"

from .citygen import CityParams, generate_city
from .engine import AgentSpec, ControlCommand, World
from .planning import shortest_path
from .scene import SceneGraph, validate_scene
from .scenefile import load_scene, save_scene

__all__ = [
    "CityParams",
    "generate_city",
    "AgentSpec",
    "ControlCommand",
    "World",
    "shortest_path",
    "SceneGraph",
    "validate_scene",
    "load_scene",
    "save_scene",
    "__version__",
]
