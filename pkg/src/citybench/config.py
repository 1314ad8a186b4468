"""Service configuration: file schema, env overrides, default agent roster."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .citygen import CityParams, generate_city
from .engine import AgentSpec
from .geometry import polyline_length, polyline_point
from .scene import SceneGraph
from .scenefile import load_scene

BIND_ENV = "CITYBENCH_BIND"  # "host:port", overrides file and defaults


class ConfigError(ValueError):
    pass


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8411
    max_agents: int = 8
    clock: str = "lockstep"  # lockstep | realtime
    scene_path: str | None = None
    seed: int = 7
    city: CityParams = field(default_factory=CityParams)
    drones: int = 4
    vehicles: int = 4
    vehicles_per_km: float = 5.0
    pedestrians_per_km: float = 10.0
    idle_timeout: float = 300.0
    camera_width: int = 320
    camera_height: int = 240
    camera_hfov_deg: float = 90.0
    imu_sigma: float = 0.0
    console_dir: str | None = None

    def validate(self) -> None:
        if self.max_agents < 1:
            raise ConfigError("max_agents must be >= 1")
        if self.clock not in ("lockstep", "realtime"):
            raise ConfigError("clock must be 'lockstep' or 'realtime'")
        if self.drones < 0 or self.vehicles < 0:
            raise ConfigError("agent counts must be >= 0")
        if self.drones + self.vehicles > self.max_agents:
            raise ConfigError("roster exceeds max_agents")
        if self.idle_timeout <= 0:
            raise ConfigError("idle_timeout must be positive")
        self.city.validate()


_CITY_KEYS = ("rows", "cols", "block_size", "building_density", "street_width",
              "lanes_per_direction", "speed_limit", "origin_anchor")
_TOP_KEYS = ("host", "port", "max_agents", "clock", "scene_path", "seed",
             "drones", "vehicles", "vehicles_per_km", "pedestrians_per_km",
             "idle_timeout", "camera_width", "camera_height", "camera_hfov_deg",
             "imu_sigma", "console_dir", "city")


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ServiceConfig:
    """File < explicit overrides < CITYBENCH_BIND env var."""
    cfg = ServiceConfig()
    doc = {}
    if path is not None:
        try:
            with open(path) as f:
                doc = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError("config root must be an object")
    merged = dict(doc)
    for k, v in (overrides or {}).items():
        if v is not None:
            merged[k] = v
    for key in merged:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    city_doc = merged.pop("city", None)
    if city_doc is not None:
        if not isinstance(city_doc, dict):
            raise ConfigError("'city' must be an object")
        bad = set(city_doc) - set(_CITY_KEYS)
        if bad:
            raise ConfigError(f"unknown city keys {sorted(bad)}")
        kwargs = dict(city_doc)
        if "origin_anchor" in kwargs:
            kwargs["origin_anchor"] = tuple(kwargs["origin_anchor"])
        cfg.city = CityParams(**kwargs)
    for k, v in merged.items():
        setattr(cfg, k, v)
    bind = os.environ.get(BIND_ENV)
    if bind:
        host, sep, port = bind.rpartition(":")
        if not sep or not port.isdigit():
            raise ConfigError(f"{BIND_ENV} must look like 'host:port'")
        cfg.host = host or cfg.host
        cfg.port = int(port)
    cfg.validate()
    return cfg


def build_scene(cfg: ServiceConfig) -> SceneGraph:
    if cfg.scene_path:
        return load_scene(cfg.scene_path)
    return generate_city(cfg.seed, cfg.city)


def make_roster(scene: SceneGraph, drones: int, vehicles: int) -> list[AgentSpec]:
    """Spread spawns along street centerlines; drones hover at 30 m."""
    streets = sorted(scene.streets, key=lambda s: s.id)
    if not streets:
        raise ConfigError("scene has no streets to spawn agents on")
    roster = []
    total = drones + vehicles
    for i in range(total):
        street = streets[i % len(streets)]
        length = polyline_length(street.centerline)
        # different fraction per lap over the street list avoids stacking
        frac = 0.2 + 0.6 * ((i // len(streets)) % 5) / 5.0
        (x, y), (tx, ty) = polyline_point(street.centerline, frac * length)
        yaw = math.atan2(ty, tx)
        if i < drones:
            roster.append(AgentSpec(f"drone-{i}", "drone", (x, y, 30.0), yaw))
        else:
            k = i - drones
            roster.append(AgentSpec(f"vehicle-{k}", "vehicle", (x, y, 0.0), yaw))
    return roster
