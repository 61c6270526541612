"""Domain types, model parameters and small vector helpers shared by every module."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Any, Mapping

import numba
import numpy as np

Vec2 = tuple[float, float]

kernel = numba.njit(cache=True, nogil=True)

TWO_PI = 2.0 * math.pi
DEGENERATE_NORM = 1e-12


def wrap_angle(a: float) -> float:
    """Reduce an angle to the half-open interval (-pi, pi]."""
    if not math.isfinite(a):
        raise ValueError(f"cannot wrap non-finite angle {a!r}")
    if -math.pi < a <= math.pi:
        return a
    r = math.fmod(a + math.pi, TWO_PI)
    if r <= 0.0:
        r += TWO_PI
    return r - math.pi


def unit(v: Vec2) -> tuple[Vec2, bool]:
    """Normalize ``v``.

    Returns ``(u, degenerate)``. Vectors shorter than ``DEGENERATE_NORM`` have
    no usable direction; they map to the zero vector with ``degenerate=True``.
    """
    n = math.sqrt(v[0] * v[0] + v[1] * v[1])
    if n < DEGENERATE_NORM:
        return (0.0, 0.0), True
    return (v[0] / n, v[1] / n), False


@kernel
def wrap_k(a):
    if -math.pi < a <= math.pi:
        return a
    r = np.fmod(a + math.pi, TWO_PI)
    if r <= 0.0:
        r += TWO_PI
    return r - math.pi


@kernel
def unit_k(x, y):
    n = math.sqrt(x * x + y * y)
    if n < DEGENERATE_NORM:
        return 0.0, 0.0, True
    return x / n, y / n, False


@kernel
def sgn_k(a):
    return 1.0 if a >= 0.0 else -1.0


@kernel
def heaviside_k(a):
    return 1.0 if a > 0.0 else 0.0


def sgn(a: float) -> float:
    """+1 for a >= 0, -1 otherwise (zero counts as positive)."""
    return 1.0 if a >= 0.0 else -1.0


def heaviside(a: float) -> float:
    """1 for a > 0, 0 otherwise."""
    return 1.0 if a > 0.0 else 0.0


def dot(a: Vec2, b: Vec2) -> float:
    return a[0] * b[0] + a[1] * b[1]


def norm(a: Vec2) -> float:
    return math.sqrt(a[0] * a[0] + a[1] * a[1])


def heading(theta: float) -> Vec2:
    return (math.cos(theta), math.sin(theta))


def _require_finite(obj: Any) -> None:
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, float) and not math.isfinite(value):
            raise ValueError(f"{type(obj).__name__}.{f.name} must be finite, got {value!r}")


@dataclass(frozen=True)
class VehicleState:
    """Pose, speed and target pose of one vehicle. Angles are kept wrapped."""

    x: float
    y: float
    theta: float
    v: float
    x_tar: float
    y_tar: float
    theta_tar: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "theta", "v", "x_tar", "y_tar", "theta_tar"):
            object.__setattr__(self, name, float(getattr(self, name)))
        _require_finite(self)
        object.__setattr__(self, "theta", wrap_angle(self.theta))
        object.__setattr__(self, "theta_tar", wrap_angle(self.theta_tar))

    @property
    def position(self) -> Vec2:
        return (self.x, self.y)

    @property
    def target(self) -> Vec2:
        return (self.x_tar, self.y_tar)

    def as_tuple(self) -> tuple[float, ...]:
        return (self.x, self.y, self.theta, self.v, self.x_tar, self.y_tar, self.theta_tar)

    def replace(self, **changes: float) -> "VehicleState":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class ObstacleState:
    """Static obstacle as a circumscribing circle."""

    x: float
    y: float
    r: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "r"):
            object.__setattr__(self, name, float(getattr(self, name)))
        _require_finite(self)
        if self.r <= 0.0:
            raise ValueError(f"obstacle radius must be positive, got {self.r}")

    @property
    def position(self) -> Vec2:
        return (self.x, self.y)


@dataclass(frozen=True)
class ControlCommand:
    """Pedal acceleration and steering angle.

    Build through :meth:`clamped` to enforce the actuator limits.
    """

    pedal: float
    steer: float

    @classmethod
    def clamped(cls, pedal: float, steer: float, params: "ModelParams") -> "ControlCommand":
        return cls(
            pedal=min(max(pedal, -params.pedal_max), params.pedal_max),
            steer=min(max(steer, -params.steer_max), params.steer_max),
        )


# Positions in the flat float array handed to compiled kernels.
P_DT, P_BETA, P_GAMMA, P_PEDAL, P_STEER, P_VD, P_RP, P_RVEH, P_RC, P_EPSP, P_EPSO, P_EPSC, P_EPSV = range(13)


@dataclass(frozen=True)
class ModelParams:
    """Kinematic and field hyperparameters (SI units, angles in radians)."""

    dt: float = 0.2
    beta: float = 0.99
    gamma: float = 0.5
    pedal_max: float = 1.0
    steer_max: float = 0.8
    v_d: float = 2.5
    r_p: float = 5.0
    r_veh: float = 1.5
    r_c: float = 1.5
    eps_p: float = 0.25
    eps_o: float = 0.2
    eps_c: float = 1.0
    eps_v: float = 1e-3
    horizon: int = 500

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError(f"ModelParams.{f.name} must be numeric, got {value!r}")
            if not math.isfinite(value):
                raise ValueError(f"ModelParams.{f.name} must be finite")
        if not isinstance(self.horizon, int):
            if float(self.horizon).is_integer():
                object.__setattr__(self, "horizon", int(self.horizon))
            else:
                raise ValueError("ModelParams.horizon must be an integer")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("ModelParams.beta must lie in (0, 1]")
        # r_c = 0 is allowed for the sensitivity sweep
        nonneg = {"r_c"}
        for f in dataclasses.fields(self):
            if f.name == "beta":
                continue
            value = getattr(self, f.name)
            if f.name in nonneg:
                if value < 0:
                    raise ValueError(f"ModelParams.{f.name} must be >= 0")
            elif value <= 0:
                raise ValueError(f"ModelParams.{f.name} must be > 0")

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    def to_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelParams":
        unknown = set(data) - set(cls.field_names())
        if unknown:
            raise ValueError(f"unknown ModelParams field(s): {sorted(unknown)}")
        return cls(**dict(data))

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("ModelParams JSON must be an object")
        return cls.from_dict(data)

    def with_overrides(self, **changes: Any) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.dt, self.beta, self.gamma, self.pedal_max, self.steer_max, self.v_d,
                self.r_p, self.r_veh, self.r_c, self.eps_p, self.eps_o, self.eps_c, self.eps_v,
            ],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class Scene:
    """Snapshot of all agents at step ``t``; vehicle ``i`` keeps index ``i``."""

    vehicles: tuple[VehicleState, ...] = ()
    obstacles: tuple[ObstacleState, ...] = ()
    t: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    @property
    def n_vehicles(self) -> int:
        return len(self.vehicles)

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)

    def vehicle_array(self) -> np.ndarray:
        out = np.empty((len(self.vehicles), 7), dtype=np.float64)
        for i, s in enumerate(self.vehicles):
            out[i] = s.as_tuple()
        return out

    def obstacle_array(self) -> np.ndarray:
        out = np.empty((len(self.obstacles), 3), dtype=np.float64)
        for k, o in enumerate(self.obstacles):
            out[k] = (o.x, o.y, o.r)
        return out

    @classmethod
    def from_arrays(cls, vehicles: np.ndarray, obstacles: np.ndarray, t: int = 0) -> "Scene":
        return cls(
            vehicles=tuple(VehicleState(*map(float, row)) for row in vehicles),
            obstacles=tuple(ObstacleState(*map(float, row)) for row in obstacles),
            t=t,
        )


def vehicle_id(j: int) -> str:
    return f"v{j}"


def obstacle_id(k: int) -> str:
    return f"o{k}"


def parse_agent_id(agent: str) -> tuple[str, int]:
    """Split ``"v3"`` / ``"o1"`` into ``("vehicle", 3)`` / ``("obstacle", 1)``."""
    kinds = {"v": "vehicle", "o": "obstacle"}
    if len(agent) < 2 or agent[0] not in kinds or not agent[1:].isdigit():
        raise ValueError(f"malformed agent id {agent!r}")
    return kinds[agent[0]], int(agent[1:])


__all__ = [
    "ControlCommand",
    "ModelParams",
    "ObstacleState",
    "Scene",
    "Vec2",
    "VehicleState",
    "dot",
    "heading",
    "heaviside",
    "norm",
    "obstacle_id",
    "parse_agent_id",
    "sgn",
    "unit",
    "vehicle_id",
    "wrap_angle",
]
