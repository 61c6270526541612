"""Random scenario generation, placement validation and scene JSON files.

Randomness comes from xoshiro256** seeded through splitmix64, implemented here
bit-for-bit so that a seed denotes the same scene on every platform.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Any, Iterable, Sequence

from .core import ModelParams, ObstacleState, Scene, VehicleState

MASK64 = (1 << 64) - 1
MODES = ("collision", "parking", "normal")
RETRY_BUDGET = 1000
PARKING_TARGET_RADIUS = 10.0
COLLISION_RADIUS_RANGE = (8.0, 15.0)
COLLISION_JITTER = math.radians(15.0)
COLLISION_LATERAL_OFFSET = 0.5
GROUP_SIZE_RANGE = (2, 4)
GROUP_TRIES = 20


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** with the usual splitmix64 seeding.

    ``random()`` takes the top 53 bits; ``normal()`` is Box-Muller using the
    cosine branch only (one normal per two uniforms, no cached spare).
    """

    def __init__(self, seed: int):
        sm = SplitMix64(seed)
        self.s = [sm.next() for _ in range(4)]

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def integer(self, lo: int, hi: int) -> int:
        """Uniform integer in ``[lo, hi]`` (inclusive)."""
        span = hi - lo + 1
        return lo + (self.next_u64() * span >> 64)

    def angle(self) -> float:
        return self.uniform(-math.pi, math.pi)

    def normal(self) -> float:
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def case_seeds(seed: int, n: int) -> list[int]:
    sm = SplitMix64(seed)
    return [sm.next() for _ in range(n)]


@dataclass(frozen=True)
class GenSpec:
    n_vehicles: int
    n_obstacles: int = 0
    mode: str = "collision"
    map_extent: float | None = None
    obstacle_radius_range: tuple[float, float] = (1.0, 3.0)
    seed: int = 0
    # Spacing rules tighter than validate(); they keep generated cases free of
    # configurations the controller cannot resolve (see README, "Scenario generation").
    min_target_separation: float = 10.0
    target_obstacle_clearance: float = 5.5
    start_obstacle_clearance: float = 3.0
    min_obstacle_gap: float = 6.0
    # half-width of the square map: max(extent_min, extent_per_sqrt_vehicle * sqrt(n_vehicles))
    extent_min: float = 50.0
    extent_per_sqrt_vehicle: float = 12.0

    def __post_init__(self) -> None:
        if self.n_vehicles < 0 or self.n_obstacles < 0:
            raise ValueError("agent counts must be non-negative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        lo, hi = self.obstacle_radius_range
        if not 0.0 < lo <= hi:
            raise ValueError("obstacle radius range must satisfy 0 < lo <= hi")
        if self.map_extent is not None and self.map_extent <= 0:
            raise ValueError("map_extent must be positive")

    @property
    def extent(self) -> float:
        if self.map_extent is not None:
            return self.map_extent
        return max(self.extent_min, self.extent_per_sqrt_vehicle * math.sqrt(self.n_vehicles))


class GenerationError(RuntimeError):
    pass


def _dist(ax: float, ay: float, bx: float, by: float) -> float:
    dx, dy = ax - bx, ay - by
    return math.sqrt(dx * dx + dy * dy)


def influence_radius(o: ObstacleState, p: ModelParams) -> float:
    """Radius around an obstacle that a target may not enter (repulsion onset at rest)."""
    return o.r + p.r_veh + p.r_c


def validate(scene: Scene, p: ModelParams | None = None) -> list[str]:
    """Placement violations of ``scene``; an empty list means it is valid."""
    p = p or ModelParams()
    out = []
    vs = scene.vehicles
    min_sep = 2.0 * p.r_veh
    for i in range(len(vs)):
        for j in range(i + 1, len(vs)):
            d = _dist(vs[i].x, vs[i].y, vs[j].x, vs[j].y)
            if d < min_sep:
                out.append(f"starts of v{i} and v{j} are {d:.3f} m apart (min {min_sep:g})")
            d = _dist(vs[i].x_tar, vs[i].y_tar, vs[j].x_tar, vs[j].y_tar)
            if d < min_sep:
                out.append(f"targets of v{i} and v{j} are {d:.3f} m apart (min {min_sep:g})")
    for k, o in enumerate(scene.obstacles):
        body = o.r + p.r_veh
        infl = influence_radius(o, p)
        for i, s in enumerate(vs):
            d = _dist(s.x, s.y, o.x, o.y)
            if d < body:
                out.append(f"start of v{i} overlaps o{k} ({d:.3f} m < {body:g})")
            d = _dist(s.x_tar, s.y_tar, o.x, o.y)
            if d < body:
                out.append(f"target of v{i} overlaps o{k} ({d:.3f} m < {body:g})")
            elif d < infl:
                out.append(f"target of v{i} inside influence of o{k} ({d:.3f} m < {infl:g})")
    return out


class _Placer:
    """Incremental rejection sampling against the scene built so far."""

    def __init__(self, spec: GenSpec, p: ModelParams):
        self.spec = spec
        self.p = p
        self.rng = Xoshiro256(spec.seed)
        self.vehicles: list[VehicleState] = []
        self.obstacles: list[ObstacleState] = []
        self.retries = 0
        self.centers: list[tuple[float, float]] = []
        self.target_sep = spec.min_target_separation

    def _spend(self, what: str) -> None:
        self.retries += 1
        if self.retries > RETRY_BUDGET:
            raise GenerationError(
                f"retry budget of {RETRY_BUDGET} exhausted while placing {what} "
                f"({len(self.vehicles)} vehicles, {len(self.obstacles)} obstacles placed; "
                f"spec={self.spec})"
            )

    def vehicle_ok(self, s: VehicleState) -> bool:
        e = self.spec.extent
        if max(abs(s.x), abs(s.y), abs(s.x_tar), abs(s.y_tar)) > e:
            return False
        for o in self.vehicles:
            if _dist(s.x, s.y, o.x, o.y) < 2.0 * self.p.r_veh:
                return False
            if _dist(s.x_tar, s.y_tar, o.x_tar, o.y_tar) < self.target_sep:
                return False
        return True

    def obstacle_ok(self, ob: ObstacleState) -> bool:
        spec = self.spec
        start_r = ob.r + max(self.p.r_veh, spec.start_obstacle_clearance)
        target_r = max(influence_radius(ob, self.p), ob.r + spec.target_obstacle_clearance)
        for s in self.vehicles:
            if _dist(s.x, s.y, ob.x, ob.y) < start_r:
                return False
            if _dist(s.x_tar, s.y_tar, ob.x, ob.y) < target_r:
                return False
        for o in self.obstacles:
            if _dist(o.x, o.y, ob.x, ob.y) < o.r + ob.r + spec.min_obstacle_gap:
                return False
        return True

    def add_vehicle(self, sample, tries: int | None = None) -> bool:
        """Place one vehicle drawn from ``sample``; False if ``tries`` draws all failed."""
        n = 0
        while True:
            s = sample()
            if self.vehicle_ok(s):
                self.vehicles.append(s)
                return True
            self._spend(f"vehicle {len(self.vehicles)}")
            n += 1
            if tries is not None and n >= tries:
                return False

    def add_obstacle(self) -> None:
        rng = self.rng
        e = self.spec.extent
        lo, hi = self.spec.obstacle_radius_range
        while True:
            ob = ObstacleState(rng.uniform(-e, e), rng.uniform(-e, e), rng.uniform(lo, hi))
            if self.obstacle_ok(ob):
                self.obstacles.append(ob)
                return
            self._spend(f"obstacle {len(self.obstacles)}")


def _group_sizes(n: int, rng: Xoshiro256) -> list[int]:
    sizes = []
    left = n
    while left > 0:
        k = min(left, rng.integer(*GROUP_SIZE_RANGE))
        sizes.append(k)
        left -= k
    if len(sizes) > 1 and sizes[-1] == 1:
        sizes.pop()
        sizes[-1] += 1
    return sizes


def _collision_vehicles(pl: _Placer) -> None:
    rng = pl.rng
    margin = COLLISION_RADIUS_RANGE[1]
    e = pl.spec.extent
    c_lim = max(e - margin, 0.0)
    for size in _group_sizes(pl.spec.n_vehicles, rng):
        while not _place_group(pl, size, c_lim):
            pass


def _place_group(pl: _Placer, size: int, c_lim: float) -> bool:
    """Place ``size`` vehicles crossing one sampled center; roll back if any cannot fit."""
    rng = pl.rng
    cx = rng.uniform(-c_lim, c_lim)
    cy = rng.uniform(-c_lim, c_lim)
    base = rng.angle()
    placed = len(pl.vehicles)
    # pairs cross at right angles; larger groups come from all around
    step = math.pi / 2 if size == 2 else 2 * math.pi / size
    for k in range(size):
        spread = base + k * step

        def sample(spread=spread):
            phi = spread + rng.uniform(-COLLISION_JITTER, COLLISION_JITTER)
            ux, uy = math.cos(phi), math.sin(phi)
            rho = COLLISION_LATERAL_OFFSET * math.sqrt(rng.random())
            ang = rng.angle()
            px, py = cx + rho * math.cos(ang), cy + rho * math.sin(ang)
            r_start = rng.uniform(*COLLISION_RADIUS_RANGE)
            r_goal = rng.uniform(*COLLISION_RADIUS_RANGE)
            # start and target on opposite sides of the crossing point
            return VehicleState(
                px - r_start * ux, py - r_start * uy, rng.angle(), 0.0,
                px + r_goal * ux, py + r_goal * uy, rng.angle(),
            )

        if not pl.add_vehicle(sample, GROUP_TRIES):
            del pl.vehicles[placed:]
            return False
    pl.centers.append((cx, cy))
    return True


def _parking_vehicles(pl: _Placer) -> None:
    rng = pl.rng
    e = pl.spec.extent

    def sample():
        x, y = rng.uniform(-e, e), rng.uniform(-e, e)
        rho = PARKING_TARGET_RADIUS * math.sqrt(rng.random())
        ang = rng.angle()
        return VehicleState(x, y, rng.angle(), 0.0, x + rho * math.cos(ang), y + rho * math.sin(ang), rng.angle())

    for _ in range(pl.spec.n_vehicles):
        pl.add_vehicle(sample)


def _normal_vehicles(pl: _Placer) -> None:
    rng = pl.rng
    e = pl.spec.extent

    def sample():
        return VehicleState(
            rng.uniform(-e, e), rng.uniform(-e, e), rng.angle(), 0.0,
            rng.uniform(-e, e), rng.uniform(-e, e), rng.angle(),
        )

    for _ in range(pl.spec.n_vehicles):
        pl.add_vehicle(sample)


def generate(spec: GenSpec, p: ModelParams | None = None) -> Scene:
    """Sample one scene; the same spec (seed included) always yields the same scene.

    Vehicles are placed first (by mode), then obstacles uniformly over the map.
    Raises :class:`GenerationError` when the retry budget runs out.
    """
    return generate_with_centers(spec, p)[0]


def generate_with_centers(
    spec: GenSpec, p: ModelParams | None = None
) -> tuple[Scene, list[tuple[float, float]]]:
    """Like :func:`generate`, also returning the collision centers (empty outside collision mode)."""
    p = p or ModelParams()
    pl = _Placer(spec, p)
    {"collision": _collision_vehicles, "parking": _parking_vehicles, "normal": _normal_vehicles}[spec.mode](pl)
    for _ in range(spec.n_obstacles):
        pl.add_obstacle()
    scene = Scene(tuple(pl.vehicles), tuple(pl.obstacles), t=0)
    problems = validate(scene, p)
    if problems:
        raise GenerationError("generated scene failed validation: " + "; ".join(problems))
    return scene, pl.centers


def generate_batch(spec: GenSpec, cases: int, p: ModelParams | None = None) -> list[Scene]:
    """``cases`` scenes whose seeds are derived from ``spec.seed``."""
    return [generate(replace(spec, seed=s), p) for s in case_seeds(spec.seed, cases)]


# -- JSON -------------------------------------------------------------------------

VEHICLE_KEYS = ("x", "y", "theta", "v", "x_tar", "y_tar", "theta_tar")
OBSTACLE_KEYS = ("x", "y", "r")


class SceneFormatError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def scene_to_dict(scene: Scene) -> dict[str, Any]:
    return {
        "vehicles": [{k: getattr(s, k) for k in VEHICLE_KEYS} for s in scene.vehicles],
        "obstacles": [{k: getattr(o, k) for k in OBSTACLE_KEYS} for o in scene.obstacles],
    }


def _number(obj: Any, key: str, path: str, default: float | None = None) -> float:
    if key not in obj:
        if default is not None:
            return default
        raise SceneFormatError(f"{path}.{key}", "missing field")
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneFormatError(f"{path}.{key}", f"expected a number, got {value!r}")
    return float(value)


def scene_from_dict(data: Any, path: str = "$") -> Scene:
    if not isinstance(data, dict):
        raise SceneFormatError(path, "expected an object")
    vehicles = []
    for i, item in enumerate(data.get("vehicles", [])):
        where = f"{path}.vehicles[{i}]"
        if not isinstance(item, dict):
            raise SceneFormatError(where, "expected an object")
        values = {k: _number(item, k, where, 0.0 if k == "v" else None) for k in VEHICLE_KEYS}
        try:
            vehicles.append(VehicleState(**values))
        except ValueError as exc:
            raise SceneFormatError(where, str(exc)) from exc
    obstacles = []
    for k, item in enumerate(data.get("obstacles", [])):
        where = f"{path}.obstacles[{k}]"
        if not isinstance(item, dict):
            raise SceneFormatError(where, "expected an object")
        try:
            obstacles.append(ObstacleState(**{key: _number(item, key, where) for key in OBSTACLE_KEYS}))
        except ValueError as exc:
            if isinstance(exc, SceneFormatError):
                raise
            raise SceneFormatError(where, str(exc)) from exc
    return Scene(tuple(vehicles), tuple(obstacles), t=0)


def save(scene: Scene) -> bytes:
    return json.dumps(scene_to_dict(scene)).encode("utf-8")


def _parse(raw: "bytes | str") -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SceneFormatError("$", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def load(raw: "bytes | str") -> Scene:
    return scene_from_dict(_parse(raw))


def save_batch(scenes: Iterable[Scene]) -> bytes:
    return json.dumps([scene_to_dict(s) for s in scenes]).encode("utf-8")


def load_batch(raw: "bytes | str") -> list[Scene]:
    data = _parse(raw)
    if not isinstance(data, list):
        raise SceneFormatError("$", "a batch file must be a JSON array of scenes")
    return [scene_from_dict(item, f"$[{i}]") for i, item in enumerate(data)]


def batch_filename(n_vehicles: int, n_obstacles: int, mode: str, seed: int) -> str:
    return f"scenes_{n_vehicles}v_{n_obstacles}o_{mode}_{seed}.json"


__all__: Sequence[str] = [
    "GenSpec",
    "GenerationError",
    "SceneFormatError",
    "Xoshiro256",
    "batch_filename",
    "case_seeds",
    "generate",
    "generate_batch",
    "generate_with_centers",
    "load",
    "load_batch",
    "save",
    "save_batch",
    "validate",
]
