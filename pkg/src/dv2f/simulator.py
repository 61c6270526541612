"""Closed-loop lockstep rollouts, collision detection and trajectory files."""

from __future__ import annotations

import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterator, Sequence

import numpy as np

from .controller import ControlOutput, all_neighbors, neighbor_filter, vehicle_control_k
from .core import (
    P_BETA, P_DT, P_EPSO, P_EPSP, P_GAMMA,
    ControlCommand,
    ModelParams,
    Scene,
    VehicleState,
    kernel,
    obstacle_id,
    vehicle_id,
    wrap_angle,
    wrap_k,
)
from .field import DIAG_FIELDS, N_DIAG, FieldDiagnostics
from .kinematics import step_k
from .scenario import validate

PARKED_SPEED = 0.05
TRAJECTORY_DIGITS = 9

CollisionEvent = tuple[int, str, str]


class InvalidSceneError(ValueError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid scene: " + "; ".join(self.violations))


def is_parked(s: VehicleState, p: ModelParams) -> bool:
    dx, dy = s.x_tar - s.x, s.y_tar - s.y
    return math.sqrt(dx * dx + dy * dy) <= p.eps_p and abs(wrap_angle(s.theta - s.theta_tar)) <= p.eps_o


def detect_collisions(scene: Scene, p: ModelParams) -> list[tuple[str, str]]:
    """Overlapping pairs (strict inequality); vehicle pairs first, then vehicle-obstacle pairs."""
    out = []
    vs = scene.vehicles
    for i in range(len(vs)):
        for j in range(i + 1, len(vs)):
            dx, dy = vs[i].x - vs[j].x, vs[i].y - vs[j].y
            if math.sqrt(dx * dx + dy * dy) < 2.0 * p.r_veh:
                out.append((vehicle_id(i), vehicle_id(j)))
    for i, s in enumerate(vs):
        for k, o in enumerate(scene.obstacles):
            dx, dy = s.x - o.x, s.y - o.y
            if math.sqrt(dx * dx + dy * dy) < p.r_veh + o.r:
                out.append((vehicle_id(i), obstacle_id(k)))
    return out


@kernel
def _collisions_k(states, obstacles, r_veh, out):
    """Write (t, i, j, kind) rows into ``out`` (kind 0: vehicle j, 1: obstacle j); returns the count."""
    m = 0
    n = states.shape[1]
    for t in range(states.shape[0]):
        for i in range(n):
            for j in range(i + 1, n):
                dx = states[t, i, 0] - states[t, j, 0]
                dy = states[t, i, 1] - states[t, j, 1]
                if math.sqrt(dx * dx + dy * dy) < 2.0 * r_veh:
                    if m == out.shape[0]:
                        return -1
                    out[m, 0] = t
                    out[m, 1] = i
                    out[m, 2] = j
                    out[m, 3] = 0
                    m += 1
        for i in range(n):
            for k in range(obstacles.shape[0]):
                dx = states[t, i, 0] - obstacles[k, 0]
                dy = states[t, i, 1] - obstacles[k, 1]
                if math.sqrt(dx * dx + dy * dy) < r_veh + obstacles[k, 2]:
                    if m == out.shape[0]:
                        return -1
                    out[m, 0] = t
                    out[m, 1] = i
                    out[m, 2] = k
                    out[m, 3] = 1
                    m += 1
    return m


def collision_events(states: np.ndarray, obstacles: np.ndarray, r_veh: float) -> list[CollisionEvent]:
    """:func:`detect_collisions` over every frame of a rollout, as (step, agent, agent) tuples."""
    states = np.ascontiguousarray(states, dtype=np.float64)
    obstacles = np.ascontiguousarray(obstacles, dtype=np.float64).reshape(-1, 3)
    size = 1024
    while True:
        out = np.empty((size, 4), dtype=np.int64)
        m = _collisions_k(states, obstacles, float(r_veh), out)
        if m >= 0:
            break
        size *= 8
    ids = (vehicle_id, obstacle_id)
    return [(int(t), vehicle_id(int(i)), ids[kind](int(j))) for t, i, j, kind in out[:m]]


@kernel
def _all_parked_k(veh, prm, park_speed):
    for i in range(veh.shape[0]):
        dx = veh[i, 4] - veh[i, 0]
        dy = veh[i, 5] - veh[i, 1]
        if math.sqrt(dx * dx + dy * dy) > prm[P_EPSP]:
            return False
        if abs(wrap_k(veh[i, 2] - veh[i, 6])) > prm[P_EPSO]:
            return False
        if abs(veh[i, 3]) >= park_speed:
            return False
    return True


@kernel
def rollout_k(veh0, obs, prm, horizon, full_sum, park_speed, states, cmds, diag, dirs):
    """Fill the preallocated buffers; returns the number of executed steps."""
    n = veh0.shape[0]
    states[0] = veh0
    dirs[0, :] = 1.0
    scratch = np.empty((n + obs.shape[0], 3))
    t = 0
    while t < horizon:
        cur = states[t]
        if _all_parked_k(cur, prm, park_speed):
            break
        for i in range(n):
            pedal, steer, nd = vehicle_control_k(cur, obs, i, dirs[t, i], prm, full_sum, scratch, diag[t, i])
            cmds[t, i, 0] = pedal
            cmds[t, i, 1] = steer
            dirs[t + 1, i] = nd
        nxt = states[t + 1]
        for i in range(n):
            x, y, th, v = step_k(
                cur[i, 0], cur[i, 1], cur[i, 2], cur[i, 3], cmds[t, i, 0], cmds[t, i, 1],
                prm[P_DT], prm[P_BETA], prm[P_GAMMA],
            )
            nxt[i, 0] = x
            nxt[i, 1] = y
            nxt[i, 2] = th
            nxt[i, 3] = v
            nxt[i, 4] = cur[i, 4]
            nxt[i, 5] = cur[i, 5]
            nxt[i, 6] = cur[i, 6]
        t += 1
    return t


@dataclass
class Rollout:
    """Record of one simulation.

    ``states[t]`` is the scene at step ``t`` (``terminated_at + 1`` frames);
    ``commands[t]`` and ``diagnostics[t]`` were computed from ``states[t]`` and
    produce ``states[t + 1]``.
    """

    params: ModelParams
    obstacles: np.ndarray
    states: np.ndarray
    commands: np.ndarray
    diagnostics: np.ndarray
    prev_dirs: np.ndarray
    collision_events: list[CollisionEvent] = field(default_factory=list)
    terminated_at: int = 0
    full_sum: bool = False
    compute_time_s: float = 0.0

    @property
    def n_vehicles(self) -> int:
        return self.states.shape[1]

    @property
    def n_obstacles(self) -> int:
        return self.obstacles.shape[0]

    @property
    def all_parked(self) -> bool:
        return all(is_parked(s, self.params) for s in self.scene(self.terminated_at).vehicles)

    def scene(self, t: int) -> Scene:
        return Scene.from_arrays(self.states[t], self.obstacles, t=t)

    @property
    def final_scene(self) -> Scene:
        return self.scene(self.terminated_at)

    def control_output(self, t: int) -> ControlOutput:
        scene = self.scene(t)
        nbrs = all_neighbors if self.full_sum else (lambda sc, i: neighbor_filter(sc, i, self.params))
        return ControlOutput(
            commands=tuple(ControlCommand(float(c[0]), float(c[1])) for c in self.commands[t]),
            diagnostics=tuple(
                FieldDiagnostics.from_row(self.diagnostics[t, i], nbrs(scene, i)) for i in range(self.n_vehicles)
            ),
            prev_dirs=tuple(float(d) for d in self.prev_dirs[t + 1]),
        )

    def frames(self) -> Iterator[tuple[Scene, ControlOutput]]:
        for t in range(self.terminated_at):
            yield self.scene(t), self.control_output(t)


def validate_or_raise(scene: Scene, p: ModelParams) -> None:
    violations = validate(scene, p)
    if violations:
        raise InvalidSceneError(violations)


def rollout(scene0: Scene, p: ModelParams, *, full_sum: bool = False, check: bool = True) -> Rollout:
    """Run the controller in closed loop for up to ``p.horizon`` steps.

    Stops early once every vehicle is parked and slower than ``PARKED_SPEED``.
    Collisions are recorded, not resolved: vehicles pass through each other.
    """
    if check:
        validate_or_raise(scene0, p)
    veh0 = scene0.vehicle_array()
    obs = scene0.obstacle_array()
    return rollout_arrays(veh0, obs, p, full_sum=full_sum)


def rollout_arrays(veh0: np.ndarray, obs: np.ndarray, p: ModelParams, *, full_sum: bool = False) -> Rollout:
    n = veh0.shape[0]
    h = p.horizon
    states = np.empty((h + 1, n, 7))
    cmds = np.empty((h, n, 2))
    diag = np.empty((h, n, N_DIAG))
    dirs = np.empty((h + 1, n))
    obs = np.ascontiguousarray(obs, dtype=np.float64).reshape(-1, 3)
    veh0 = np.ascontiguousarray(veh0, dtype=np.float64)
    prm = p.as_array()
    t0 = time.perf_counter()
    steps = rollout_k(veh0, obs, prm, h, full_sum, PARKED_SPEED, states, cmds, diag, dirs)
    elapsed = time.perf_counter() - t0
    states = states[: steps + 1].copy()
    return Rollout(
        params=p,
        obstacles=obs,
        states=states,
        commands=cmds[:steps].copy(),
        diagnostics=diag[:steps].copy(),
        prev_dirs=dirs[: steps + 1].copy(),
        collision_events=collision_events(states, obs, p.r_veh),
        terminated_at=int(steps),
        full_sum=full_sum,
        compute_time_s=elapsed,
    )


# -- trajectory files -----------------------------------------------------------


def _num(x: float) -> float:
    return float(f"{x:.{TRAJECTORY_DIGITS}g}")


def trajectory_records(r: Rollout) -> Iterator[dict]:
    """Header record followed by one record per frame."""
    first = r.states[0] if len(r.states) else np.zeros((0, 7))
    yield {
        "type": "header",
        "params": r.params.to_dict(),
        "n_vehicles": r.n_vehicles,
        "terminated_at": r.terminated_at,
        "full_sum": r.full_sum,
        "obstacles": [{"x": _num(o[0]), "y": _num(o[1]), "r": _num(o[2])} for o in r.obstacles],
        "targets": [{"x_tar": _num(s[4]), "y_tar": _num(s[5]), "theta_tar": _num(s[6])} for s in first],
    }
    by_step: dict[int, list[list[str]]] = {}
    for t, a, b in r.collision_events:
        by_step.setdefault(t, []).append([a, b])
    i_vhat = DIAG_FIELDS.index("v_hat")
    i_that = DIAG_FIELDS.index("theta_hat")
    i_f = DIAG_FIELDS.index("forbid_forward")
    i_b = DIAG_FIELDS.index("forbid_backward")
    for t in range(r.terminated_at + 1):
        vehicles = []
        for i in range(r.n_vehicles):
            s = r.states[t, i]
            rec = {"x": _num(s[0]), "y": _num(s[1]), "theta": _num(s[2]), "v": _num(s[3])}
            if t < r.terminated_at:
                c = r.commands[t, i]
                d = r.diagnostics[t, i]
                rec.update(
                    pedal=_num(c[0]), steer=_num(c[1]), v_hat=_num(d[i_vhat]), theta_hat=_num(d[i_that]),
                    F=bool(d[i_f]), B=bool(d[i_b]),
                )
            else:
                rec.update(pedal=None, steer=None, v_hat=None, theta_hat=None, F=None, B=None)
            vehicles.append(rec)
        yield {"type": "step", "t": t, "vehicles": vehicles, "collisions": by_step.get(t, [])}


def write_trajectory(r: Rollout, fh: IO[str]) -> None:
    for rec in trajectory_records(r):
        fh.write(json.dumps(rec, separators=(",", ":")))
        fh.write("\n")


def dumps_trajectory(r: Rollout) -> str:
    buf = io.StringIO()
    write_trajectory(r, buf)
    return buf.getvalue()


class TrajectoryFormatError(ValueError):
    pass


def read_trajectory(source: "str | Path | IO[str]") -> Rollout:
    """Rebuild a :class:`Rollout` from a trajectory file.

    Only what the file carries is restored: states, commands, ``v_hat``,
    ``theta_hat`` and the forbidden flags; other diagnostics are NaN.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = source.read().splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise TrajectoryFormatError("empty trajectory file")
    try:
        recs = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as exc:
        raise TrajectoryFormatError(f"line {exc.lineno}: {exc.msg}") from exc
    header = recs[0]
    if not isinstance(header, dict) or header.get("type") != "header":
        raise TrajectoryFormatError("first record must be the header")
    try:
        p = ModelParams.from_dict(header["params"])
        n = int(header["n_vehicles"])
        obstacles = np.array([[o["x"], o["y"], o["r"]] for o in header["obstacles"]], dtype=np.float64).reshape(-1, 3)
        targets = np.array(
            [[t["x_tar"], t["y_tar"], t["theta_tar"]] for t in header["targets"]], dtype=np.float64
        ).reshape(-1, 3)
        steps = recs[1:]
        n_frames = len(steps)
        states = np.zeros((n_frames, n, 7))
        cmds = np.zeros((max(n_frames - 1, 0), n, 2))
        diag = np.full((max(n_frames - 1, 0), n, N_DIAG), np.nan)
        events: list[CollisionEvent] = []
        for t, rec in enumerate(steps):
            if rec.get("type") != "step" or rec.get("t") != t:
                raise TrajectoryFormatError(f"record {t + 1}: expected step {t}")
            if len(rec["vehicles"]) != n:
                raise TrajectoryFormatError(f"step {t}: expected {n} vehicles")
            for i, vr in enumerate(rec["vehicles"]):
                states[t, i, :4] = (vr["x"], vr["y"], vr["theta"], vr["v"])
                states[t, i, 4:] = targets[i]
                if t < n_frames - 1:
                    cmds[t, i] = (vr["pedal"], vr["steer"])
                    diag[t, i, DIAG_FIELDS.index("v_hat")] = vr["v_hat"]
                    diag[t, i, DIAG_FIELDS.index("theta_hat")] = vr["theta_hat"]
                    diag[t, i, DIAG_FIELDS.index("forbid_forward")] = float(vr["F"])
                    diag[t, i, DIAG_FIELDS.index("forbid_backward")] = float(vr["B"])
            for a, b in rec["collisions"]:
                events.append((t, a, b))
    except (KeyError, TypeError, IndexError) as exc:
        raise TrajectoryFormatError(f"malformed trajectory: missing or bad field {exc}") from exc
    return Rollout(
        params=p,
        obstacles=obstacles,
        states=states,
        commands=cmds,
        diagnostics=diag,
        prev_dirs=np.full((n_frames, n), np.nan),
        collision_events=events,
        terminated_at=max(n_frames - 1, 0),
        full_sum=bool(header.get("full_sum", False)),
    )


__all__ = [
    "InvalidSceneError",
    "PARKED_SPEED",
    "Rollout",
    "detect_collisions",
    "dumps_trajectory",
    "is_parked",
    "read_trajectory",
    "rollout",
    "rollout_arrays",
    "write_trajectory",
]

