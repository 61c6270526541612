"""One control step for every vehicle: neighbor filtering, field evaluation,
reachability clamping and inversion to steering/pedal commands.

Two routes produce the same numbers. :func:`compute_vehicle_control` composes the
public field/kinematics functions one vehicle at a time; :func:`compute_scene_controls`
runs the compiled kernel over the whole scene. Both visit neighbors in the same
order (obstacles by index, then vehicles by index) so their sums agree bitwise.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    P_BETA, P_DT, P_EPSC, P_EPSO, P_EPSP, P_EPSV, P_GAMMA, P_PEDAL, P_RC, P_RP, P_RVEH, P_STEER, P_VD,
    ControlCommand,
    ModelParams,
    Scene,
    kernel,
    obstacle_id,
    sgn,
    sgn_k,
    vehicle_id,
)
from .field import (
    N_DIAG,
    FieldDiagnostics,
    avoidance_component_k,
    collision_component,
    forbidden_flags,
    ideal_orientation_k,
    ideal_speed,
    ideal_speed_k,
    parking_speed,
    parking_speed_k,
    predicted_next_position,
    predicted_next_position_k,
    target_component,
    target_component_k,
)
from .kinematics import (
    clamp_orientation_k,
    clamp_speed_k,
    clamp_to_reachable,
    invert_controls,
    invert_k,
    reachable_set,
    wedge_half_width_k,
)


@dataclass(frozen=True)
class ControlOutput:
    commands: tuple[ControlCommand, ...]
    diagnostics: tuple[FieldDiagnostics, ...]
    prev_dirs: tuple[float, ...]


def vehicle_threshold(r_veh: float, r_c: float, v_i: float, v_j: float) -> float:
    return 2.0 * r_veh + abs(v_i) + abs(v_j) + 2.0 * r_c


def obstacle_threshold(r_obs: float, r_veh: float, r_c: float, v_i: float) -> float:
    return r_obs + r_veh + abs(v_i) + 2.0 * r_c


def neighbor_filter(scene: Scene, i: int, p: ModelParams) -> list[str]:
    """Agents close enough to vehicle ``i`` (current positions) to be considered.

    Obstacles come first, then vehicles, each in index order.
    """
    ego = scene.vehicles[i]
    out = []
    for k, o in enumerate(scene.obstacles):
        dx, dy = o.x - ego.x, o.y - ego.y
        if math.sqrt(dx * dx + dy * dy) <= obstacle_threshold(o.r, p.r_veh, p.r_c, ego.v):
            out.append(obstacle_id(k))
    for j, other in enumerate(scene.vehicles):
        if j == i:
            continue
        dx, dy = other.x - ego.x, other.y - ego.y
        if math.sqrt(dx * dx + dy * dy) <= vehicle_threshold(p.r_veh, p.r_c, ego.v, other.v):
            out.append(vehicle_id(j))
    return out


def all_neighbors(scene: Scene, i: int) -> list[str]:
    return [obstacle_id(k) for k in range(scene.n_obstacles)] + [
        vehicle_id(j) for j in range(scene.n_vehicles) if j != i
    ]


def compute_vehicle_control(
    scene: Scene, i: int, prev_dir: float, p: ModelParams, *, full_sum: bool = False
) -> tuple[ControlCommand, FieldDiagnostics, float]:
    """Reference command for vehicle ``i``.

    Orientation is resolved (and clamped to the reachable wedge) before speed,
    because the forbidden-direction checks and the parking speed use the real heading.
    ``full_sum`` skips the neighbor filter and sums over every agent.
    Returns the command, its diagnostics and the direction sign to carry forward.
    """
    s = scene.vehicles[i]
    nxt = predicted_next_position(s, p)
    neighbors = all_neighbors(scene, i) if full_sum else neighbor_filter(scene, i, p)

    u_tar = target_component(s, nxt, p)
    u_coll = collision_component(s, scene, neighbors, p)
    ux, uy, theta_hat, degenerate = ideal_orientation_k(u_tar[0], u_tar[1], u_coll[0], u_coll[1], s.theta)

    rs = reachable_set(s, p)
    theta_real, _ = clamp_to_reachable(theta_hat, 0.0, rs)
    forward, backward = forbidden_flags(theta_real, s, nxt, scene, neighbors, p)
    v_tar = parking_speed(s, theta_real, (ux, uy), prev_dir, p)
    v_hat = ideal_speed(forward, backward, v_tar, p)
    _, v_real = clamp_to_reachable(theta_hat, v_hat, rs)

    command = invert_controls(s, theta_real, v_real, p)
    diag = FieldDiagnostics(
        u_tar=u_tar,
        u_coll=u_coll,
        u_hat=(ux, uy),
        theta_hat=theta_hat,
        v_hat=v_hat,
        forbid_forward=forward,
        forbid_backward=backward,
        active_neighbors=tuple(neighbors),
        theta_real=theta_real,
        v_real=v_real,
        v_tar=v_tar,
        degenerate=bool(degenerate),
    )
    new_dir = sgn(v_hat) if v_hat != 0.0 else prev_dir
    return command, diag, new_dir


# -- compiled route -------------------------------------------------------------


@kernel
def vehicle_control_k(veh, obs, i, prev_dir, prm, full_sum, scratch, diag):
    """Compiled counterpart of :func:`compute_vehicle_control` for row ``i`` of ``veh``.

    Fills ``diag`` (one row, ``N_DIAG`` columns) and returns ``(pedal, steer, new_dir)``.
    ``scratch`` needs at least ``len(veh) + len(obs)`` rows of 3.
    """
    dt = prm[P_DT]
    r_veh = prm[P_RVEH]
    r_c = prm[P_RC]
    x = veh[i, 0]
    y = veh[i, 1]
    theta = veh[i, 2]
    v = veh[i, 3]
    nx, ny = predicted_next_position_k(x, y, theta, v, dt)
    tx = veh[i, 4] - nx
    ty = veh[i, 5] - ny
    utx, uty = target_component_k(nx, ny, theta, veh[i, 4], veh[i, 5], veh[i, 6], prm[P_VD], prm[P_RP], prm[P_EPSP])

    ucx = 0.0
    ucy = 0.0
    m = 0
    for k in range(obs.shape[0]):
        dx = obs[k, 0] - x
        dy = obs[k, 1] - y
        if full_sum or math.sqrt(dx * dx + dy * dy) <= obs[k, 2] + r_veh + abs(v) + 2.0 * r_c:
            ux, uy, alpha, xx, xy = avoidance_component_k(
                nx, ny, obs[k, 0], obs[k, 1], obs[k, 2], abs(v), tx, ty, r_veh, r_c
            )
            ucx += ux
            ucy += uy
            scratch[m, 0] = alpha
            scratch[m, 1] = xx
            scratch[m, 2] = xy
            m += 1
    for j in range(veh.shape[0]):
        if j == i:
            continue
        vj = veh[j, 3]
        dx = veh[j, 0] - x
        dy = veh[j, 1] - y
        if full_sum or math.sqrt(dx * dx + dy * dy) <= 2.0 * r_veh + abs(v) + abs(vj) + 2.0 * r_c:
            ox, oy = predicted_next_position_k(veh[j, 0], veh[j, 1], veh[j, 2], vj, dt)
            ux, uy, alpha, xx, xy = avoidance_component_k(
                nx, ny, ox, oy, r_veh, abs(v) + abs(vj), tx, ty, r_veh, r_c
            )
            ucx += ux
            ucy += uy
            scratch[m, 0] = alpha
            scratch[m, 1] = xx
            scratch[m, 2] = xy
            m += 1

    uhx, uhy, theta_hat, degenerate = ideal_orientation_k(utx, uty, ucx, ucy, theta)
    w = wedge_half_width_k(v, prm[P_STEER], prm[P_GAMMA], dt, prm[P_EPSV])
    theta_real = clamp_orientation_k(theta_hat, theta, w)
    urx = math.cos(theta_real)
    ury = math.sin(theta_real)

    forward = False
    backward = False
    eps_c = prm[P_EPSC]
    for n in range(m):
        if scratch[n, 0] + eps_c <= 0.0:
            g = urx * scratch[n, 1] + ury * scratch[n, 2]
            forward = forward or g > 0.0
            backward = backward or g < 0.0

    v_tar = parking_speed_k(
        tx, ty, theta, urx, ury, theta_real, veh[i, 6], uhx, uhy, prev_dir, prm[P_VD], prm[P_RP], prm[P_EPSP], prm[P_EPSO]
    )
    v_hat = ideal_speed_k(forward, backward, v_tar, prm[P_VD])
    base = prm[P_BETA] * v
    v_real = clamp_speed_k(v_hat, base - prm[P_PEDAL] * dt, base + prm[P_PEDAL] * dt)
    pedal, steer = invert_k(
        theta, v, theta_real, v_real, dt, prm[P_BETA], prm[P_GAMMA], prm[P_PEDAL], prm[P_STEER], prm[P_EPSV]
    )

    diag[0] = utx
    diag[1] = uty
    diag[2] = ucx
    diag[3] = ucy
    diag[4] = uhx
    diag[5] = uhy
    diag[6] = theta_hat
    diag[7] = v_hat
    diag[8] = 1.0 if forward else 0.0
    diag[9] = 1.0 if backward else 0.0
    diag[10] = theta_real
    diag[11] = v_real
    diag[12] = v_tar
    diag[13] = 1.0 if degenerate else 0.0
    new_dir = sgn_k(v_hat) if v_hat != 0.0 else prev_dir
    return pedal, steer, new_dir


@kernel
def scene_controls_k(veh, obs, prev_dirs, prm, full_sum, cmds, diag, new_dirs):
    n = veh.shape[0]
    scratch = np.empty((n + obs.shape[0], 3))
    for i in range(n):
        pedal, steer, nd = vehicle_control_k(veh, obs, i, prev_dirs[i], prm, full_sum, scratch, diag[i])
        cmds[i, 0] = pedal
        cmds[i, 1] = steer
        new_dirs[i] = nd


@kernel
def _vehicle_row_k(veh, obs, i, prev_dir, prm, full_sum, cmds, diag, new_dirs):
    scratch = np.empty((veh.shape[0] + obs.shape[0], 3))
    pedal, steer, nd = vehicle_control_k(veh, obs, i, prev_dir, prm, full_sum, scratch, diag[i])
    cmds[i, 0] = pedal
    cmds[i, 1] = steer
    new_dirs[i] = nd


def _empty_obstacles() -> np.ndarray:
    return np.zeros((0, 3), dtype=np.float64)


def compute_scene_controls(
    scene: Scene,
    prev_dirs: "list[float] | tuple[float, ...] | None",
    p: ModelParams,
    *,
    full_sum: bool = False,
    workers: int = 1,
) -> ControlOutput:
    """Commands for every vehicle from one snapshot.

    With ``workers > 1`` vehicles are spread over a thread pool; each vehicle's
    result only depends on the snapshot, so the output does not depend on ``workers``.
    """
    n = scene.n_vehicles
    if n == 0:
        return ControlOutput((), (), ())
    veh = scene.vehicle_array()
    obs = scene.obstacle_array() if scene.n_obstacles else _empty_obstacles()
    dirs = np.ones(n) if prev_dirs is None else np.asarray(prev_dirs, dtype=np.float64)
    if dirs.shape != (n,):
        raise ValueError(f"expected {n} direction signs, got {dirs.shape}")
    prm = p.as_array()
    cmds = np.empty((n, 2))
    diag = np.empty((n, N_DIAG))
    new_dirs = np.empty(n)
    if workers <= 1:
        scene_controls_k(veh, obs, dirs, prm, full_sum, cmds, diag, new_dirs)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(
                lambda i: _vehicle_row_k(veh, obs, i, dirs[i], prm, full_sum, cmds, diag, new_dirs), range(n)
            ))
    commands = tuple(ControlCommand(float(c[0]), float(c[1])) for c in cmds)
    diagnostics = tuple(
        FieldDiagnostics.from_row(diag[i], all_neighbors(scene, i) if full_sum else neighbor_filter(scene, i, p))
        for i in range(n)
    )
    return ControlOutput(commands, diagnostics, tuple(float(d) for d in new_dirs))
