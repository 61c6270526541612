"""Per-vehicle velocity vector field: reference orientation and reference speed.

Every quantity is evaluated from an immutable scene snapshot. Vectors toward the
target, obstacles and other vehicles start at the ego vehicle's *predicted* next
position (coasting: current speed and heading, no steering).

The compiled ``*_k`` kernels take plain floats so the batch simulator can call
them directly; the public functions below wrap them for the dataclass API.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import (
    ModelParams,
    ObstacleState,
    Scene,
    Vec2,
    VehicleState,
    heaviside_k,
    kernel,
    parse_agent_id,
    sgn_k,
    unit_k,
    wrap_k,
)

# Columns of the per-vehicle diagnostics rows produced by the compiled controller.
DIAG_FIELDS = (
    "u_tar_x", "u_tar_y", "u_coll_x", "u_coll_y", "u_hat_x", "u_hat_y",
    "theta_hat", "v_hat", "forbid_forward", "forbid_backward",
    "theta_real", "v_real", "v_tar", "degenerate",
)
N_DIAG = len(DIAG_FIELDS)
PARKING_DIRECTION_BAND = 0.25


@dataclass(frozen=True)
class FieldDiagnostics:
    u_tar: Vec2
    u_coll: Vec2
    u_hat: Vec2
    theta_hat: float
    v_hat: float
    forbid_forward: bool
    forbid_backward: bool
    active_neighbors: tuple[str, ...] = field(default=())
    theta_real: float = 0.0
    v_real: float = 0.0
    v_tar: float = 0.0
    degenerate: bool = False

    @classmethod
    def from_row(cls, row: Sequence[float], neighbors: Iterable[str] = ()) -> "FieldDiagnostics":
        r = [float(x) for x in row]
        return cls(
            u_tar=(r[0], r[1]),
            u_coll=(r[2], r[3]),
            u_hat=(r[4], r[5]),
            theta_hat=r[6],
            v_hat=r[7],
            forbid_forward=bool(r[8]),
            forbid_backward=bool(r[9]),
            active_neighbors=tuple(neighbors),
            theta_real=r[10],
            v_real=r[11],
            v_tar=r[12],
            degenerate=bool(r[13]),
        )


# -- compiled kernels ---------------------------------------------------------


@kernel
def predicted_next_position_k(x, y, theta, v, dt):
    return x + v * math.cos(theta) * dt, y + v * math.sin(theta) * dt


@kernel
def target_component_k(nx, ny, theta, x_tar, y_tar, theta_tar, v_d, r_p, eps_p):
    tx = x_tar - nx
    ty = y_tar - ny
    d = math.sqrt(tx * tx + ty * ty)
    fx, fy, _ = unit_k(tx, ty)
    if d > r_p:
        if d >= 0.5 * v_d * v_d + r_p:
            return fx, fy
        # marginal band: flip toward the current heading to avoid circling after an overshoot
        xi = sgn_k(tx * math.cos(theta) + ty * math.sin(theta))
        return fx * xi, fy * xi
    ctar = math.cos(theta_tar)
    star = math.sin(theta_tar)
    lam = (d / r_p + heaviside_k(d - eps_p)) * sgn_k(tx * ctar + ty * star)
    ux, uy, _ = unit_k(ctar + lam * fx, star + lam * fy)
    return ux, uy


@kernel
def avoidance_component_k(nx, ny, ax, ay, r_other, margin_speed, tx, ty, r_veh, r_c):
    """Repulsion plus clockwise circulation around one agent; also returns alpha and the offset."""
    xx = ax - nx
    xy = ay - ny
    d = math.sqrt(xx * xx + xy * xy)
    alpha = d - r_other - r_veh - (r_c + margin_speed)
    if alpha > 0.0:
        return 0.0, 0.0, alpha, xx, xy
    dx, dy, deg = unit_k(xx, xy)
    if deg:
        dx, dy = 1.0, 0.0
    # Z x X with X lifted to 3D
    rx, ry, deg_r = unit_k(-xy, xx)
    if deg_r:
        rx, ry = 0.0, 1.0
    b = heaviside_k(tx * xx + ty * xy) * (d - r_other)
    return dx * alpha + rx * b, dy * alpha + ry * b, alpha, xx, xy


@kernel
def ideal_orientation_k(utx, uty, ucx, ucy, theta):
    ux, uy, deg = unit_k(utx + ucx, uty + ucy)
    if deg:
        ux, uy = math.cos(theta), math.sin(theta)
    return ux, uy, math.atan2(uy, ux), deg


@kernel
def parking_speed_k(tx, ty, theta, urx, ury, theta_real, theta_tar, uhx, uhy, prev_dir, v_d, r_p, eps_p, eps_o):
    d = math.sqrt(tx * tx + ty * ty)
    if d > r_p:
        sign = sgn_k(urx * uhx + ury * uhy)
        if d < 0.5 * v_d * v_d + r_p:
            # the orientation flip in the marginal band only helps if the vehicle then reverses toward the target
            sign *= sgn_k(tx * math.cos(theta) + ty * math.sin(theta))
        return v_d * sign
    dth = abs(wrap_k(theta_tar - theta_real))
    lam_bar = min(d / r_p + dth / v_d, 1.0)
    if d < eps_p and dth < eps_o:
        lam = lam_bar
    else:
        lam = math.sqrt(lam_bar)
    g = urx * tx + ury * ty
    if d < eps_p:
        # the keep-direction band is as wide as the tolerance itself, so inside it always head back
        xi = sgn_k(g)
    elif g > PARKING_DIRECTION_BAND:
        xi = 1.0
    elif g < -PARKING_DIRECTION_BAND:
        xi = -1.0
    else:
        xi = prev_dir
    return xi * lam * v_d


@kernel
def ideal_speed_k(forbid_forward, forbid_backward, v_tar, v_d):
    if forbid_backward and not forbid_forward:
        return v_d
    if forbid_forward and not forbid_backward:
        return -v_d
    if forbid_forward and forbid_backward:
        return 0.0
    return v_tar


# -- dataclass API ------------------------------------------------------------


def predicted_next_position(s: VehicleState, p: ModelParams) -> Vec2:
    return predicted_next_position_k(s.x, s.y, s.theta, s.v, p.dt)


def target_offset(s: VehicleState, nxt: Vec2) -> Vec2:
    return (s.x_tar - nxt[0], s.y_tar - nxt[1])


def target_component(s: VehicleState, nxt: Vec2, p: ModelParams) -> Vec2:
    """Target-reaching direction: straight at the target when far, sign-flipped
    to the current heading in the marginal band, blended with the target heading
    inside the parking radius."""
    return target_component_k(nxt[0], nxt[1], s.theta, s.x_tar, s.y_tar, s.theta_tar, p.v_d, p.r_p, p.eps_p)


def obstacle_component(s: VehicleState, nxt: Vec2, o: ObstacleState, p: ModelParams) -> Vec2:
    tx, ty = target_offset(s, nxt)
    ux, uy, *_ = avoidance_component_k(
        nxt[0], nxt[1], o.x, o.y, o.r, abs(s.v), tx, ty, p.r_veh, p.r_c
    )
    return ux, uy


def vehicle_component(
    s_i: VehicleState, next_i: Vec2, s_j: VehicleState, next_j: Vec2, p: ModelParams
) -> Vec2:
    """Like :func:`obstacle_component` with the other vehicle's radius and both speeds in the margin."""
    tx, ty = target_offset(s_i, next_i)
    ux, uy, *_ = avoidance_component_k(
        next_i[0], next_i[1], next_j[0], next_j[1], p.r_veh, abs(s_i.v) + abs(s_j.v), tx, ty, p.r_veh, p.r_c
    )
    return ux, uy


def _neighbor_terms(s: VehicleState, nxt: Vec2, scene: Scene, neighbors: Iterable[str], p: ModelParams):
    """Yield ``(u, alpha, X)`` per neighbor in the given order."""
    tx, ty = target_offset(s, nxt)
    for agent in neighbors:
        kind, idx = parse_agent_id(agent)
        if kind == "obstacle":
            o = scene.obstacles[idx]
            ux, uy, alpha, xx, xy = avoidance_component_k(
                nxt[0], nxt[1], o.x, o.y, o.r, abs(s.v), tx, ty, p.r_veh, p.r_c
            )
        else:
            other = scene.vehicles[idx]
            ox, oy = predicted_next_position(other, p)
            ux, uy, alpha, xx, xy = avoidance_component_k(
                nxt[0], nxt[1], ox, oy, p.r_veh, abs(s.v) + abs(other.v), tx, ty, p.r_veh, p.r_c
            )
        yield (ux, uy), alpha, (xx, xy)


def collision_component(s: VehicleState, scene: Scene, neighbors: Sequence[str], p: ModelParams) -> Vec2:
    nxt = predicted_next_position(s, p)
    cx = cy = 0.0
    for (ux, uy), _, _ in _neighbor_terms(s, nxt, scene, neighbors, p):
        cx += ux
        cy += uy
    return cx, cy


def ideal_orientation(
    s: VehicleState, scene: Scene, neighbors: Sequence[str], p: ModelParams
) -> tuple[Vec2, float]:
    """Unit reference direction and its angle; exact cancellation keeps the current heading."""
    nxt = predicted_next_position(s, p)
    utx, uty = target_component(s, nxt, p)
    ucx, ucy = collision_component(s, scene, neighbors, p)
    ux, uy, theta_hat, _ = ideal_orientation_k(utx, uty, ucx, ucy, s.theta)
    return (ux, uy), theta_hat


def forbidden_flags(
    theta_real: float,
    s: VehicleState,
    nxt: Vec2,
    scene: Scene,
    neighbors: Sequence[str],
    p: ModelParams,
) -> tuple[bool, bool]:
    """Whether driving forward / backward along ``theta_real`` heads into a close neighbor."""
    urx, ury = math.cos(theta_real), math.sin(theta_real)
    forward = backward = False
    for _, alpha, (xx, xy) in _neighbor_terms(s, nxt, scene, neighbors, p):
        if alpha + p.eps_c <= 0.0:
            g = urx * xx + ury * xy
            forward = forward or g > 0.0
            backward = backward or g < 0.0
    return forward, backward


def parking_speed(
    s: VehicleState, theta_real: float, u_hat: Vec2, prev_dir: float, p: ModelParams
) -> float:
    """Speed toward the target: full ``v_d`` outside the parking radius, tapering to zero at the target pose.

    In the marginal band outside the radius the sign follows the flipped
    orientation, so an overshooting vehicle backs up to the target.

    Inside the radius the direction comes from the real heading's projection on
    the target offset, with a dead band where ``prev_dir`` is kept.
    """
    nxt = predicted_next_position(s, p)
    tx, ty = target_offset(s, nxt)
    return parking_speed_k(
        tx, ty, s.theta, math.cos(theta_real), math.sin(theta_real), theta_real, s.theta_tar,
        u_hat[0], u_hat[1], prev_dir, p.v_d, p.r_p, p.eps_p, p.eps_o,
    )


def ideal_speed(forbid_forward: bool, forbid_backward: bool, v_tar: float, p: ModelParams) -> float:
    return ideal_speed_k(forbid_forward, forbid_backward, v_tar, p.v_d)


__all__ = [
    "DIAG_FIELDS",
    "FieldDiagnostics",
    "collision_component",
    "forbidden_flags",
    "ideal_orientation",
    "ideal_speed",
    "obstacle_component",
    "parking_speed",
    "predicted_next_position",
    "target_component",
    "vehicle_component",
]
