"""Bicycle-model propagation, one-step reachability and control inversion."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import ControlCommand, ModelParams, VehicleState, kernel, wrap_k


@dataclass(frozen=True)
class ReachableSet:
    """Orientations and speeds attainable in one step.

    The orientation wedge is ``center +/- half_width`` around the current heading;
    ``theta_lo``/``theta_hi`` are unwrapped and may leave (-pi, pi].
    """

    center: float
    half_width: float
    v_lo: float
    v_hi: float

    @property
    def theta_lo(self) -> float:
        return self.center - self.half_width

    @property
    def theta_hi(self) -> float:
        return self.center + self.half_width


@kernel
def step_k(x, y, theta, v, pedal, steer, dt, beta, gamma):
    nx = x + v * math.cos(theta) * dt
    ny = y + v * math.sin(theta) * dt
    ntheta = wrap_k(theta + v * math.tan(steer) * gamma * dt)
    nv = beta * v + pedal * dt
    return nx, ny, ntheta, nv


@kernel
def wedge_half_width_k(v, steer_max, gamma, dt, eps_v):
    # below eps_v steering is switched off, so the wedge collapses; beyond pi it covers every heading
    if abs(v) < eps_v:
        return 0.0
    return min(abs(v) * math.tan(steer_max) * gamma * dt, math.pi)


@kernel
def clamp_orientation_k(theta_hat, theta, half_width):
    d = wrap_k(theta_hat - theta)
    if abs(d) <= half_width:
        return wrap_k(theta_hat)
    if d > 0.0:
        return wrap_k(theta + half_width)
    return wrap_k(theta - half_width)


@kernel
def clamp_speed_k(v_hat, lo, hi):
    return min(max(v_hat, lo), hi)


@kernel
def invert_k(theta, v, theta_real, v_real, dt, beta, gamma, pedal_max, steer_max, eps_v):
    if abs(v) < eps_v:
        steer = 0.0
    else:
        steer = math.atan(wrap_k(theta_real - theta) / (v * gamma * dt))
        steer = min(max(steer, -steer_max), steer_max)
    pedal = (v_real - beta * v) / dt
    pedal = min(max(pedal, -pedal_max), pedal_max)
    return pedal, steer


def step(s: VehicleState, c: ControlCommand, p: ModelParams) -> VehicleState:
    """Advance one vehicle by ``p.dt``; every right-hand side uses the pre-update state."""
    x, y, theta, v = step_k(s.x, s.y, s.theta, s.v, c.pedal, c.steer, p.dt, p.beta, p.gamma)
    return VehicleState(x, y, theta, v, s.x_tar, s.y_tar, s.theta_tar)


def reachable_set(s: VehicleState, p: ModelParams) -> ReachableSet:
    w = wedge_half_width_k(s.v, p.steer_max, p.gamma, p.dt, p.eps_v)
    base = p.beta * s.v
    return ReachableSet(
        center=s.theta,
        half_width=w,
        v_lo=base - p.pedal_max * p.dt,
        v_hi=base + p.pedal_max * p.dt,
    )


def clamp_to_reachable(theta_hat: float, v_hat: float, rs: ReachableSet) -> tuple[float, float]:
    """Project an ideal (orientation, speed) pair onto the reachable set.

    The orientation goes to the nearest point of the wedge arc; an exact
    half-turn away is resolved toward the counter-clockwise edge.
    """
    theta_real = clamp_orientation_k(theta_hat, rs.center, rs.half_width)
    return theta_real, clamp_speed_k(v_hat, rs.v_lo, rs.v_hi)


def invert_controls(s: VehicleState, theta_real: float, v_real: float, p: ModelParams) -> ControlCommand:
    """Solve the bicycle update for the steering and pedal reaching ``(theta_real, v_real)``.

    Below ``p.eps_v`` the heading cannot change in one step, so steering is zero.
    Outputs are clamped to the actuator limits.
    """
    pedal, steer = invert_k(
        s.theta, s.v, theta_real, v_real, p.dt, p.beta, p.gamma, p.pedal_max, p.steer_max, p.eps_v
    )
    return ControlCommand(pedal=pedal, steer=steer)
