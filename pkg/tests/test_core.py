import json
import math

import pytest
from hypothesis import given, strategies as st

from dv2f.core import (
    ControlCommand, ModelParams, ObstacleState, Scene, VehicleState,
    heaviside, parse_agent_id, sgn, unit, wrap_angle,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


def test_wrap_angle_examples():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-3.5) == pytest.approx(-3.5 + 2 * math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)


def test_wrap_angle_rejects_non_finite():
    with pytest.raises(ValueError):
        wrap_angle(float("nan"))
    with pytest.raises(ValueError):
        wrap_angle(float("inf"))


@given(finite)
def test_wrap_angle_range_and_idempotent(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert wrap_angle(w) == w
    # same angle modulo a full turn
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-6)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-6)


def test_unit_examples():
    assert unit((3.0, 4.0)) == ((0.6, 0.8), False)
    assert unit((0.0, -2.0)) == ((0.0, -1.0), False)
    assert unit((1e-15, 0.0)) == ((0.0, 0.0), True)


@given(finite, finite, st.floats(min_value=1e-3, max_value=1e3))
def test_unit_scale_invariant(x, y, c):
    (ux, uy), deg = unit((x, y))
    if deg or math.hypot(x, y) < 1e-6:
        return
    (vx, vy), _ = unit((c * x, c * y))
    assert math.hypot(ux, uy) == pytest.approx(1.0, abs=1e-12)
    assert vx == pytest.approx(ux, abs=1e-12) and vy == pytest.approx(uy, abs=1e-12)


@given(finite, finite, st.floats(min_value=-math.pi, max_value=math.pi))
def test_unit_rotation_equivariant(x, y, rho):
    if math.hypot(x, y) < 1e-6:
        return
    c, s = math.cos(rho), math.sin(rho)
    (ux, uy), _ = unit((x, y))
    (rx, ry), _ = unit((c * x - s * y, s * x + c * y))
    assert rx == pytest.approx(c * ux - s * uy, abs=1e-9)
    assert ry == pytest.approx(s * ux + c * uy, abs=1e-9)


def test_sign_functions():
    assert sgn(2.5) == 1.0
    assert sgn(0.0) == 1.0
    assert sgn(-1e-300) == -1.0
    assert heaviside(-0.1) == 0.0
    assert heaviside(0.0) == 0.0
    assert heaviside(1e-300) == 1.0


def test_vehicle_state_wraps_and_checks():
    s = VehicleState(0, 0, 3 * math.pi, 1, 0, 0, -3 * math.pi)
    assert s.theta == pytest.approx(math.pi)
    assert s.theta_tar == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        VehicleState(float("nan"), 0, 0, 0, 0, 0, 0)


def test_obstacle_radius_positive():
    with pytest.raises(ValueError):
        ObstacleState(0, 0, 0)


def test_control_command_clamped():
    p = ModelParams()
    c = ControlCommand.clamped(5.0, -2.0, p)
    assert (c.pedal, c.steer) == (1.0, -0.8)


def test_params_defaults_and_json_round_trip():
    p = ModelParams()
    assert (p.dt, p.beta, p.gamma, p.pedal_max, p.steer_max) == (0.2, 0.99, 0.5, 1.0, 0.8)
    assert (p.v_d, p.r_p, p.r_veh, p.r_c, p.eps_p, p.eps_o) == (2.5, 5.0, 1.5, 1.5, 0.25, 0.2)
    assert ModelParams.from_json(p.to_json()) == p
    assert ModelParams.from_dict({"v_d": 3.0}) == ModelParams(v_d=3.0)
    assert json.loads(p.to_json())["horizon"] == 500


@pytest.mark.parametrize("bad", [{"beta": 0.0}, {"beta": 1.5}, {"dt": -1.0}, {"r_c": -0.1}, {"horizon": 2.5}])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        ModelParams(**bad)


def test_params_rejects_unknown_field():
    with pytest.raises(ValueError):
        ModelParams.from_dict({"nope": 1})


def test_params_allows_zero_r_c():
    assert ModelParams(r_c=0.0).r_c == 0.0


def test_scene_array_round_trip():
    scene = Scene(
        (VehicleState(1, 2, 0.3, 0.4, 5, 6, -0.7),),
        (ObstacleState(3, 4, 1.5),),
    )
    back = Scene.from_arrays(scene.vehicle_array(), scene.obstacle_array())
    assert back == scene


def test_parse_agent_id():
    assert parse_agent_id("v12") == ("vehicle", 12)
    assert parse_agent_id("o0") == ("obstacle", 0)
    for bad in ("x1", "v", "v-1", ""):
        with pytest.raises(ValueError):
            parse_agent_id(bad)
