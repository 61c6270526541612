import math
import xml.etree.ElementTree as ET

import pytest

from dv2f.core import ModelParams, ObstacleState, Scene, VehicleState
from dv2f.plot import ARROW_LEN_PX, arrow_lengths, field_samples, render_svg
from dv2f.simulator import rollout

P = ModelParams()
NS = "{http://www.w3.org/2000/svg}"


def test_empty_scene_renders_valid_svg():
    svg = render_svg(rollout(Scene(()), P))
    root = ET.fromstring(svg)
    assert root.tag == NS + "svg"
    assert root.findall(NS + "polyline") == []


def test_one_path_and_markers_per_vehicle():
    scene = Scene(
        (VehicleState(0, 0, 0, 0, 10, 0, 0), VehicleState(0, 6, 0, 0, 10, 6, 0)),
        (ObstacleState(5, -6, 1.0),),
    )
    root = ET.fromstring(render_svg(rollout(scene, P)))
    assert len(root.findall(NS + "polyline")) == 2
    assert len(root.findall(NS + "rect")) == 3  # background plus two targets
    assert len(root.findall(NS + "circle")) == 3  # obstacle plus two starts


def test_field_arrows_have_fixed_length():
    scene = Scene((VehicleState(0, 0, 0, 0, 20, 0, 0),), (ObstacleState(10, 0, 2.0),))
    svg = render_svg(rollout(scene, P), field_vehicle=0, spacing=3.0)
    lengths = arrow_lengths(svg)
    assert len(lengths) > 20
    # coordinates are printed with three decimals
    assert all(abs(L - ARROW_LEN_PX) < 5e-3 for L in lengths)


def test_field_curls_clockwise_beside_obstacle():
    ob = ObstacleState(10.0, 0.0, 2.0)
    scene = Scene((VehicleState(0, 0, 0, 0, 20, 0, 0),), (ob,))
    edge = ob.r + P.r_veh
    near = [
        (x, y, ux, uy)
        for x, y, ux, uy in field_samples(scene, 0, P, spacing=0.5, bounds=(4, -5, 16, 5))
        if edge < math.hypot(x - ob.x, y - ob.y) < edge + 0.5 * P.r_c and x < ob.x
    ]
    assert near
    assert all((x - ob.x) * uy - (y - ob.y) * ux < 0 for x, y, ux, uy in near)


def test_field_samples_are_unit_vectors():
    scene = Scene((VehicleState(0, 0, 1.0, 1.0, 8, 8, 0),))
    for _, _, ux, uy in field_samples(scene, 0, P, spacing=1.5):
        assert math.hypot(ux, uy) == pytest.approx(1.0, abs=1e-12)
