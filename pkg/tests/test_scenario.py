import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from dv2f.core import ModelParams, ObstacleState, Scene, VehicleState
from dv2f.scenario import (
    GenerationError, GenSpec, SceneFormatError, SplitMix64, Xoshiro256, batch_filename, case_seeds,
    generate, generate_batch, generate_with_centers, load, load_batch, save, save_batch, validate,
)

P = ModelParams()


def test_splitmix64_reference_values():
    sm = SplitMix64(0)
    assert [sm.next() for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_xoshiro_reference_values():
    rng = Xoshiro256(0)
    rng.s = [1, 2, 3, 4]
    assert [rng.next_u64() for _ in range(4)] == [11520, 0, 1509978240, 1215971899390074240]


@given(st.integers(0, 2**64 - 1))
@settings(max_examples=50)
def test_xoshiro_ranges(seed):
    rng = Xoshiro256(seed)
    for _ in range(20):
        assert 0.0 <= rng.random() < 1.0
        assert 3 <= rng.integer(3, 5) <= 5
        assert -math.pi <= rng.angle() < math.pi
        assert math.isfinite(rng.normal())


def test_xoshiro_normal_moments():
    rng = Xoshiro256(5)
    xs = [rng.normal() for _ in range(20000)]
    mean = sum(xs) / len(xs)
    var = sum((x - mean) ** 2 for x in xs) / len(xs)
    assert abs(mean) < 0.03 and abs(var - 1) < 0.05


def test_case_seeds_deterministic_and_distinct():
    a = case_seeds(42, 100)
    assert a == case_seeds(42, 100)
    assert len(set(a)) == 100
    assert case_seeds(42, 5) == a[:5]


def test_validate_examples():
    assert validate(Scene(), P) == []
    a = VehicleState(0, 0, 0, 0, 20, 0, 0)
    b = VehicleState(2.9, 0, 0, 0, -20, 0, 0)
    assert any("starts" in v for v in validate(Scene((a, b)), P))
    t = VehicleState(-20, 0, 0, 0, 4.9, 0, 0)
    problems = validate(Scene((t,), (ObstacleState(0, 0, 2.0),)), P)
    assert len(problems) == 1 and "influence" in problems[0]
    ok = VehicleState(-20, 0, 0, 0, 5.0, 0, 0)
    assert validate(Scene((ok,), (ObstacleState(0, 0, 2.0),)), P) == []


def test_validate_overlaps_and_targets():
    a = VehicleState(0, 0, 0, 0, 10, 10, 0)
    b = VehicleState(20, 0, 0, 0, 10, 11, 0)
    assert any("targets" in v for v in validate(Scene((a, b)), P))
    inside = VehicleState(0.5, 0, 0, 0, 30, 0, 0)
    assert any("start of v0 overlaps" in v for v in validate(Scene((inside,), (ObstacleState(0, 0, 2),)), P))


def test_start_inside_influence_is_allowed():
    s = VehicleState(4.0, 0, 0, 0, 30, 0, 0)
    assert validate(Scene((s,), (ObstacleState(0, 0, 2),)), P) == []


def test_parking_mode_target_near_start():
    s = generate(GenSpec(1, 0, "parking", seed=7))
    v = s.vehicles[0]
    assert math.hypot(v.x_tar - v.x, v.y_tar - v.y) <= 10.0


@pytest.mark.parametrize("seed", range(20))
def test_collision_pair_crosses_near_center(seed):
    scene, centers = generate_with_centers(GenSpec(2, 0, "collision", seed=seed))
    (cx, cy), = centers
    a, b = scene.vehicles
    # intersection of the two start-target lines
    d1 = (a.x_tar - a.x, a.y_tar - a.y)
    d2 = (b.x_tar - b.x, b.y_tar - b.y)
    den = d1[0] * d2[1] - d1[1] * d2[0]
    assert abs(den) > 1e-9
    t = ((b.x - a.x) * d2[1] - (b.y - a.y) * d2[0]) / den
    u = ((b.x - a.x) * d1[1] - (b.y - a.y) * d1[0]) / den
    assert 0 < t < 1 and 0 < u < 1
    px, py = a.x + t * d1[0], a.y + t * d1[1]
    assert math.hypot(px - cx, py - cy) <= 2.0


@pytest.mark.parametrize("mode", ["collision", "parking", "normal"])
@pytest.mark.parametrize("nv,no", [(0, 0), (1, 0), (10, 0), (10, 25), (50, 25)])
def test_generated_scenes_validate(mode, nv, no):
    for scene in generate_batch(GenSpec(nv, no, mode, seed=3), 3):
        assert validate(scene, P) == []
        assert scene.n_vehicles == nv and scene.n_obstacles == no


def test_generation_deterministic():
    spec = GenSpec(10, 5, "collision", seed=123)
    assert generate(spec) == generate(spec)
    assert generate(spec) != generate(GenSpec(10, 5, "collision", seed=124))


def test_retry_budget_exhausted():
    with pytest.raises(GenerationError, match="retry budget"):
        generate(GenSpec(40, 0, "normal", map_extent=5.0, seed=1))


@pytest.mark.parametrize("kwargs", [{"n_vehicles": -1}, {"n_vehicles": 1, "mode": "x"},
                                    {"n_vehicles": 1, "obstacle_radius_range": (0.0, 1.0)}])
def test_genspec_validation(kwargs):
    with pytest.raises(ValueError):
        GenSpec(**kwargs)


def test_extent_scaling():
    assert GenSpec(10).extent == 50.0
    assert GenSpec(100).extent == 120.0
    assert GenSpec(10, map_extent=30.0).extent == 30.0


def test_save_load_round_trip_bitwise():
    scene = generate(GenSpec(6, 4, "normal", seed=9))
    assert load(save(scene)) == scene
    batch = generate_batch(GenSpec(3, 2, "parking", seed=1), 4)
    assert load_batch(save_batch(batch)) == batch


def test_load_defaults_speed_to_zero():
    raw = json.dumps({"vehicles": [{"x": 1, "y": 2, "theta": 0, "x_tar": 3, "y_tar": 4, "theta_tar": 0}]})
    assert load(raw).vehicles[0].v == 0.0


def test_load_missing_field_names_path():
    raw = json.dumps({"vehicles": [{"x": 1, "y": 2, "theta": 0, "x_tar": 3, "theta_tar": 0}]})
    with pytest.raises(SceneFormatError, match=r"\$\.vehicles\[0\]\.y_tar: missing field"):
        load(raw)
    with pytest.raises(SceneFormatError, match=r"\$\[1\]\.obstacles\[0\]\.r"):
        load_batch(json.dumps([{}, {"obstacles": [{"x": 0, "y": 0}]}]))


@pytest.mark.parametrize("raw", ["{", "[]", '{"vehicles": [1]}', '{"obstacles": [{"x": "a", "y": 0, "r": 1}]}'])
def test_load_malformed(raw):
    with pytest.raises(SceneFormatError):
        load(raw)


def test_load_batch_requires_array():
    with pytest.raises(SceneFormatError):
        load_batch("{}")


def test_batch_filename():
    assert batch_filename(10, 0, "collision", 1) == "scenes_10v_0o_collision_1.json"
