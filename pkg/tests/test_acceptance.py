"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` or ``python3 tests/test_acceptance.py``.
Batches use base seed 0.
"""

from __future__ import annotations

import io
import json
import math
import sys
from functools import lru_cache

import numpy as np
import pytest

from dv2f.controller import compute_scene_controls
from dv2f.core import ControlCommand, ModelParams, ObstacleState, Scene, VehicleState, wrap_angle
from dv2f.field import DIAG_FIELDS
from dv2f.kinematics import invert_controls, reachable_set, step
from dv2f.labels import LabelRecord, label_records, state_cost, write_labels
from dv2f.metrics import evaluate, summarize
from dv2f.plot import field_samples
from dv2f.scenario import GenSpec, generate_batch
from dv2f.simulator import rollout, rollout_arrays

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = []

SEED = 0
CASES = 100
P = ModelParams()
I_VHAT = DIAG_FIELDS.index("v_hat")


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@lru_cache(maxsize=None)
def batch(nv: int, no: int, r_c: float = P.r_c):
    """Rollouts and summary of one regime; scenes are generated with default parameters."""
    p = P.with_overrides(r_c=r_c)
    scenes = generate_batch(GenSpec(nv, no, "collision", seed=SEED), CASES, P)
    runs = [rollout(s, p) for s in scenes]
    summary = summarize([evaluate(r) for r in runs], nv, no)
    return runs, summary


def compute_seconds(nv: int, no: int) -> float:
    scenes = generate_batch(GenSpec(nv, no, "collision", seed=SEED), CASES, P)
    arrays = [(s.vehicle_array(), s.obstacle_array()) for s in scenes]
    rollout_arrays(*arrays[0], P)
    return sum(rollout_arrays(v, o, P).compute_time_s for v, o in arrays)


def test_criterion_01_easy_regime_success():
    _, s = batch(10, 0)
    ok = s.success >= 0.99
    report(1, ok, f"10v/0o success {s.success:.4f} (need >= 0.99)")
    assert ok


def test_criterion_02_hard_regime_success():
    _, s = batch(50, 25)
    ok = s.success >= 0.93
    report(2, ok, f"50v/25o success {s.success:.4f} (need >= 0.93)")
    assert ok


def test_criterion_03_ordering():
    a, b, c = batch(10, 0)[1].success, batch(50, 0)[1].success, batch(50, 25)[1].success
    ok = a >= b >= c
    report(3, ok, f"success 10v/0o {a:.4f} >= 50v/0o {b:.4f} >= 50v/25o {c:.4f}")
    assert ok


def test_criterion_04_runtime():
    easy = compute_seconds(10, 0)
    hard = compute_seconds(50, 25)
    ratio = hard / easy
    ok_abs = easy <= 1.0
    ok_ratio = ratio <= 5.0
    report(
        4, ok_abs and ok_ratio,
        f"10v/0o {easy:.3f} s per 100 cases (need <= 1.0); 50v/25o / 10v/0o per case = {ratio:.2f} (need <= 5)",
    )
    assert ok_abs, "absolute budget"
    assert ok_ratio, "scaling ratio"


def test_criterion_05_r_c_sensitivity():
    values = (0.0, 0.75, 1.5, 2.25, 3.0)
    rates = {rc: batch(10, 25, rc)[1].success for rc in values}
    best = max(rates, key=lambda rc: rates[rc])
    ok = best == 1.5 and rates[1.5] - rates[0.0] >= 0.10
    table = ", ".join(f"{rc:g}: {v:.4f}" for rc, v in rates.items())
    report(5, ok, f"10v/25o success by r_c {{{table}}}")
    assert ok


def test_criterion_06_round_trip_kinematics():
    rng = np.random.default_rng(6)
    n = 100_000
    worst = 0.0
    failures = 0
    for _ in range(n):
        s = VehicleState(
            rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-math.pi, math.pi),
            rng.uniform(-P.v_d, P.v_d), 0.0, 0.0, 0.0,
        )
        rs = reachable_set(s, P)
        th = wrap_angle(rng.uniform(rs.theta_lo, rs.theta_hi))
        v = rng.uniform(rs.v_lo, rs.v_hi)
        nxt = step(s, invert_controls(s, th, v, P), P)
        err = max(abs(wrap_angle(nxt.theta - th)), abs(nxt.v - v))
        worst = max(worst, err)
        failures += err > 1e-9
    report(6, failures == 0, f"{n} pairs, {failures} failures, worst error {worst:.2e}")
    assert failures == 0


def _random_scene(rng: np.random.Generator) -> Scene:
    nv = int(rng.integers(1, 6))
    no = int(rng.integers(0, 4))
    vehicles = [
        VehicleState(*rng.uniform(-8, 8, 2), rng.uniform(-math.pi, math.pi), rng.uniform(-2.5, 2.5),
                     *rng.uniform(-15, 15, 2), rng.uniform(-math.pi, math.pi))
        for _ in range(nv)
    ]
    obstacles = [ObstacleState(*rng.uniform(-8, 8, 2), rng.uniform(1, 3)) for _ in range(no)]
    return Scene(tuple(vehicles), tuple(obstacles))


def _transform(scene: Scene, rho: float, tx: float, ty: float) -> Scene:
    c, s_ = math.cos(rho), math.sin(rho)

    def pt(x, y):
        return c * x - s_ * y + tx, s_ * x + c * y + ty

    vehicles = []
    for v in scene.vehicles:
        x, y = pt(v.x, v.y)
        xt, yt = pt(v.x_tar, v.y_tar)
        vehicles.append(VehicleState(x, y, v.theta + rho, v.v, xt, yt, v.theta_tar + rho))
    obstacles = [ObstacleState(*pt(o.x, o.y), o.r) for o in scene.obstacles]
    return Scene(tuple(vehicles), tuple(obstacles))


def test_criterion_07_equivariance():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        scene = _random_scene(rng)
        rho, tx, ty = rng.uniform(-math.pi, math.pi), *rng.uniform(-100, 100, 2)
        dirs = list(rng.choice([-1.0, 1.0], scene.n_vehicles))
        a = compute_scene_controls(scene, dirs, P)
        b = compute_scene_controls(_transform(scene, rho, tx, ty), dirs, P)
        c, s_ = math.cos(rho), math.sin(rho)
        for ca, cb, da, db in zip(a.commands, b.commands, a.diagnostics, b.diagnostics):
            ux, uy = da.u_hat
            rot = (c * ux - s_ * uy, s_ * ux + c * uy)
            worst = max(
                worst,
                abs(rot[0] - db.u_hat[0]), abs(rot[1] - db.u_hat[1]),
                abs(da.v_hat - db.v_hat), abs(ca.steer - cb.steer), abs(ca.pedal - cb.pedal),
            )
    ok = worst <= 1e-9
    report(7, ok, f"1000 scenes, worst deviation {worst:.2e} (need <= 1e-9)")
    assert ok


def test_criterion_08_speed_bounds():
    runs = [r for key in ((10, 0), (50, 0), (50, 25)) for r in batch(*key)[0]]
    runs += [r for rc in (0.0, 0.75, 1.5, 2.25, 3.0) for r in batch(10, 25, rc)[0]]
    max_vhat = max(float(np.max(np.abs(r.diagnostics[..., I_VHAT]), initial=0.0)) for r in runs)
    max_v = max(float(np.max(np.abs(r.states[..., 3]), initial=0.0)) for r in runs)
    bound = P.v_d + P.pedal_max * P.dt
    ok = max_vhat <= P.v_d and max_v <= bound
    report(8, ok, f"{len(runs)} rollouts, max |v_hat| {max_vhat:.4f} (<= {P.v_d}), max |v| {max_v:.4f} (<= {bound})")
    assert ok


def test_criterion_09_clockwise_circulation():
    obstacle = ObstacleState(12.0, 0.0, 2.0)
    ego = VehicleState(0.0, 0.0, 0.0, 0.0, 25.0, 0.0, 0.0)
    scene = Scene((ego,), (obstacle,))
    inner = obstacle.r + P.r_veh
    outer = inner + P.r_c
    momenta = []
    for x, y, ux, uy in field_samples(scene, 0, P, spacing=0.25, bounds=(6.0, -6.0, 18.0, 6.0)):
        rx, ry = x - obstacle.x, y - obstacle.y
        d = math.hypot(rx, ry)
        # annulus where the avoidance term is active and the obstacle lies toward the target
        if inner < d <= outer and (ego.x_tar - x) * -rx + (ego.y_tar - y) * -ry > 0:
            momenta.append(rx * uy - ry * ux)
    r = rollout(scene, P)
    m = evaluate(r)
    ys = r.states[:, 0, 1]
    detour = float(ys.max())
    ok = (
        len(momenta) > 0 and max(momenta) < 0.0
        and m.success_rate == 1.0 and detour > inner and r.terminated_at < P.horizon
    )
    report(
        9, ok,
        f"{len(momenta)} arrows, max L_z {max(momenta):.3f} (< 0); detour peak y {detour:.2f} m on the "
        f"clockwise side, parked at step {r.terminated_at}",
    )
    assert ok


def test_criterion_10_label_consistency():
    runs = batch(10, 0)[0][:5] + batch(50, 25)[0][:2]
    buf = io.StringIO()
    for k, r in enumerate(runs):
        write_labels(label_records(r, scenario_id=str(k)), buf)
    buf.seek(0)
    worst = 0.0
    count = 0
    for line in buf:
        rec = LabelRecord.from_dict(json.loads(line))
        nxt = step(rec.state, ControlCommand(rec.ref_pedal, rec.ref_steer), P)
        r = runs[int(rec.scenario_id)]
        want = r.states[rec.t + 1, rec.vehicle_id]
        worst = max(
            worst,
            abs(nxt.x - want[0]), abs(nxt.y - want[1]),
            abs(wrap_angle(nxt.theta - rec.ref_theta_next)), abs(nxt.v - rec.ref_v_next),
        )
        count += 1
    parked = VehicleState(3.0, -4.0, 0.7, 0.0, 3.0, -4.0, 0.7)
    cost = state_cost(parked, Scene((parked,)), P, ego=0)
    ok = worst <= 1e-9 and cost == 0.0 and count > 0
    report(10, ok, f"{count} records replayed, worst error {worst:.2e}; parked isolated cost {cost}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
