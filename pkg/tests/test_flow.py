import numpy as np
import pytest

from lagflow.flow import FlowConfig, MonitorRecord, TERMINATIONS, run, stable_dt, step, velocity_field
from lagflow.submanifold import compute_frames
from lagflow.zoo import GeometrySpec, InitialSubmanifoldSpec, build_geometry, build_initial, flat_cn


def circle(m=32, r=1.0):
    geom, conn = flat_cn(1)
    return build_initial(InitialSubmanifoldSpec("circle", {"r": r}), geom, conn, (m,))


def radius(grid):
    return float(np.mean(np.linalg.norm(grid.points, axis=-1)))


def integrate(grid, dt, t_end, integrator):
    for _ in range(int(round(t_end / dt))):
        grid = step(grid, dt, integrator)
    return grid


def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(t_end=0.0)
    with pytest.raises(ValueError):
        FlowConfig(t_end=1.0, dt_mode="fixed")
    with pytest.raises(ValueError):
        FlowConfig(t_end=1.0, cfl=1.5)
    with pytest.raises(ValueError):
        FlowConfig(t_end=1.0, integrator="leapfrog")
    with pytest.raises(ValueError):
        FlowConfig(t_end=1.0, dt_mode="adaptive")
    with pytest.raises(ValueError):
        FlowConfig(t_end=1.0, monitor_stride=0)
    assert TERMINATIONS == ("reached_t_end", "eta_degenerate", "speed_blowup", "chart_exit")


def test_velocity_circle_and_torus():
    grid = circle(256)
    v = velocity_field(grid)
    np.testing.assert_allclose(np.linalg.norm(v, axis=-1), 1.0, atol=1e-4)
    assert np.all(np.einsum("...a,...a->...", v, grid.points) < 0)
    geom, conn = flat_cn(2)
    tor = build_initial(InitialSubmanifoldSpec("product_torus"), geom, conn, (32, 32))
    np.testing.assert_allclose(np.linalg.norm(velocity_field(tor), axis=-1), np.sqrt(2), atol=1e-4)


def test_zero_velocity_step_is_identity():
    geom, conn = build_geometry(GeometrySpec("cotangent_bundle"))
    grid = build_initial(InitialSubmanifoldSpec("zero_section"), geom, conn, (16, 16))
    assert np.max(np.abs(velocity_field(grid))) < 1e-6
    for integ in ("euler", "rk4"):
        out = step(grid, 0.01, integ)
        assert out.shape == grid.shape and out.spacing == grid.spacing
        assert np.max(np.abs(out.points - grid.points)) < 1e-8


def test_euler_step_shrinks_by_dt_over_r():
    r, dt = 1.5, 1e-3
    out = step(circle(64, r), dt, "euler")
    assert radius(out) == pytest.approx(r - dt / r, abs=1e-9)


def test_rk4_beats_euler_and_orders():
    # temporal error only: compare against a fine rk4 solution on the same grid
    grid = circle(16)
    ref = radius(integrate(grid, 0.001, 0.1, "rk4"))
    err = {}
    for integ in ("euler", "rk4"):
        err[integ] = [abs(radius(integrate(grid, dt, 0.1, integ)) - ref) for dt in (0.02, 0.01)]
    assert err["rk4"][1] * 100 < err["euler"][1]
    assert np.log2(err["euler"][0] / err["euler"][1]) == pytest.approx(1, abs=0.2)
    assert np.log2(err["rk4"][0] / err["rk4"][1]) == pytest.approx(4, abs=0.5)


def test_stable_dt():
    grid = circle(64)
    fr = compute_frames(grid, full=False)
    h = 2 * np.pi / 64
    assert stable_dt(fr, FlowConfig(t_end=1.0, cfl=0.2)) == pytest.approx(0.2 * h * h / max(1.0, h), rel=1e-6)
    assert stable_dt(fr, FlowConfig(t_end=1.0, dt_mode="fixed", dt=0.01)) == 0.01


def test_run_circle_law_and_records():
    cfg = FlowConfig(t_end=0.1, monitor_stride=7)
    seen = []
    res = run(circle(64), cfg, on_state=lambda n, t, s: seen.append((n, t)))
    assert res.termination == "reached_t_end"
    assert res.t == pytest.approx(0.1, abs=1e-14)
    assert radius(res.final_state) == pytest.approx(np.sqrt(0.8), rel=1e-6)
    assert [n for n, _ in seen] == list(range(res.steps + 1))
    steps = [rec.step for rec in res.records]
    assert steps[-1] == res.steps
    assert all(s % 7 == 0 for s in steps[:-1])
    vols = [rec.volume for rec in res.records]
    assert all(b <= a for a, b in zip(vols, vols[1:]))
    assert res.records[-1].volume == pytest.approx(2 * np.pi * np.sqrt(0.8), rel=1e-6)
    assert isinstance(res.records[0], MonitorRecord) and len(res.records[0].row()) == 7


def test_run_is_deterministic():
    cfg = FlowConfig(t_end=0.02, monitor_stride=2)
    geom, conn = build_geometry(GeometrySpec("cotangent_bundle"))
    grid = build_initial(InitialSubmanifoldSpec("graph_of_one_form"), geom, conn, (16, 16))
    a, b = run(grid, cfg), run(grid, cfg)
    assert np.array_equal(a.final_state.points, b.final_state.points)
    assert [r.row() for r in a.records] == [r.row() for r in b.records]


def test_run_chart_exit():
    geom, conn = build_geometry(GeometrySpec("cotangent_bundle", {"p_max": 0.35}))
    grid = build_initial(InitialSubmanifoldSpec("graph_of_one_form", {"c1": 0.3, "f_amp": 0.02}),
                         geom, conn, (16, 16))
    res = run(grid, FlowConfig(t_end=1.0, monitor_stride=50))
    assert res.termination == "chart_exit"
    # either the margin was hit or a stage of the last step left the box
    assert geom.boundary_distance(res.final_state.points) < geom.boundary_distance(grid.points)


def test_run_torus_past_focal_time():
    geom, conn = flat_cn(2)
    grid = build_initial(InitialSubmanifoldSpec("product_torus"), geom, conn, (12, 12))
    res = run(grid, FlowConfig(t_end=0.6, monitor_stride=1000))
    assert res.termination in ("eta_degenerate", "speed_blowup")
    assert 0.45 < res.t < 0.5
    assert res.records[-1].volume < 1e-2
