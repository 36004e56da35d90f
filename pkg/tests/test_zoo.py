import numpy as np
import pytest

from lagflow.errors import GeometryCheckError, SpecError
from lagflow.geometry import check_connection_class, check_structure, einstein_report
from lagflow.zoo import (
    GeometrySpec,
    InitialSubmanifoldSpec,
    build_geometry,
    build_initial,
    conformal_plane,
    cotangent_bundle,
    flat_cn,
    torus_of_revolution,
)


@pytest.mark.parametrize("spec", [
    GeometrySpec("flat_cn", {"n": 1}),
    GeometrySpec("flat_cn", {"n": 2}),
    GeometrySpec("conformal_plane", {"amplitude": 0.3, "amplitude2": 0.1, "frequency2": 2}),
    GeometrySpec("cotangent_bundle"),
    GeometrySpec("cotangent_bundle", {"p_max": 2.0}, GeometrySpec("flat_torus", {"n": 1})),
    GeometrySpec("flat_cn", {"n": 2, "connection": "canonical"}),
])
def test_registry_geometries_are_einstein(spec):
    geom, conn = build_geometry(spec, validate=True)
    pts = geom.sample_points(20, np.random.default_rng(5), margin=0.01)
    assert check_structure(geom, pts).passed
    assert check_connection_class(conn, pts).passed
    rep = einstein_report(conn, pts)
    assert rep.residual < 1e-6 and abs(rep.f_estimate) < 1e-6


def test_generic_canonical_connection_is_not_einstein():
    geom, conn = build_geometry(GeometrySpec("cotangent_bundle", {"connection": "canonical"}), validate=False)
    pts = geom.sample_points(20, np.random.default_rng(5), margin=0.01)
    assert check_connection_class(conn, pts).passed
    assert einstein_report(conn, pts).residual > 1e-3


def test_liouville_spec():
    spec = GeometrySpec("cotangent_bundle", {"liouville_shift": 0.5}, GeometrySpec("flat_torus", {"n": 2}))
    geom, conn = build_geometry(spec)
    rep = einstein_report(conn, geom.sample_points(20, np.random.default_rng(0), margin=0.01))
    assert rep.f_estimate == pytest.approx(-1.0, abs=1e-6)


def test_negative_controls_fail_validation():
    with pytest.raises(GeometryCheckError):
        build_geometry(GeometrySpec("cotangent_bundle", {"j_corruption": 0.01}), validate=True)
    with pytest.raises(GeometryCheckError):
        build_geometry(GeometrySpec("flat_cn", {"n": 2, "connection_noise": 0.01}), validate=True)
    # not validated by default
    geom, conn = build_geometry(GeometrySpec("flat_cn", {"n": 2, "connection_noise": 0.01}))
    assert "noise" in conn.name
    with pytest.raises(GeometryCheckError):
        build_geometry(GeometrySpec("cotangent_bundle", {"connection": "levi_civita"}), validate=True)


@pytest.mark.parametrize("spec", [
    GeometrySpec("hyperbolic"),
    GeometrySpec("flat_cn", {"n": 3}),
    GeometrySpec("flat_cn", {"connection": "weird"}),
    GeometrySpec("flat_cn", base=GeometrySpec("flat_torus")),
    GeometrySpec("cotangent_bundle", base=GeometrySpec("sphere")),
    GeometrySpec("cotangent_bundle", base=GeometrySpec("torus_of_revolution", {"a": 1.0, "b": 2.0})),
    GeometrySpec("conformal_plane", {"frequency": 1.5}),
    GeometrySpec("conformal_plane", {"amplitude": "big"}),
])
def test_invalid_specs(spec):
    with pytest.raises(SpecError):
        build_geometry(spec)


def test_cotangent_chart_box():
    geom, _ = cotangent_bundle(torus_of_revolution(), p_max=1.5)
    assert geom.box[2] == (-1.5, 1.5)
    assert geom.boundary_distance(np.array([[0.0, 0.0, 1.0, -0.2]])) == pytest.approx(0.5)
    assert geom.periods[0] == pytest.approx(2 * np.pi)


def test_conformal_returns_psi():
    geom, conn, psi_parts = conformal_plane(0.2)
    y = np.array([0.3, 1.1])
    psi, grad, _ = psi_parts(y)
    assert psi == pytest.approx(0.2 * np.sin(0.3))
    np.testing.assert_allclose(geom.metric(y), np.exp(2 * psi) * np.eye(2))


def test_initial_circle_and_torus():
    geom, conn = flat_cn(1)
    grid = build_initial(InitialSubmanifoldSpec("circle", {"r": 2.0}), geom, conn, (32,))
    np.testing.assert_allclose(np.linalg.norm(grid.points, axis=-1), 2.0)
    geom, conn = flat_cn(2)
    grid, tangents = build_initial(InitialSubmanifoldSpec("product_torus", {"r1": 1.0, "r2": 0.5}),
                                   geom, conn, (16, 8), with_tangents=True)
    assert grid.shape == (16, 8)
    np.testing.assert_allclose(np.linalg.norm(tangents[..., 0, :], axis=-1), 1.0)
    np.testing.assert_allclose(np.linalg.norm(tangents[..., 1, :], axis=-1), 0.5)


def test_graph_has_winding_lift():
    geom, conn = build_geometry(GeometrySpec("cotangent_bundle"))
    grid = build_initial(InitialSubmanifoldSpec("graph_of_one_form", {"c1": 0.3}), geom, conn, (16, 16))
    np.testing.assert_array_equal(grid.lift[:2], np.eye(2))
    per = grid.periodic_part()
    # x coordinate winds once; the periodic part is constant along the grid
    np.testing.assert_allclose(per[..., 0], 0.0, atol=1e-14)
    np.testing.assert_allclose(np.mean(grid.points[..., 2]), 0.3, atol=1e-12)


def test_perturbed_eps_zero_matches_base_bitwise():
    geom, conn = flat_cn(2)
    base = build_initial(InitialSubmanifoldSpec("product_torus"), geom, conn, (16, 16))
    pert = build_initial(InitialSubmanifoldSpec("perturbed", {"base": "product_torus", "eps": 0.0}),
                         geom, conn, (16, 16))
    assert np.array_equal(base.points, pert.points)
    geom, conn = build_geometry(GeometrySpec("cotangent_bundle"))
    base = build_initial(InitialSubmanifoldSpec("graph_of_one_form"), geom, conn, (12, 12))
    pert = build_initial(InitialSubmanifoldSpec("perturbed", {"base": "graph_of_one_form", "eps": 0.0}),
                         geom, conn, (12, 12))
    assert np.array_equal(base.points, pert.points)


@pytest.mark.parametrize("kind,geom_fn,res", [
    ("circle", lambda: flat_cn(2), (16, 16)),
    ("product_torus", lambda: flat_cn(1), (16,)),
    ("zero_section", lambda: flat_cn(2), (16, 16)),
    ("product_torus", lambda: flat_cn(2), (16,)),
])
def test_initial_mismatches(kind, geom_fn, res):
    geom, conn = geom_fn()
    with pytest.raises(SpecError):
        build_initial(InitialSubmanifoldSpec(kind), geom, conn, res)


def test_initial_spec_validation():
    with pytest.raises(SpecError):
        InitialSubmanifoldSpec("knot").validate()
    with pytest.raises(SpecError):
        InitialSubmanifoldSpec("perturbed", {"base": "perturbed"}).validate()
    with pytest.raises(SpecError):
        build_initial(InitialSubmanifoldSpec("circle", {"r": -1.0}), *flat_cn(1), (16,))
