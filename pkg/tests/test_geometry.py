import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagflow.geometry import (
    ChartGeometry,
    Connection,
    canonical_connection,
    check_connection_class,
    check_structure,
    curvature,
    einstein_report,
    levi_civita,
    levi_civita_connection,
    ricci_form,
    shift_connection,
    torsion,
)
from lagflow.tensor import FdScheme
from lagflow.zoo import conformal_plane, cotangent_bundle, flat_cn, flat_torus, liouville_form, torus_of_revolution

J0 = np.array([[0.0, -1.0], [1.0, 0.0]])


def _pts(geom, count=20, seed=1, margin=1e-3):
    return geom.sample_points(count, np.random.default_rng(seed), margin=margin)


def surface_of_revolution(a=3.0, b=1.0):
    """``dx^2 + u(x)^2 dy^2`` with the compatible rotation ``J d_x = d_y / u``."""
    def u(y):
        return a + b * np.cos(np.asarray(y)[..., 0])

    def metric(y):
        uu = u(y)
        out = np.zeros(uu.shape + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = uu ** 2
        return out

    def J(y):
        uu = u(y)
        out = np.zeros(uu.shape + (2, 2))
        out[..., 1, 0] = 1 / uu
        out[..., 0, 1] = -uu
        return out

    return ChartGeometry(2, metric, J, periods=(2 * np.pi, 2 * np.pi), name="revolution")


def test_flat_levi_civita_vanishes():
    geom, conn = flat_cn(1)
    pts = _pts(geom)
    np.testing.assert_array_equal(levi_civita(geom, pts), 0.0)
    geom2, _ = flat_cn(2)
    np.testing.assert_allclose(canonical_connection(geom2)(_pts(geom2)), 0.0, atol=1e-12)


def test_conformal_christoffels_closed_form():
    eps = 0.3
    geom, _, psi_parts = conformal_plane(amplitude=eps)
    pts = _pts(geom)
    # force the FD path by dropping the analytic metric derivative
    fd_geom = ChartGeometry(2, geom.metric, geom.complex_structure, periods=geom.periods)
    G = levi_civita(fd_geom, pts, FdScheme(step=1e-3))
    _, grad, _ = psi_parts(pts)
    e = np.eye(2)
    # delta^a_b d_c psi + delta^a_c d_b psi - delta_bc d^a psi (d^a psi = grad_a, g conformal to delta)
    oracle = (np.einsum("ab,...c->...abc", e, grad) + np.einsum("ac,...b->...abc", e, grad)
              - np.einsum("bc,...a->...abc", e, grad))
    np.testing.assert_allclose(G, oracle, atol=1e-7)


def test_torus_base_christoffels():
    a, b = 3.0, 1.0
    base = torus_of_revolution(a, b)
    x = np.linspace(0, 2 * np.pi, 13)[:, None] * np.ones((1, 2))
    G = base.christoffels(x)
    oracle = -b * np.sin(x[:, 0]) / (a + b * np.cos(x[:, 0]))
    np.testing.assert_allclose(G[:, 1, 0, 1], oracle, atol=1e-14)
    np.testing.assert_allclose(G[:, 1, 1, 0], oracle, atol=1e-14)
    # FD Koszul of the same metric agrees
    geom = surface_of_revolution(a, b)
    np.testing.assert_allclose(levi_civita(geom, x, FdScheme(step=1e-3)), G, atol=1e-9)


def test_gauss_curvature_torus_of_revolution():
    a, b = 3.0, 1.0
    geom = surface_of_revolution(a, b)
    pts = _pts(geom)
    conn = levi_civita_connection(geom, FdScheme(step=1e-3))
    R = curvature(conn, pts, FdScheme(step=1e-2)).riemann
    g = geom.metric(pts)
    R1212 = np.einsum("...a,...a->...", g[:, 0, :], R[:, :, 1, 0, 1])
    K = R1212 / np.linalg.det(g)
    # K = -u''/u for dx^2 + u^2 dy^2
    oracle = b * np.cos(pts[:, 0]) / (a + b * np.cos(pts[:, 0]))
    np.testing.assert_allclose(K, oracle, atol=1e-6)


def test_kahler_canonical_equals_levi_civita():
    geom = surface_of_revolution()
    pts = _pts(geom)
    sch = FdScheme(step=1e-3)
    np.testing.assert_allclose(canonical_connection(geom, sch)(pts), levi_civita(geom, pts, sch), atol=1e-8)


def test_cotangent_connections_in_class():
    geom, conn = cotangent_bundle(torus_of_revolution())
    pts = _pts(geom, margin=0.01)
    assert check_connection_class(conn, pts).passed
    assert check_connection_class(canonical_connection(geom), pts).passed
    # Levi-Civita is not complex on the non-Kaehler cotangent bundle
    pts[:, 2:] = np.abs(pts[:, 2:]) + 0.5
    lc = check_connection_class(levi_civita_connection(geom), pts)
    assert lc.max_residuals["nabla_J"] > lc.tol


def test_structure_checks():
    for geom, _ in (flat_cn(1), flat_cn(2)):
        rep = check_structure(geom, _pts(geom))
        assert all(v == 0.0 for v in rep.max_residuals.values())
    geom, _ = cotangent_bundle(torus_of_revolution())
    rep = check_structure(geom, _pts(geom, margin=0.01))
    assert rep.passed and rep.tol == 1e-8
    bad = check_structure(geom.corrupted(0.01), _pts(geom, margin=0.01))
    assert not bad.passed
    assert bad.max_residuals["j_squared"] > 1e-3


def test_shift_sigma_zero_is_identity():
    geom, conn = cotangent_bundle(torus_of_revolution())
    pts = _pts(geom, margin=0.01)
    shifted = shift_connection(conn, lambda y: np.zeros(np.shape(y)))
    np.testing.assert_array_equal(shifted(pts), conn(pts))


def test_shift_closed_sigma_keeps_ricci():
    geom, conn = flat_cn(1)
    pts = _pts(geom)
    # sigma = d(sin y0 cos y1)
    def sigma(y):
        return np.stack([np.cos(y[..., 0]) * np.cos(y[..., 1]), -np.sin(y[..., 0]) * np.sin(y[..., 1])], axis=-1)
    sh = shift_connection(conn, sigma)
    sch = FdScheme(step=1e-3)
    np.testing.assert_allclose(ricci_form(sh, pts, sch), ricci_form(conn, pts, sch), atol=1e-9)


def test_shift_ricci_law_flat_c1():
    geom, conn = flat_cn(1)
    pts = _pts(geom)
    sh = shift_connection(conn, lambda y: np.stack([y[..., 1], 0 * y[..., 0]], axis=-1))
    diff = ricci_form(sh, pts) - ricci_form(conn, pts)
    # d sigma = -dy0 ^ dy1, so rho~ - rho = -n d sigma = dy0 ^ dy1
    expect = np.array([[0.0, 1.0], [-1.0, 0.0]])
    np.testing.assert_allclose(diff, np.broadcast_to(expect, diff.shape), atol=1e-6)


def test_shift_torsion_law():
    geom, conn = cotangent_bundle(torus_of_revolution())
    pts = _pts(geom, margin=0.01)
    lam = liouville_form(2)
    sh = shift_connection(conn, lam)
    J = geom.complex_structure(pts)
    s = lam(pts)
    # (sigma ^ J)^a_bc = sigma_b J^a_c - sigma_c J^a_b
    wedge = np.einsum("...b,...ac->...abc", s, J) - np.einsum("...c,...ab->...abc", s, J)
    np.testing.assert_allclose(torsion(sh, pts) - torsion(conn, pts), wedge, atol=1e-14)


def test_torsion_levi_civita_zero_and_cotangent_nonzero():
    geom = conformal_plane()[0]
    np.testing.assert_allclose(torsion(levi_civita_connection(geom), _pts(geom)), 0.0, atol=1e-15)
    geom, conn = cotangent_bundle(torus_of_revolution())
    pts = _pts(geom, margin=0.01)
    pts[:, 2:] += 0.5
    T = torsion(conn, pts)
    assert np.max(np.abs(T)) > 1e-2
    np.testing.assert_allclose(T, -np.swapaxes(T, -1, -2), atol=0)


def test_curvature_flat_vanishes():
    geom, _ = flat_cn(2)
    cur = curvature(canonical_connection(geom), _pts(geom))
    np.testing.assert_allclose(cur.riemann, 0.0, atol=1e-9)
    np.testing.assert_allclose(cur.ricci_form, 0.0, atol=1e-9)


def test_ricci_cotangent_and_conformal_vanish():
    geom, conn = cotangent_bundle(torus_of_revolution())
    np.testing.assert_allclose(ricci_form(conn, _pts(geom, margin=0.01)), 0.0, atol=1e-6)
    geom, conn, _ = conformal_plane(0.2, 1.0, 0.1, 2.0)
    np.testing.assert_allclose(ricci_form(conn, _pts(geom)), 0.0, atol=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_curvature_symmetries_random(seed):
    geom, conn = cotangent_bundle(torus_of_revolution())
    rng = np.random.default_rng(seed)
    pts = geom.sample_points(4, rng, margin=0.01)
    R = curvature(conn, pts).riemann
    g = geom.metric(pts)
    J = geom.complex_structure(pts)
    Rl = np.einsum("...fa,...adbe->...fdbe", g, R)  # <R(b,e) d, f>
    np.testing.assert_allclose(Rl, -np.swapaxes(Rl, -1, -2), atol=1e-6)
    np.testing.assert_allclose(Rl, -np.swapaxes(Rl, 1, 2), atol=1e-6)
    # <R(X,Y) J V, W> = <R(X,Y) J W, V>: equivalently R commutes with J
    RJ = np.einsum("...adbe,...dc->...acbe", R, J)
    JR = np.einsum("...am,...mcbe->...acbe", J, R)
    np.testing.assert_allclose(RJ, JR, atol=1e-6)


def test_einstein_reports():
    for geom, conn in (flat_cn(1), flat_cn(2), cotangent_bundle(torus_of_revolution()),
                       conformal_plane()[:2]):
        rep = einstein_report(conn, _pts(geom, margin=0.01))
        assert rep.residual < 1e-6
        assert abs(rep.f_estimate) < 1e-6


@pytest.mark.parametrize("c", [0.5, -0.25])
def test_liouville_shift_einstein_function(c):
    base = flat_torus(2)
    geom, conn = cotangent_bundle(base)
    lam = liouville_form(2)
    sh = shift_connection(conn, lambda y: c * lam(y))
    rep = einstein_report(sh, _pts(geom, margin=0.01))
    assert rep.residual < 1e-6
    np.testing.assert_allclose(rep.f_values, -2 * c, atol=1e-6)


def test_einstein_report_needs_points():
    geom, conn = flat_cn(1)
    with pytest.raises(ValueError):
        einstein_report(conn, np.zeros((2, 2)))


def test_symplectic_parallel_for_class_members():
    geom, conn = cotangent_bundle(torus_of_revolution())
    pts = _pts(geom, margin=0.01)
    G = conn(pts)
    om = geom.omega(pts)
    dom = geom.domega(pts)
    nom = (np.einsum("...abk->...kab", dom) - np.einsum("...mka,...mb->...kab", G, om)
           - np.einsum("...mkb,...am->...kab", G, om))
    np.testing.assert_allclose(nom, 0.0, atol=1e-9)


def test_connection_is_callable_object():
    geom, conn = flat_cn(1)
    assert isinstance(conn, Connection)
    assert conn.dchristoffels(np.zeros(2)).shape == (2, 2, 2, 2)
