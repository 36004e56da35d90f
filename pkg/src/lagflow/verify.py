"""Randomized identity harness.

Every identity is evaluated as a residual field at two finite-difference
resolutions: the configured one and a coarser one (doubled chart step for
chart-point identities, doubled grid stride for grid identities).  The
difference gives an error estimate ``est = max|r_fine - r_coarse| / (2**p - 1)``
with ``p`` the effective order of the scheme; the tolerance is ``10 * est``,
floored at ``TOL_FLOOR`` and capped at ``TOL_CAP``.  A residual that is
genuinely nonzero (rather than truncation error) barely changes between the
two resolutions, so its estimate stays small and it fails.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import ChartGeometry, Connection, curvature, shift_connection, torsion_derivative
from .submanifold import (
    LAGRANGIAN_THRESHOLD,
    GridFrames,
    ImmersedGrid,
    compute_frames,
    connection_difference_check,
    gmc_vector_definition,
    gmc_vector_via_form,
    grid_derivative,
    lagrangian_form_vector,
    mean_curvature_curl,
    pullback_ricci,
    two_form_norm,
    vector_norm,
)
from .tensor import FdScheme

__all__ = [
    "IDENTITIES",
    "POINT_IDENTITIES",
    "GRID_IDENTITIES",
    "IdentityResult",
    "IdentitySuiteReport",
    "run_suite",
    "convergence_slopes",
    "probe_one_form",
]

POINT_IDENTITIES = (
    "curvature_antisym",
    "curvature_J_sym",
    "bianchi_torsion",
    "connection_difference",
    "shift_curvature_law",
    "shift_torsion_law",
    "symplectic_parallel",
)
GRID_IDENTITIES = (
    "codazzi",
    "torsion_symmetry_A",
    "vector_form_equivalence",
    "lagrangian_reduction",
    "dH_plus_ricci",
)
IDENTITIES = (
    "curvature_antisym",
    "curvature_J_sym",
    "bianchi_torsion",
    "codazzi",
    "torsion_symmetry_A",
    "connection_difference",
    "shift_curvature_law",
    "shift_torsion_law",
    "vector_form_equivalence",
    "lagrangian_reduction",
    "dH_plus_ricci",
    "symplectic_parallel",
)

TOL_FLOOR = 1e-9
TOL_CAP = 1e-4


@dataclass(frozen=True)
class IdentityResult:
    name: str
    samples: int
    residual: float
    tolerance: float
    error_estimate: float
    passed: bool
    skipped: bool = False
    note: str = ""

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        text = (f"{self.name:<24s} {status}  samples={self.samples:<6d} residual={self.residual:.6e} "
                f"tol={self.tolerance:.6e} est={self.error_estimate:.6e}")
        return f"{text}  ({self.note})" if self.note else text


@dataclass
class IdentitySuiteReport:
    geometry: str
    connection: str
    seed: int
    results: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values() if not r.skipped)

    def failed(self) -> list[str]:
        return [k for k, r in self.results.items() if not r.skipped and not r.passed]

    def lines(self) -> list[str]:
        head = f"identity suite: geometry={self.geometry} connection={self.connection} seed={self.seed}"
        return [head] + [self.results[k].line() for k in IDENTITIES]


# ---------------------------------------------------------------------------
# helpers


def probe_one_form(y):
    """Smooth 1-form used to exercise the shift laws, and its exact derivative.

    ``sigma_b = 0.3 sin(y_{b+1} + b)`` (indices mod dim); returns
    ``(sigma, dsigma)`` with ``dsigma[..., b, k] = d_k sigma_b``.
    """
    y = np.asarray(y, dtype=float)
    d = y.shape[-1]
    nxt = (np.arange(d) + 1) % d
    arg = y[..., nxt] + np.arange(d)
    sigma = 0.3 * np.sin(arg)
    dsigma = np.zeros(y.shape + (d,))
    dsigma[..., np.arange(d), nxt] = 0.3 * np.cos(arg)
    return sigma, dsigma


def _unit_vectors(rng, g, count):
    """``count`` random vectors per point from the unit ball, scaled to unit g-norm."""
    S, d = g.shape[0], g.shape[-1]
    v = rng.normal(size=(count, S, d))
    v *= (rng.random((count, S, 1)) ** (1.0 / d)) / np.linalg.norm(v, axis=-1, keepdims=True)
    return v / vector_norm(v, g)[..., None]


def _apply_R(R, X, Y, V):
    # (R(X, Y) V)^a
    return np.einsum("...adbe,...b,...e,...d->...a", R, X, Y, V)


def _apply(G, X, Y):
    return np.einsum("...abc,...b,...c->...a", G, X, Y)


def _dot(u, v, g):
    return np.einsum("...a,...ab,...b->...", u, g, v)


# ---------------------------------------------------------------------------
# residual fields


def _point_fields(conn: Connection, pts, vecs, scheme: FdScheme) -> dict:
    geom = conn.geometry
    X, Y, Z, W = vecs
    g = geom.metric(pts)
    J = geom.complex_structure(pts)
    curv = curvature(conn, pts, scheme)
    R, T = curv.riemann, curv.torsion
    G = conn(pts)
    out = {}

    def JV(v):
        return np.einsum("...ab,...b->...a", J, v)

    rxy_zw = _dot(_apply_R(R, X, Y, Z), W, g)
    out["curvature_antisym"] = np.stack([
        rxy_zw + _dot(_apply_R(R, Y, X, Z), W, g),
        rxy_zw + _dot(_apply_R(R, X, Y, W), Z, g),
    ], axis=-1)
    r_jz = _dot(_apply_R(R, X, Y, JV(Z)), W, g)
    out["curvature_J_sym"] = np.stack([
        r_jz - _dot(JV(_apply_R(R, X, Y, Z)), W, g),
        r_jz - _dot(_apply_R(R, X, Y, JV(W)), Z, g),
    ], axis=-1)

    nT = torsion_derivative(conn, pts, scheme)  # [b, a, c, e]

    def cyc(U, V, Q):
        lhs = _apply_R(R, U, V, Q)
        rhs = _apply(T, _apply(T, U, V), Q) + np.einsum("...bace,...b,...c,...e->...a", nT, U, V, Q)
        return lhs - rhs

    out["bianchi_torsion"] = cyc(X, Y, Z) + cyc(Y, Z, X) + cyc(Z, X, Y)

    out["connection_difference"] = connection_difference_check(conn, pts, X, Y, Z, scheme)[..., None]

    sigma = lambda y: probe_one_form(y)[0]  # noqa: E731
    shifted = shift_connection(conn, sigma)
    _, dsig = probe_one_form(pts)
    dsig_xy = np.einsum("...bk,...k,...b->...", dsig, X, Y) - np.einsum("...bk,...k,...b->...", dsig, Y, X)
    R_sh = curvature(shifted, pts, scheme).riemann
    out["shift_curvature_law"] = (
        _apply_R(R_sh, X, Y, Z) - _apply_R(R, X, Y, Z) - dsig_xy[..., None] * JV(Z)
    )
    sig = sigma(pts)
    T_sh = shifted(pts) - np.swapaxes(shifted(pts), -1, -2)
    sx = np.einsum("...b,...b->...", sig, X)[..., None]
    sy = np.einsum("...b,...b->...", sig, Y)[..., None]
    out["shift_torsion_law"] = _apply(T_sh, X, Y) - _apply(T, X, Y) - (sx * JV(Y) - sy * JV(X))

    om = geom.omega(pts)
    dom = geom.domega(pts, scheme)  # [a, b, k]
    # (nabla_c omega)_ab = d_c omega_ab - G^m_ca omega_mb - G^m_cb omega_am
    nom = (np.einsum("...abc->...cab", dom)
           - np.einsum("...mca,...mb->...cab", G, om)
           - np.einsum("...mcb,...am->...cab", G, om))
    out["symplectic_parallel"] = np.einsum("...cab,...c,...a,...b->...", nom, X, Y, Z)[..., None]
    return out


def _point_norms(fields, g) -> dict:
    """Scalar residual per sample: g-norm for vector fields, abs max otherwise."""
    res = {}
    for k, v in fields.items():
        if k in ("bianchi_torsion", "shift_curvature_law", "shift_torsion_law"):
            res[k] = vector_norm(v, g)
        else:
            res[k] = np.max(np.abs(v), axis=-1)
    return res


def _induced_riemann(frames: GridFrames, stride: int):
    """``R^m_kij`` (as ``[..., m, k, i, j]``) of the induced metric from the induced Christoffels."""
    grid = frames.grid
    Gi = frames.gamma_ind  # [m, i, j]
    dG = np.stack([grid_derivative(Gi, a, grid.spacing[a], grid.scheme, stride)
                   for a in range(grid.intrinsic_dim)], axis=-1)  # [m, j, k, i] = d_i Gamma^m_jk
    return (
        np.einsum("...mjki->...mkij", dG)
        - np.einsum("...mikj->...mkij", dG)
        + np.einsum("...mia,...ajk->...mkij", Gi, Gi)
        - np.einsum("...mja,...aik->...mkij", Gi, Gi)
    )


def _codazzi_field(frames: GridFrames, stride: int):
    grid = frames.grid
    n = grid.intrinsic_dim
    Ah = frames.A_hat  # [j, k, a]
    dA = np.stack([grid_derivative(Ah, i, grid.spacing[i], grid.scheme, stride)
                   for i in range(n)], axis=n)  # [i, j, k, a] = d_i A_jk
    Gi = frames.gamma_ind
    nabla = (
        dA
        - np.einsum("...mij,...mka->...ijka", Gi, Ah)
        - np.einsum("...mik,...jma->...ijka", Gi, Ah)
        + np.einsum("...abc,...ib,...jkc->...ijka", frames.gamma_hat, frames.Fi, Ah)
    )
    lhs = nabla - np.swapaxes(nabla, n, n + 1)
    Rin = _induced_riemann(frames, stride)
    Rhat = curvature(grid.connection, frames.F, grid.scheme).riemann
    rhs = (
        -np.einsum("...mkij,...ma->...ijka", Rin, frames.Fi)
        + np.einsum("...adbe,...ib,...je,...kd->...ijka", Rhat, frames.Fi, frames.Fi, frames.Fi)
    )
    return lhs - rhs


def _grid_fields(grid: ImmersedGrid, stride: int, lagrangian: bool) -> tuple[dict, dict]:
    frames = compute_frames(grid, stride=stride)
    g = frames.g_amb
    fields, norms = {}, {}

    def vec(name, v, axes):
        fields[name] = v
        nrm = vector_norm(v, g.reshape(g.shape[:-2] + (1,) * axes + g.shape[-2:]))
        norms[name] = nrm.reshape(nrm.shape[:grid.intrinsic_dim] + (-1,)).max(axis=-1)

    if grid.intrinsic_dim == 2:
        vec("codazzi", _codazzi_field(frames, stride), 3)
    tors = frames.A_hat - np.swapaxes(frames.A_hat, -2, -3) - np.einsum(
        "...abc,...ib,...jc->...ija", frames.torsion, frames.Fi, frames.Fi)
    vec("torsion_symmetry_A", tors, 2)
    via_form = gmc_vector_via_form(frames, stride)
    vec("vector_form_equivalence", gmc_vector_definition(frames) - via_form, 0)
    if lagrangian:
        vec("lagrangian_reduction", via_form - lagrangian_form_vector(frames), 0)
        if grid.intrinsic_dim == 2:
            beta = mean_curvature_curl(frames, stride) + pullback_ricci(frames)
            fields["dH_plus_ricci"] = beta
            norms["dH_plus_ricci"] = two_form_norm(beta, frames.g_inv)
    fields["pullback_omega"] = frames.omega_ind
    norms["pullback_omega"] = two_form_norm(frames.omega_ind, frames.g_inv)
    return fields, norms


def _tolerance(est: float, tol_scale: float) -> float:
    return min(max(10.0 * est, TOL_FLOOR), TOL_CAP) * tol_scale


def _is_lagrangian(grid: ImmersedGrid) -> tuple[bool, float]:
    """Lagrangian up to discretization: ``F*omega`` below threshold or below its own error estimate."""
    om = [compute_frames(grid, full=False, stride=s).omega_ind for s in (1, 2)]
    p = grid.scheme.effective_order
    est = float(np.max(np.abs(om[0] - om[1]))) / (2 ** p - 1)
    size = float(np.max(np.abs(om[0])))
    return size < max(LAGRANGIAN_THRESHOLD, 10 * est), size


# ---------------------------------------------------------------------------


def run_suite(geometry: ChartGeometry, connection: Connection, grid: Optional[ImmersedGrid] = None,
              samples: int = 20, seed: int = 0, scheme: Optional[FdScheme] = None,
              tol_scale: float = 1.0) -> IdentitySuiteReport:
    """Evaluate all identities; grid identities are skipped without a grid."""
    if samples < 10:
        raise ValueError("at least 10 samples are required")
    if connection.geometry is not geometry:
        raise ValueError("connection belongs to a different geometry")
    scheme = scheme or (grid.scheme if grid is not None else FdScheme())
    p = scheme.effective_order
    rng = np.random.default_rng(seed)
    coarse = scheme.with_step(2 * scheme.step)
    pts = geometry.sample_points(samples, rng, margin=4 * coarse.radius)
    g = geometry.metric(pts)
    vecs = _unit_vectors(rng, g, 4)

    fine = _point_fields(connection, pts, vecs, scheme)
    rough = _point_fields(connection, pts, vecs, coarse)
    norms = _point_norms(fine, g)
    report = IdentitySuiteReport(geometry.name, connection.name, seed)
    for name in POINT_IDENTITIES:
        est = float(np.max(np.abs(fine[name] - rough[name]))) / (2 ** p - 1)
        res = float(np.max(norms[name]))
        tol = _tolerance(est, tol_scale)
        report.results[name] = IdentityResult(name, samples, res, tol, est, bool(res <= tol))

    if grid is None:
        for name in GRID_IDENTITIES:
            report.results[name] = IdentityResult(name, 0, 0.0, 0.0, 0.0, True, True, "no grid")
    else:
        if grid.connection is not connection:
            grid = ImmersedGrid(grid.points, connection, grid.lift, grid.scheme)
        lag, size = _is_lagrangian(grid)
        f1, n1 = _grid_fields(grid, 1, lag)
        f2, _ = _grid_fields(grid, 2, lag)
        gp = grid.scheme.effective_order
        nodes = int(np.prod(grid.shape))
        for name in GRID_IDENTITIES:
            if name not in f1:
                if name == "codazzi" or (name == "dH_plus_ricci" and lag):
                    note = "trivial on curves"
                    report.results[name] = IdentityResult(name, nodes, 0.0, TOL_FLOOR * tol_scale, 0.0, True,
                                                          note=note)
                else:
                    note = f"not Lagrangian (max|F*omega| = {size:.3e})"
                    report.results[name] = IdentityResult(name, nodes, 0.0, 0.0, 0.0, True, True, note)
                continue
            est = float(np.max(np.abs(f1[name] - f2[name]))) / (2 ** gp - 1)
            res = float(np.max(n1[name]))
            tol = _tolerance(est, tol_scale)
            report.results[name] = IdentityResult(name, nodes, res, tol, est, bool(res <= tol))
    return report


def convergence_slopes(geometry: ChartGeometry, connection: Connection, grid: Optional[ImmersedGrid] = None,
                       step: float = 0.05, samples: int = 20, seed: int = 0,
                       scheme: Optional[FdScheme] = None, noise_level: float = 1e-11) -> dict:
    """Measured ``log2(r(2h) / r(h))`` per identity.

    Chart identities use chart steps ``2 * step`` and ``step``; grid identities
    use grid strides 2 and 1.  Identities whose coarse residual is below
    ``noise_level`` (exact up to round-off) map to None.
    """
    scheme = (scheme or (grid.scheme if grid is not None else FdScheme())).with_step(step)
    rng = np.random.default_rng(seed)
    coarse = scheme.with_step(2 * step)
    pts = geometry.sample_points(samples, rng, margin=4 * coarse.radius)
    g = geometry.metric(pts)
    vecs = _unit_vectors(rng, g, 4)
    fine = _point_norms(_point_fields(connection, pts, vecs, scheme), g)
    rough = _point_norms(_point_fields(connection, pts, vecs, coarse), g)
    slopes = {}

    def slope(r_fine, r_coarse):
        if r_coarse < noise_level or r_fine <= 0:
            return None
        return float(np.log2(r_coarse / r_fine))

    for name in POINT_IDENTITIES:
        slopes[name] = slope(float(np.max(fine[name])), float(np.max(rough[name])))
    if grid is not None:
        lag, _ = _is_lagrangian(grid)
        _, n1 = _grid_fields(grid, 1, lag)
        _, n2 = _grid_fields(grid, 2, lag)
        for name in GRID_IDENTITIES:
            if name in n1:
                slopes[name] = slope(float(np.max(n1[name])), float(np.max(n2[name])))
    return slopes
