"""Almost Kähler chart geometries and metric-and-complex connections.

A :class:`ChartGeometry` is a metric ``g`` and almost complex structure ``J``
on one coordinate chart.  The characteristic 2-form is ``omega(X, Y) =
g(JX, Y)``, i.e. ``omega[a, b] = J[m, a] g[m, b]``.

All callables are vectorized: points have shape ``(..., d)`` and the result
carries the same leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import SingularMatrixError
from .tensor import FdScheme, fd_derivative, require_finite

__all__ = [
    "ChartGeometry",
    "Connection",
    "CurvatureAtPoint",
    "EinsteinReport",
    "CheckReport",
    "levi_civita",
    "levi_civita_connection",
    "canonical_connection",
    "shift_connection",
    "torsion",
    "curvature",
    "ricci_form",
    "torsion_derivative",
    "check_structure",
    "check_connection_class",
    "einstein_report",
    "form_norm",
]

DEFAULT_SCHEME = FdScheme()


def _inv(a):
    try:
        out = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc
    if not np.all(np.isfinite(out)):
        raise SingularMatrixError("matrix inverse is not finite")
    return out


@dataclass(frozen=True, eq=False)
class ChartGeometry:
    """Metric and almost complex structure on a single (possibly periodic) chart.

    ``periods[k]`` is the period of coordinate ``k`` or None.  ``box[k]`` is the
    valid ``(lo, hi)`` range of a non-periodic bounded coordinate or None when
    the coordinate is unbounded.  ``sample_box`` gives the range random sample
    points are drawn from for unbounded coordinates.
    """

    dim: int
    metric: Callable
    complex_structure: Callable
    metric_derivative: Optional[Callable] = None
    complex_structure_derivative: Optional[Callable] = None
    periods: Sequence[Optional[float]] = ()
    box: Sequence[Optional[tuple]] = ()
    sample_box: tuple = (-2.0, 2.0)
    name: str = "chart"
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim % 2:
            raise ValueError(f"almost complex charts are even dimensional, got {self.dim}")
        if not self.periods:
            object.__setattr__(self, "periods", (None,) * self.dim)
        if not self.box:
            object.__setattr__(self, "box", (None,) * self.dim)
        if len(self.periods) != self.dim or len(self.box) != self.dim:
            raise ValueError("periods and box need one entry per coordinate")

    @property
    def n(self) -> int:
        """Complex dimension (half the real dimension)."""
        return self.dim // 2

    @property
    def has_analytic_derivatives(self) -> bool:
        return self.metric_derivative is not None and self.complex_structure_derivative is not None

    def omega(self, y):
        g = self.metric(y)
        J = self.complex_structure(y)
        return np.einsum("...ma,...mb->...ab", J, g)

    def dmetric(self, y, scheme: FdScheme | None = None):
        """``dg[..., a, b, k] = d_k g_ab``."""
        if self.metric_derivative is not None:
            return self.metric_derivative(y)
        return fd_derivative(self.metric, y, scheme or DEFAULT_SCHEME)

    def dcomplex(self, y, scheme: FdScheme | None = None):
        """``dJ[..., a, b, k] = d_k J^a_b``."""
        if self.complex_structure_derivative is not None:
            return self.complex_structure_derivative(y)
        return fd_derivative(self.complex_structure, y, scheme or DEFAULT_SCHEME)

    def domega(self, y, scheme: FdScheme | None = None):
        """``d_k omega_ab`` from the derivatives of ``g`` and ``J``."""
        g = self.metric(y)
        J = self.complex_structure(y)
        dg = self.dmetric(y, scheme)
        dJ = self.dcomplex(y, scheme)
        return np.einsum("...mak,...mb->...abk", dJ, g) + np.einsum("...ma,...mbk->...abk", J, dg)

    def coordinate_ranges(self, margin: float = 0.0):
        """Per-coordinate sampling interval, shrunk by ``margin`` on bounded sides."""
        out = []
        for period, box in zip(self.periods, self.box):
            if period is not None:
                out.append((0.0, float(period)))
            elif box is not None:
                out.append((box[0] + margin, box[1] - margin))
            else:
                out.append(self.sample_box)
        return out

    def center(self):
        return np.array([(lo + hi) / 2 for lo, hi in self.coordinate_ranges()])

    def sample_points(self, count: int, rng: np.random.Generator, margin: float = 0.0):
        lo, hi = np.array(self.coordinate_ranges(margin)).T
        return lo + (hi - lo) * rng.random((count, self.dim))

    def boundary_distance(self, points):
        """Smallest distance from any point to the edge of the valid chart box."""
        points = np.asarray(points, dtype=float)
        dist = np.inf
        for k, box in enumerate(self.box):
            if box is None or self.periods[k] is not None:
                continue
            c = points[..., k]
            dist = min(dist, float(np.min(c - box[0])), float(np.min(box[1] - c)))
        return dist

    def corrupted(self, amount: float) -> "ChartGeometry":
        """Copy with ``J`` replaced by ``J + amount*(1 + sin(y_0)/2) Id``.

        Negative control: the result violates ``J^2 = -Id`` and is not
        parallel for any connection of the original geometry.
        """
        J0, dJ0 = self.complex_structure, self.complex_structure_derivative
        d = self.dim

        def J(y):
            y = np.asarray(y, dtype=float)
            scale = amount * (1.0 + 0.5 * np.sin(y[..., 0]))
            return J0(y) + scale[..., None, None] * np.eye(d)

        def dJ(y):
            y = np.asarray(y, dtype=float)
            out = np.array(dJ0(y), dtype=float, copy=True)
            out[..., :, :, 0] += (0.5 * amount * np.cos(y[..., 0]))[..., None, None] * np.eye(d)
            return out

        return ChartGeometry(
            dim=d, metric=self.metric, complex_structure=J,
            metric_derivative=self.metric_derivative,
            complex_structure_derivative=dJ if dJ0 is not None else None,
            periods=self.periods, box=self.box, sample_box=self.sample_box,
            name=f"{self.name}+corruptJ({amount:g})", kind=self.kind, params=dict(self.params),
        )


@dataclass(frozen=True, eq=False)
class Connection:
    """Affine connection on the chart given by its Christoffel symbols."""

    geometry: ChartGeometry
    christoffels: Callable
    christoffel_derivative: Optional[Callable] = None
    name: str = "connection"

    def __call__(self, y):
        return self.christoffels(y)

    def dchristoffels(self, y, scheme: FdScheme | None = None):
        """``dG[..., a, b, c, k] = d_k Gamma^a_bc``."""
        if self.christoffel_derivative is not None:
            return self.christoffel_derivative(y)
        return fd_derivative(self.christoffels, y, scheme or DEFAULT_SCHEME)


def levi_civita(geometry: ChartGeometry, at, scheme: FdScheme | None = None):
    """Christoffel symbols of the Levi-Civita connection (Koszul formula)."""
    at = require_finite(at, "chart point")
    ginv = _inv(geometry.metric(at))
    dg = geometry.dmetric(at, scheme)
    # d_b g_dc + d_c g_db - d_d g_bc, indexed [d, b, c]
    koszul = (
        np.einsum("...dcb->...dbc", dg) + dg - np.einsum("...bcd->...dbc", dg)
    )
    d = koszul.shape[-1]
    flat = koszul.reshape(koszul.shape[:-2] + (d * d,))
    return 0.5 * (ginv @ flat).reshape(koszul.shape)


def levi_civita_connection(geometry: ChartGeometry, scheme: FdScheme | None = None) -> Connection:
    return Connection(geometry, lambda y: levi_civita(geometry, y, scheme), name="levi-civita")


def canonical_connection(geometry: ChartGeometry, scheme: FdScheme | None = None) -> Connection:
    """The connection ``nabla - 1/2 J (nabla J)`` built from Levi-Civita."""

    def christoffels(y):
        y = require_finite(y, "chart point")
        G = levi_civita(geometry, y, scheme)
        J = geometry.complex_structure(y)
        dJ = geometry.dcomplex(y, scheme)
        # (nabla_b J)^m_c
        nJ = (
            np.einsum("...mcb->...bmc", dJ)
            + np.einsum("...mbk,...kc->...bmc", G, J)
            - np.einsum("...kbc,...mk->...bmc", G, J)
        )
        return G - 0.5 * np.einsum("...am,...bmc->...abc", J, nJ)

    return Connection(geometry, christoffels, name="canonical")


def shift_connection(conn: Connection, sigma: Callable, name: str | None = None) -> Connection:
    """``conn + sigma (x) J``: adds ``sigma_b J^a_c`` to the Christoffel symbols."""
    geometry = conn.geometry

    def christoffels(y):
        s = np.asarray(sigma(y), dtype=float)
        return conn(y) + np.einsum("...b,...ac->...abc", s, geometry.complex_structure(y))

    return Connection(geometry, christoffels, name=name or f"{conn.name}+sigma(x)J")


def torsion(conn: Connection, at):
    """``T^a_bc = Gamma^a_bc - Gamma^a_cb``."""
    G = conn(require_finite(at, "chart point"))
    return G - np.swapaxes(G, -1, -2)


@dataclass
class CurvatureAtPoint:
    """Curvature, torsion and Ricci form (batched over leading axes)."""

    riemann: np.ndarray
    torsion: np.ndarray
    ricci_form: np.ndarray


def _riemann(G, dG):
    # R^a_dbe = d_b G^a_ed - d_e G^a_bd + G^a_bm G^m_ed - G^a_em G^m_bd
    return (
        np.einsum("...aedb->...adbe", dG)
        - np.einsum("...abde->...adbe", dG)
        + np.einsum("...abm,...med->...adbe", G, G)
        - np.einsum("...aem,...mbd->...adbe", G, G)
    )


def curvature(conn: Connection, at, scheme: FdScheme | None = None) -> CurvatureAtPoint:
    at = require_finite(at, "chart point")
    G = conn(at)
    R = _riemann(G, conn.dchristoffels(at, scheme))
    J = conn.geometry.complex_structure(at)
    rho = 0.5 * np.einsum("...adbe,...da->...be", R, J)
    return CurvatureAtPoint(riemann=R, torsion=G - np.swapaxes(G, -1, -2), ricci_form=rho)


def ricci_form(conn: Connection, at, scheme: FdScheme | None = None):
    """``rho_be = 1/2 R^a_dbe J^d_a``, i.e. half the trace of ``R(X, Y) o J``."""
    return curvature(conn, at, scheme).ricci_form


def torsion_derivative(conn: Connection, at, scheme: FdScheme | None = None):
    """Covariant derivative of the torsion: ``out[..., b, a, c, e] = (nabla_b T)^a_ce``.

    The partial derivative is taken with its own stencil (step scaled by the
    golden ratio) so it shares no evaluation points with the curvature stencil.
    """
    scheme = scheme or DEFAULT_SCHEME
    at = require_finite(at, "chart point")
    G = conn(at)
    T = G - np.swapaxes(G, -1, -2)
    tscheme = scheme.with_step(scheme.step * (1 + 5 ** 0.5) / 2)
    dT = fd_derivative(lambda y: torsion(conn, y), at, tscheme)
    return (
        np.einsum("...aceb->...bace", dT)
        + np.einsum("...abm,...mce->...bace", G, T)
        - np.einsum("...mbc,...ame->...bace", G, T)
        - np.einsum("...mbe,...acm->...bace", G, T)
    )


@dataclass
class CheckReport:
    """Per-point residuals of a family of checks, with pass/fail against ``tol``."""

    residuals: dict
    tol: float
    points: np.ndarray

    @property
    def max_residuals(self) -> dict:
        return {k: float(np.max(v)) if np.size(v) else 0.0 for k, v in self.residuals.items()}

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.max_residuals.values())


def _maxabs(x, nidx):
    return np.max(np.abs(x), axis=tuple(range(-nidx, 0)))


def check_structure(geometry: ChartGeometry, points, tol: float | None = None,
                    scheme: FdScheme | None = None) -> CheckReport:
    """Residuals of ``J^2 = -Id``, ``g(J., J.) = g``, skewness of omega and ``d omega = 0``."""
    points = require_finite(points, "sample points")
    if tol is None:
        tol = 1e-8 if geometry.has_analytic_derivatives else 1e-6
    g = geometry.metric(points)
    J = geometry.complex_structure(points)
    eye = np.eye(geometry.dim)
    om = np.einsum("...ma,...mb->...ab", J, g)
    dom = geometry.domega(points, scheme)
    cyc = dom + np.einsum("...bca->...abc", dom) + np.einsum("...cab->...abc", dom)
    res = {
        "j_squared": _maxabs(J @ J + eye, 2),
        "compatibility": _maxabs(np.einsum("...ma,...mn,...nb->...ab", J, g, J) - g, 2),
        "omega_skew": _maxabs(om + np.swapaxes(om, -1, -2), 2),
        "d_omega": _maxabs(cyc, 3),
    }
    return CheckReport(res, tol, points)


def check_connection_class(conn: Connection, points, tol: float = 1e-6,
                           scheme: FdScheme | None = None) -> CheckReport:
    """Residuals of ``nabla g = 0`` and ``nabla J = 0``."""
    points = require_finite(points, "sample points")
    geometry = conn.geometry
    G = conn(points)
    g = geometry.metric(points)
    J = geometry.complex_structure(points)
    dg = geometry.dmetric(points, scheme)
    dJ = geometry.dcomplex(points, scheme)
    ng = (
        np.einsum("...abc->...cab", dg)
        - np.einsum("...mca,...mb->...cab", G, g)
        - np.einsum("...mcb,...am->...cab", G, g)
    )
    nJ = (
        np.einsum("...abc->...cab", dJ)
        + np.einsum("...acm,...mb->...cab", G, J)
        - np.einsum("...mcb,...am->...cab", G, J)
    )
    return CheckReport({"nabla_g": _maxabs(ng, 3), "nabla_J": _maxabs(nJ, 3)}, tol, points)


def form_norm(beta, g):
    """Operator norm of the 2-form ``beta`` (as ``g^-1 beta``) induced by ``g``."""
    L = np.linalg.cholesky(g)
    Li = _inv(L)
    M = np.einsum("...ia,...ab,...jb->...ij", Li, beta, Li)
    return np.linalg.svd(M, compute_uv=False)[..., 0]


@dataclass
class EinsteinReport:
    """Pointwise least-squares fit of ``rho = f omega``."""

    f_values: np.ndarray
    residuals: np.ndarray
    sample_points: np.ndarray

    @property
    def f_estimate(self) -> float:
        return float(np.mean(self.f_values))

    @property
    def residual(self) -> float:
        return float(np.max(self.residuals))

    @property
    def f_spread(self) -> float:
        return float(np.ptp(self.f_values))


def einstein_report(conn: Connection, points, scheme: FdScheme | None = None) -> EinsteinReport:
    points = require_finite(points, "sample points")
    if points.ndim != 2 or points.shape[0] < 3:
        raise ValueError("einstein_report needs at least 3 sample points")
    geometry = conn.geometry
    rho = ricci_form(conn, points, scheme)
    g = geometry.metric(points)
    om = geometry.omega(points)
    L = np.linalg.cholesky(g)
    Li = _inv(L)
    wr = np.einsum("...ia,...ab,...jb->...ij", Li, rho, Li)
    wo = np.einsum("...ia,...ab,...jb->...ij", Li, om, Li)
    f = np.sum(wr * wo, axis=(-2, -1)) / np.sum(wo * wo, axis=(-2, -1))
    resid = np.linalg.svd(wr - f[:, None, None] * wo, compute_uv=False)[..., 0]
    return EinsteinReport(f_values=f, residuals=resid, sample_points=points)
