"""Discrete immersed submanifolds and their per-node tensors.

An :class:`ImmersedGrid` samples an immersion ``F: M -> N`` of a circle or a
2-torus on a uniform periodic grid of ``[0, 2 pi)^n``.  Coordinates that wind
around a periodic chart direction (graphs over the base of a cotangent bundle)
are handled through ``lift``: ``F - lift @ s`` is periodic in the grid
parameters ``s``.

Index layout of the per-node arrays (leading axes are the grid axes):

=================  ===================  ==========================================
name               shape                meaning
=================  ===================  ==========================================
``Fi``             ``(n, D)``           ``F^a_i``
``Fij``            ``(n, n, D)``        ``d_i d_j F^a``
``g_ind``          ``(n, n)``           induced metric ``g_ij``
``omega_ind``      ``(n, n)``           ``F*omega``
``phiF``           ``(n, D)``           ``(J F_i)^perp``
``A_hat``          ``(n, n, D)``        ``A^a_ij = nabla^E_i F_j`` (hat connection)
``r_hat`` etc.     ``(n, n, n)``        ``r_kij``, ``s_kij``, ``h_kij``
=================  ===================  ==========================================
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import ChartExitError, DegenerateError, ImmersionError, NonFiniteError
from .geometry import ChartGeometry, Connection, levi_civita, ricci_form
from .tensor import FdScheme

__all__ = [
    "ImmersedGrid",
    "GridFrames",
    "NodeFrame",
    "LagrangianDiagnostics",
    "grid_derivative",
    "grid_second_derivative",
    "differentiate_immersion",
    "compute_frames",
    "node_frame",
    "gmc_vector_definition",
    "gmc_vector_via_form",
    "lagrangian_form_vector",
    "nabla_omega",
    "induced_christoffels_koszul",
    "connection_difference_check",
    "lagrangian_diagnostics",
    "vector_norm",
    "ETA_DEGENERACY",
]

ETA_DEGENERACY = 1e-6
TWO_PI = 2 * np.pi


@dataclass(frozen=True, eq=False)
class ImmersedGrid:
    points: np.ndarray
    connection: Connection
    lift: Optional[np.ndarray] = None
    scheme: FdScheme = field(default_factory=FdScheme)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        n = pts.ndim - 1
        if n not in (1, 2):
            raise ValueError(f"grids must be 1- or 2-dimensional, got {n}")
        if 2 * n != self.geometry.dim:
            raise ValueError(f"a {n}-dimensional grid is not half-dimensional in a {self.geometry.dim}-chart")
        if any(m < 8 for m in pts.shape[:-1]):
            raise ValueError(f"grid sizes must be at least 8, got {pts.shape[:-1]}")
        if not np.all(np.isfinite(pts)):
            raise NonFiniteError("grid points contain NaN or Inf")
        if self.geometry.boundary_distance(pts) < 0:
            raise ChartExitError("grid points outside the chart box")
        lift = np.zeros((self.geometry.dim, n)) if self.lift is None else np.asarray(self.lift, float)
        object.__setattr__(self, "lift", lift)

    @property
    def geometry(self) -> ChartGeometry:
        return self.connection.geometry

    @property
    def intrinsic_dim(self) -> int:
        return self.points.ndim - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points.shape[:-1]

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(TWO_PI / m for m in self.shape)

    def parameters(self):
        axes = [np.arange(m) * (TWO_PI / m) for m in self.shape]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def periodic_part(self):
        """``F - lift @ s``, which is periodic on the grid."""
        return self.points - self.parameters() @ self.lift.T

    def with_points(self, points) -> "ImmersedGrid":
        return replace(self, points=points)

    def with_scheme(self, scheme: FdScheme) -> "ImmersedGrid":
        return replace(self, scheme=scheme)


# ---------------------------------------------------------------------------
# periodic grid differences


# first and second derivative stencils: offsets and weights (divide by h, h**2)
_GRID_FIRST = {
    2: ((1, -1), (0.5, -0.5)),
    4: ((2, 1, -1, -2), (-1 / 12, 8 / 12, -8 / 12, 1 / 12)),
}
_GRID_SECOND = {
    2: ((1, 0, -1), (1.0, -2.0, 1.0)),
    4: ((2, 1, 0, -1, -2), (-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12)),
}


@lru_cache(maxsize=None)
def _grid_stencil(power: int, scheme: FdScheme, stride: int):
    """Combined (offsets, weights) of the ``power``-th derivative, in units of grid nodes."""
    offs, wts = (_GRID_FIRST if power == 1 else _GRID_SECOND)[scheme.order]
    terms = {}

    def add(s, factor):
        for o, w in zip(offs, wts):
            terms[o * s] = terms.get(o * s, 0.0) + factor * w / s ** power

    if scheme.richardson:
        f = 2.0 ** scheme.order
        add(stride, f / (f - 1))
        add(2 * stride, -1 / (f - 1))
    else:
        add(stride, 1.0)
    return [(o, w) for o, w in sorted(terms.items()) if w != 0.0]


@lru_cache(maxsize=256)
def _shifted_index(m: int, offset: int):
    return (np.arange(m) + offset) % m


def _apply(values, axis, stencil, scale):
    m = values.shape[axis]
    out = None
    for o, w in stencil:
        term = w * np.take(values, _shifted_index(m, o), axis=axis)
        out = term if out is None else out + term
    return out / scale


def grid_derivative(values, axis: int, spacing: float, scheme: FdScheme, stride: int = 1):
    """Periodic central first derivative along grid ``axis``.

    ``stride`` > 1 uses a stencil of spacing ``stride * spacing`` on the same
    nodes, which is how coarse-grid error estimates are formed.
    """
    return _apply(values, axis, _grid_stencil(1, scheme, stride), spacing)


def grid_second_derivative(values, axis: int, spacing: float, scheme: FdScheme, stride: int = 1):
    return _apply(values, axis, _grid_stencil(2, scheme, stride), spacing ** 2)


def _grid_gradient(values, grid: ImmersedGrid, stride: int, lead_ndim: int | None = None):
    """Stack of first derivatives over all grid axes, derivative index inserted after the grid axes."""
    n = grid.intrinsic_dim
    return np.stack(
        [grid_derivative(values, i, grid.spacing[i], grid.scheme, stride) for i in range(n)],
        axis=n,
    )


def _tangents(grid: ImmersedGrid, stride: int = 1):
    n = grid.intrinsic_dim
    P = grid.periodic_part()
    Fi = _grid_gradient(P, grid, stride) + grid.lift.T  # (..., n, D)
    Fij = np.empty(grid.shape + (n, n, grid.geometry.dim))
    for i in range(n):
        Fij[..., i, i, :] = grid_second_derivative(P, i, grid.spacing[i], grid.scheme, stride)
        for j in range(i + 1, n):
            mixed = grid_derivative(
                grid_derivative(P, j, grid.spacing[j], grid.scheme, stride),
                i, grid.spacing[i], grid.scheme, stride)
            Fij[..., i, j, :] = mixed
            Fij[..., j, i, :] = mixed
    return Fi, Fij


def differentiate_immersion(grid: ImmersedGrid, stride: int = 1):
    """Per-node tangent vectors ``F_i``; raises :class:`ImmersionError` if rank deficient."""
    Fi, _ = _tangents(grid, stride)
    sv = np.linalg.svd(Fi, compute_uv=False)
    # scale-aware floor so round-off tangents of a constant map do not count as rank
    ref = max(float(np.max(sv[..., 0])), float(np.max(np.abs(grid.points))), 1e-300)
    if np.any(sv[..., -1] <= 1e-10 * ref):
        raise ImmersionError("dF is rank deficient at some node")
    return Fi


# ---------------------------------------------------------------------------
# per-node tensors


@dataclass
class GridFrames:
    """All submanifold tensors at every node (leading axes = grid axes)."""

    grid: ImmersedGrid
    F: np.ndarray
    Fi: np.ndarray
    Fij: np.ndarray
    g_amb: np.ndarray
    J: np.ndarray
    gamma_hat: np.ndarray
    gamma_lc: np.ndarray
    torsion: np.ndarray
    g_ind: np.ndarray
    g_inv: np.ndarray
    omega_ind: np.ndarray
    omega_mixed: np.ndarray  # omega_i^m
    JF: np.ndarray
    phiF: np.ndarray
    eta: np.ndarray
    eta_inv: np.ndarray
    eta_margin: np.ndarray
    H_classical: np.ndarray
    H_generalized: np.ndarray
    gamma_ind: Optional[np.ndarray] = None
    A_hat: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    r_hat: Optional[np.ndarray] = None
    s_hat: Optional[np.ndarray] = None
    h_hat: Optional[np.ndarray] = None
    H_form: Optional[np.ndarray] = None

    def node(self, index) -> "NodeFrame":
        index = tuple(np.atleast_1d(index))
        pick = {}
        for name in NodeFrame.__dataclass_fields__:
            val = getattr(self, name)
            pick[name] = None if val is None else np.asarray(val[index])
        return NodeFrame(**pick)


@dataclass
class NodeFrame:
    """Submanifold tensors at a single node."""

    F: np.ndarray
    Fi: np.ndarray
    Fij: np.ndarray
    g_amb: np.ndarray
    J: np.ndarray
    gamma_hat: np.ndarray
    gamma_lc: np.ndarray
    torsion: np.ndarray
    g_ind: np.ndarray
    g_inv: np.ndarray
    omega_ind: np.ndarray
    omega_mixed: np.ndarray
    JF: np.ndarray
    phiF: np.ndarray
    eta: np.ndarray
    eta_inv: np.ndarray
    eta_margin: np.ndarray
    H_classical: np.ndarray
    H_generalized: np.ndarray
    gamma_ind: Optional[np.ndarray] = None
    A_hat: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    r_hat: Optional[np.ndarray] = None
    s_hat: Optional[np.ndarray] = None
    h_hat: Optional[np.ndarray] = None
    H_form: Optional[np.ndarray] = None


def _metric_dot(u, v, g):
    return np.einsum("...a,...ab,...b->...", u, g, v)


def _inv_small(a):
    """Inverse of stacked 1x1 or 2x2 matrices in closed form."""
    if a.shape[-1] == 1:
        return 1.0 / a
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    if np.any(det == 0) or not np.all(np.isfinite(det)):
        raise np.linalg.LinAlgError("singular matrix")
    out = np.empty_like(a)
    out[..., 0, 0] = a[..., 1, 1]
    out[..., 1, 1] = a[..., 0, 0]
    out[..., 0, 1] = -a[..., 0, 1]
    out[..., 1, 0] = -a[..., 1, 0]
    return out / det[..., None, None]


def _min_eig_sym(a):
    """Smallest eigenvalue of stacked symmetric 1x1 or 2x2 matrices."""
    if a.shape[-1] == 1:
        return a[..., 0, 0]
    mean = 0.5 * (a[..., 0, 0] + a[..., 1, 1])
    half = 0.5 * (a[..., 0, 0] - a[..., 1, 1])
    return mean - np.hypot(half, 0.5 * (a[..., 0, 1] + a[..., 1, 0]))


def _span_phi(coef, eta_inv, phiF):
    """``eta^ij coef_i phiF_j``."""
    return (coef[..., None, :] @ eta_inv @ phiF)[..., 0, :]


def _bilinear(G, Fi):
    """``out[..., i, j, a] = G^a_bc F_i^b F_j^c``."""
    GF = G @ np.swapaxes(Fi, -1, -2)[..., None, :, :]  # (..., a, b, j)
    out = Fi[..., None, :, :] @ GF  # (..., a, i, j)
    return np.moveaxis(out, -3, -1)


def compute_frames(grid: ImmersedGrid, full: bool = True, stride: int = 1) -> GridFrames:
    """Evaluate the submanifold tensors at every node.

    ``full=False`` computes only what the flow velocity needs.  Raises
    :class:`DegenerateError` where ``eta`` loses invertibility.
    """
    geom, conn = grid.geometry, grid.connection
    F = grid.points
    Fi, Fij = _tangents(grid, stride)
    g = geom.metric(F)
    J = geom.complex_structure(F)
    Gh = conn(F)
    Glc = levi_civita(geom, F, grid.scheme)
    T = Gh - np.swapaxes(Gh, -1, -2)

    gF = Fi @ g  # g F_j lowered (g symmetric)
    g_ind = Fi @ np.swapaxes(gF, -1, -2)
    try:
        g_inv = _inv_small(g_ind)
    except np.linalg.LinAlgError as exc:
        raise ImmersionError("induced metric is singular") from exc
    JF = Fi @ np.swapaxes(J, -1, -2)
    om = JF @ np.swapaxes(gF, -1, -2)  # omega(F_i, F_j) = g(J F_i, F_j)
    om_mixed = om @ g_inv
    phiF = JF - om_mixed @ Fi
    gphi = phiF @ g
    eta = gphi @ np.swapaxes(phiF, -1, -2)
    margin = _min_eig_sym(eta) / _min_eig_sym(g_ind)
    if np.any(~np.isfinite(margin)) or np.any(margin < ETA_DEGENERACY):
        raise DegenerateError(f"eta degenerate (min margin {np.nanmin(margin):.3e})")
    eta_inv = _inv_small(eta)

    # classical vector: only the g-trace of the Levi-Civita second derivative enters
    FiT = np.swapaxes(Fi, -1, -2)
    S = FiT @ g_inv @ Fi  # g^kl F_k^b F_l^c
    trace = np.einsum("...kl,...kla->...a", g_inv, Fij) + np.einsum("...abc,...bc->...a", Glc, S)
    Hc_coef = (gphi @ trace[..., None])[..., 0]  # <g^kl A_kl, phi F_i>
    Hc = _span_phi(Hc_coef, eta_inv, phiF)
    if T.any():
        # g^kl (<T(phiF_i, F_k), F_l> + <T(F_i, F_k), phiF_l>) = phiF_i . v + F_i . w
        v = np.einsum("...abc,...ac->...b", T, np.swapaxes(gF, -1, -2) @ g_inv @ Fi)
        w = np.einsum("...abc,...ac->...b", T, np.swapaxes(gphi, -1, -2) @ g_inv @ Fi)
        corr = (phiF @ v[..., None] + Fi @ w[..., None])[..., 0]
        Hg = Hc + _span_phi(corr, eta_inv, phiF)
    else:
        Hg = Hc.copy()

    frames = GridFrames(
        grid=grid, F=F, Fi=Fi, Fij=Fij, g_amb=g, J=J, gamma_hat=Gh, gamma_lc=Glc, torsion=T,
        g_ind=g_ind, g_inv=g_inv, omega_ind=om, omega_mixed=om_mixed, JF=JF, phiF=phiF,
        eta=eta, eta_inv=eta_inv, eta_margin=margin, H_classical=Hc, H_generalized=Hg,
    )
    if not full:
        return frames

    nablaF = Fij + _bilinear(Glc, Fi)
    # induced Christoffels by tangential projection of the ambient Levi-Civita derivative
    gamma_ind = np.einsum("...mk,...ka,...ija->...mij", g_inv, gF, nablaF)
    A = nablaF - np.einsum("...mij,...ma->...ija", gamma_ind, Fi)
    A_hat = A + _bilinear(Gh - Glc, Fi)
    frames.gamma_ind = gamma_ind
    frames.A = A
    frames.A_hat = A_hat
    frames.s_hat = np.einsum("...ka,...ija->...kij", gF, A_hat)
    gJF = np.einsum("...ab,...kb->...ka", g, JF)
    frames.r_hat = np.einsum("...ka,...ija->...kij", gJF, A_hat)
    frames.h_hat = np.einsum("...ka,...ija->...kij", gphi, A_hat)
    frames.H_form = np.einsum("...kj,...kij->...i", g_inv, frames.h_hat)
    return frames


def node_frame(grid: ImmersedGrid, node) -> NodeFrame:
    """All submanifold tensors at one node (computed from the full grid)."""
    return compute_frames(grid).node(node)


def gmc_vector_definition(frames) -> np.ndarray:
    """Generalized mean curvature vector: classical vector plus torsion corrections."""
    return frames.H_generalized


def nabla_omega(frames: GridFrames, stride: int = 1):
    """``out[..., k, i, j] = nabla_k omega_ij`` of the pulled back symplectic form."""
    grid = frames.grid
    dom = _grid_gradient(frames.omega_ind, grid, stride)  # (..., k, i, j)
    G = frames.gamma_ind
    return (
        dom
        - np.einsum("...mki,...mj->...kij", G, frames.omega_ind)
        - np.einsum("...mkj,...im->...kij", G, frames.omega_ind)
    )


def gmc_vector_via_form(frames: GridFrames, stride: int = 1) -> np.ndarray:
    """Generalized mean curvature vector from the mean curvature form and omega terms."""
    if frames.H_form is None:
        raise ValueError("full frames are required")
    gi = frames.g_inv
    om = frames.omega_ind
    nom = nabla_omega(frames, stride)
    div = np.einsum("...kl,...lki->...i", gi, nom)  # nabla^k omega_ki
    s = frames.s_hat
    s_trace = np.einsum("...mkl,...lk->...m", s, gi)
    om_up = np.einsum("...ma,...kb,...ab->...mk", gi, gi, om)
    coef = (
        frames.H_form - div
        - np.einsum("...im,...m->...i", frames.omega_mixed, s_trace)
        - np.einsum("...mk,...mki->...i", om_up, s)
    )
    return np.einsum("...ij,...i,...ja->...a", frames.eta_inv, coef, frames.phiF)


def lagrangian_form_vector(frames: GridFrames) -> np.ndarray:
    """``g^ij H_i J F_j``, the vector form valid on Lagrangian submanifolds."""
    return np.einsum("...ij,...i,...ja->...a", frames.g_inv, frames.H_form, frames.JF)


def induced_christoffels_koszul(frames: GridFrames, stride: int = 1):
    """Induced Christoffels from grid differences of the induced metric."""
    dg = _grid_gradient(frames.g_ind, frames.grid, stride)  # (..., k, i, j) = d_k g_ij
    # Gamma^m_ij = 1/2 g^mk (d_i g_kj + d_j g_ki - d_k g_ij)
    koszul = (np.einsum("...ikj->...kij", dg) + np.einsum("...jki->...kij", dg) - dg)
    return 0.5 * np.einsum("...mk,...kij->...mij", frames.g_inv, koszul)


def vector_norm(v, g):
    return np.sqrt(np.maximum(_metric_dot(v, v, g), 0.0))


def two_form_norm(beta, g_inv):
    """``sqrt(beta_ij beta_kl g^ik g^jl)``."""
    val = np.einsum("...ij,...kl,...ik,...jl->...", beta, beta, g_inv, g_inv)
    return np.sqrt(np.maximum(val, 0.0))


def connection_difference_check(conn: Connection, at, X, Y, Z, scheme: FdScheme | None = None) -> np.ndarray:
    """``2<D_X Y, Z> - (<T(X,Y),Z> + <T(Z,X),Y> + <T(Z,Y),X>)`` with ``D`` = hat minus Levi-Civita."""
    geom = conn.geometry
    at = np.asarray(at, dtype=float)
    Gh = conn(at)
    Glc = levi_civita(geom, at, scheme)
    g = geom.metric(at)
    T = Gh - np.swapaxes(Gh, -1, -2)

    def app(G, U, V):
        return np.einsum("...abc,...b,...c->...a", G, U, V)

    lhs = 2 * _metric_dot(app(Gh - Glc, X, Y), Z, g)
    rhs = _metric_dot(app(T, X, Y), Z, g) + _metric_dot(app(T, Z, X), Y, g) + _metric_dot(app(T, Z, Y), X, g)
    return np.abs(lhs - rhs)


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class LagrangianDiagnostics:
    max_pullback_omega: float
    eta_margin: float
    dH_residual: float
    vector_form_mismatch: float
    lagrangian: bool
    sup_speed: float = 0.0
    volume: float = 0.0


LAGRANGIAN_THRESHOLD = 1e-6


def volume(frames: GridFrames) -> float:
    grid = frames.grid
    return float(np.sum(np.sqrt(np.linalg.det(frames.g_ind))) * np.prod(grid.spacing))


def mean_curvature_curl(frames: GridFrames, stride: int = 1):
    """``dH`` (component 01) on a 2-dimensional grid; zeros for curves."""
    grid = frames.grid
    if grid.intrinsic_dim == 1:
        return np.zeros(grid.shape + (1, 1))
    H = frames.H_form
    curl = (grid_derivative(H[..., 1], 0, grid.spacing[0], grid.scheme, stride)
            - grid_derivative(H[..., 0], 1, grid.spacing[1], grid.scheme, stride))
    out = np.zeros(grid.shape + (2, 2))
    out[..., 0, 1] = curl
    out[..., 1, 0] = -curl
    return out


def pullback_ricci(frames: GridFrames):
    grid = frames.grid
    rho = ricci_form(grid.connection, frames.F, grid.scheme)
    return np.einsum("...ia,...ab,...jb->...ij", frames.Fi, rho, frames.Fi)


def dH_residual_field(frames: GridFrames, stride: int = 1):
    """Pointwise norm of ``dH + F*rho`` (identically zero for curves)."""
    grid = frames.grid
    if grid.intrinsic_dim == 1:
        return np.zeros(grid.shape)
    beta = mean_curvature_curl(frames, stride) + pullback_ricci(frames)
    return two_form_norm(beta, frames.g_inv)


def lagrangian_diagnostics(grid: ImmersedGrid, frames: GridFrames | None = None) -> LagrangianDiagnostics:
    frames = frames or compute_frames(grid)
    om = two_form_norm(frames.omega_ind, frames.g_inv)
    max_om = float(np.max(om))
    dH = float(np.max(dH_residual_field(frames)))
    mismatch = vector_norm(gmc_vector_definition(frames) - gmc_vector_via_form(frames), frames.g_amb)
    speed = vector_norm(frames.H_generalized, frames.g_amb)
    return LagrangianDiagnostics(
        max_pullback_omega=max_om,
        eta_margin=float(np.min(frames.eta_margin)),
        dH_residual=dH,
        vector_form_mismatch=float(np.max(mismatch)),
        lagrangian=max_om < LAGRANGIAN_THRESHOLD,
        sup_speed=float(np.max(speed)),
        volume=volume(frames),
    )
