"""Concrete almost Kähler geometries, Einstein connections and initial data.

Geometries
----------
``flat_cn``
    Flat C^n (n = 1, 2) with the standard complex structure; Levi-Civita
    connection (all Christoffel symbols vanish).
``conformal_plane``
    ``g = exp(2 psi) delta`` on the doubly periodic plane with the standard
    ``J``, and the connection ``nabla + sigma (x) J`` with ``sigma = d psi o J``.
    That shift cancels the Ricci form of the Levi-Civita connection.
``cotangent_bundle``
    ``T*B`` for a periodic Riemannian base ``B`` with ``omega = dp_i ^ dx^i``,
    the metric ``h_ij dx^i dx^j + h^ij dp_i dp_j`` in the horizontal/vertical
    coframe ``(dx^i, dp_i - p_k Gamma^k_il dx^l)`` and the connection that
    acts by the base Levi-Civita connection on both frames.  An optional
    Liouville shift ``c lambda (x) J`` gives the Einstein function ``-n c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import GeometryCheckError, SpecError
from .geometry import (
    ChartGeometry,
    Connection,
    canonical_connection,
    check_connection_class,
    check_structure,
    einstein_report,
    levi_civita_connection,
    shift_connection,
)
from .tensor import FdScheme

__all__ = [
    "BaseMetric",
    "GeometrySpec",
    "InitialSubmanifoldSpec",
    "flat_torus",
    "torus_of_revolution",
    "flat_cn",
    "conformal_plane",
    "cotangent_bundle",
    "noisy_connection",
    "build_geometry",
    "build_initial",
    "GEOMETRY_KINDS",
    "INITIAL_KINDS",
]

TWO_PI = 2 * np.pi


def _standard_j(n):
    J = np.zeros((2 * n, 2 * n))
    for k in range(n):
        J[2 * k + 1, 2 * k] = 1.0
        J[2 * k, 2 * k + 1] = -1.0
    return J


def _const(mat, d):
    def fn(y):
        y = np.asarray(y)
        return np.broadcast_to(mat, y.shape[:-1] + mat.shape).copy()
    return fn


# --------------------------------------------------------------------------
# base manifolds for cotangent bundles


@dataclass(frozen=True, eq=False)
class BaseMetric:
    """Riemannian metric on a periodic base chart with analytic Christoffels."""

    dim: int
    metric: Callable
    metric_derivative: Callable
    christoffels: Callable
    christoffel_derivative: Callable
    name: str = "base"
    params: dict = field(default_factory=dict)


def flat_torus(n: int = 2) -> BaseMetric:
    eye = np.eye(n)
    return BaseMetric(
        dim=n,
        metric=_const(eye, n),
        metric_derivative=_const(np.zeros((n, n, n)), n),
        christoffels=_const(np.zeros((n, n, n)), n),
        christoffel_derivative=_const(np.zeros((n, n, n, n)), n),
        name=f"flat_torus{n}",
        params={"n": n},
    )


def torus_of_revolution(a: float = 3.0, b: float = 1.0) -> BaseMetric:
    """``dx^2 + (a + b cos x)^2 dy^2``."""
    if not a > b >= 0:
        raise SpecError(f"torus of revolution needs a > b >= 0, got a={a}, b={b}")

    def parts(x):
        x = np.asarray(x, dtype=float)
        c, s = np.cos(x[..., 0]), np.sin(x[..., 0])
        u = a + b * c
        return u, -b * s, -b * c  # u, u', u''

    def metric(x):
        u, _, _ = parts(x)
        out = np.zeros(u.shape + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = u * u
        return out

    def metric_derivative(x):
        u, du, _ = parts(x)
        out = np.zeros(u.shape + (2, 2, 2))
        out[..., 1, 1, 0] = 2 * u * du
        return out

    def christoffels(x):
        u, du, _ = parts(x)
        out = np.zeros(u.shape + (2, 2, 2))
        out[..., 0, 1, 1] = -u * du
        out[..., 1, 0, 1] = du / u
        out[..., 1, 1, 0] = du / u
        return out

    def christoffel_derivative(x):
        u, du, ddu = parts(x)
        out = np.zeros(u.shape + (2, 2, 2, 2))
        out[..., 0, 1, 1, 0] = -(du * du + u * ddu)
        val = (ddu * u - du * du) / (u * u)
        out[..., 1, 0, 1, 0] = val
        out[..., 1, 1, 0, 0] = val
        return out

    return BaseMetric(2, metric, metric_derivative, christoffels, christoffel_derivative,
                      name="torus_of_revolution", params={"a": a, "b": b})


# --------------------------------------------------------------------------
# geometries


def flat_cn(n: int = 1) -> tuple[ChartGeometry, Connection]:
    if n not in (1, 2):
        raise SpecError(f"flat_cn supports n in {{1, 2}}, got {n}")
    d = 2 * n
    geom = ChartGeometry(
        dim=d,
        metric=_const(np.eye(d), d),
        complex_structure=_const(_standard_j(n), d),
        metric_derivative=_const(np.zeros((d, d, d)), d),
        complex_structure_derivative=_const(np.zeros((d, d, d)), d),
        name=f"flat_C{n}", kind="flat_cn", params={"n": n},
    )
    zero = np.zeros((d, d, d))
    conn = Connection(geom, _const(zero, d), christoffel_derivative=_const(np.zeros((d, d, d, d)), d),
                      name="levi-civita")
    return geom, conn


def conformal_plane(amplitude=0.2, frequency=1.0, amplitude2=0.0, frequency2=1.0):
    """Conformally flat periodic plane and its Ricci-flat shifted connection.

    ``psi = amplitude sin(frequency y0) + amplitude2 cos(frequency2 y1)``.
    Frequencies must be integers so the chart is 2 pi periodic.
    """
    for f in (frequency, frequency2):
        if float(f) != int(f) or f == 0:
            raise SpecError(f"conformal_plane frequencies must be non-zero integers, got {f}")
    k1, k2 = float(frequency), float(frequency2)

    def psi_parts(y):
        y = np.asarray(y, dtype=float)
        s1, c1 = np.sin(k1 * y[..., 0]), np.cos(k1 * y[..., 0])
        s2, c2 = np.sin(k2 * y[..., 1]), np.cos(k2 * y[..., 1])
        psi = amplitude * s1 + amplitude2 * c2
        grad = np.stack([amplitude * k1 * c1, -amplitude2 * k2 * s2], axis=-1)
        hess = np.zeros(psi.shape + (2, 2))
        hess[..., 0, 0] = -amplitude * k1 * k1 * s1
        hess[..., 1, 1] = -amplitude2 * k2 * k2 * c2
        return psi, grad, hess

    J0 = _standard_j(1)

    def metric(y):
        psi, _, _ = psi_parts(y)
        return np.exp(2 * psi)[..., None, None] * np.eye(2)

    def metric_derivative(y):
        psi, grad, _ = psi_parts(y)
        e = np.exp(2 * psi)
        return 2 * e[..., None, None, None] * np.einsum("ab,...k->...abk", np.eye(2), grad)

    geom = ChartGeometry(
        dim=2, metric=metric, complex_structure=_const(J0, 2),
        metric_derivative=metric_derivative,
        complex_structure_derivative=_const(np.zeros((2, 2, 2)), 2),
        periods=(TWO_PI, TWO_PI), name="conformal_plane", kind="conformal_plane",
        params={"amplitude": amplitude, "frequency": frequency,
                "amplitude2": amplitude2, "frequency2": frequency2},
    )

    def sigma(y):
        # d psi o J, i.e. sigma_a = d_m psi J^m_a; equals d^c(-psi) with d^c f = -df o J
        _, grad, _ = psi_parts(y)
        return np.einsum("...m,ma->...a", grad, J0)

    lc = levi_civita_connection(geom)
    conn = shift_connection(lc, sigma, name="levi-civita+d^c(-psi)(x)J")
    return geom, conn, psi_parts


def cotangent_bundle(base: BaseMetric, p_max: float = 3.0):
    """Cotangent bundle chart ``(x^1..x^n, p_1..p_n)`` and its Ricci-flat connection."""
    n = base.dim
    d = 2 * n

    def parts(y):
        y = np.asarray(y, dtype=float)
        x, p = y[..., :n], y[..., n:]
        h = base.metric(x)
        hi = np.linalg.inv(h)
        Gb = base.christoffels(x)
        Q = np.einsum("...k,...kil->...il", p, Gb)
        return x, p, h, hi, Gb, Q

    def metric(y):
        _, _, h, hi, _, Q = parts(y)
        out = np.empty(h.shape[:-2] + (d, d))
        Qhi = Q @ hi
        out[..., :n, :n] = h + Qhi @ Q
        out[..., :n, n:] = -Qhi
        out[..., n:, :n] = -np.swapaxes(Qhi, -1, -2)
        out[..., n:, n:] = hi
        return out

    def complex_structure(y):
        _, _, h, hi, _, Q = parts(y)
        out = np.empty(h.shape[:-2] + (d, d))
        out[..., :n, :n] = -hi @ Q
        out[..., :n, n:] = hi
        out[..., n:, :n] = -(h + Q @ hi @ Q)
        out[..., n:, n:] = Q @ hi
        return out

    def derivative_parts(y):
        x, p, h, hi, Gb, Q = parts(y)
        lead = h.shape[:-2]
        dh = np.zeros(lead + (n, n, d))
        dh[..., :n] = base.metric_derivative(x)
        dQ = np.zeros(lead + (n, n, d))
        dQ[..., :n] = np.einsum("...m,...milk->...ilk", p, base.christoffel_derivative(x))
        dQ[..., n:] = np.einsum("...kil->...ilk", Gb)
        dhi = -np.einsum("...ij,...jkd,...kl->...ild", hi, dh, hi)
        return h, hi, Q, dh, dhi, dQ

    def metric_derivative(y):
        h, hi, Q, dh, dhi, dQ = derivative_parts(y)
        Qhi = Q @ hi
        dQhi = np.einsum("...ijd,...jk->...ikd", dQ, hi) + np.einsum("...ij,...jkd->...ikd", Q, dhi)
        dxx = dh + np.einsum("...ijd,...jk->...ikd", dQhi, Q) + np.einsum("...ij,...jkd->...ikd", Qhi, dQ)
        out = np.empty(h.shape[:-2] + (d, d, d))
        out[..., :n, :n, :] = dxx
        out[..., :n, n:, :] = -dQhi
        out[..., n:, :n, :] = -np.swapaxes(dQhi, -2, -3)
        out[..., n:, n:, :] = dhi
        return out

    def complex_structure_derivative(y):
        h, hi, Q, dh, dhi, dQ = derivative_parts(y)
        Qhi = Q @ hi
        dQhi = np.einsum("...ijd,...jk->...ikd", dQ, hi) + np.einsum("...ij,...jkd->...ikd", Q, dhi)
        dhiQ = np.einsum("...ijd,...jk->...ikd", dhi, Q) + np.einsum("...ij,...jkd->...ikd", hi, dQ)
        dxx = dh + np.einsum("...ijd,...jk->...ikd", dQhi, Q) + np.einsum("...ij,...jkd->...ikd", Qhi, dQ)
        out = np.empty(h.shape[:-2] + (d, d, d))
        out[..., :n, :n, :] = -dhiQ
        out[..., :n, n:, :] = dhi
        out[..., n:, :n, :] = -dxx
        out[..., n:, n:, :] = dQhi
        return out

    geom = ChartGeometry(
        dim=d, metric=metric, complex_structure=complex_structure,
        metric_derivative=metric_derivative,
        complex_structure_derivative=complex_structure_derivative,
        periods=(TWO_PI,) * n + (None,) * n,
        box=(None,) * n + ((-p_max, p_max),) * n,
        name=f"T*{base.name}", kind="cotangent_bundle",
        params={"p_max": p_max, "base": base.name, **base.params},
    )

    def christoffels(y):
        x, p, _, _, Gb, Q = parts(y)
        dGb = base.christoffel_derivative(x)
        out = np.zeros(x.shape[:-1] + (d, d, d))
        out[..., :n, :n, :n] = Gb
        # p_k (Gamma^m_ij Gamma^k_ml - d_i Gamma^k_jl + Gamma^k_jm Gamma^m_il), with Q_il = p_k Gamma^k_il
        out[..., n:, :n, :n] = (
            np.einsum("...mij,...ml->...lij", Gb, Q)
            - np.einsum("...k,...kjli->...lij", p, dGb)
            + np.einsum("...jm,...mil->...lij", Q, Gb)
        )
        # nabla_{dx^i} dp_j = -Gamma^j_ik dp_k
        out[..., n:, :n, n:] = -np.einsum("...jik->...kij", Gb)
        # nabla_{dp_i} dx^j = -Gamma^i_jl dp_l
        out[..., n:, n:, :n] = -np.einsum("...ijl->...lij", Gb)
        return out

    conn = Connection(geom, christoffels, name="cotangent-canonical")
    return geom, conn


def liouville_form(n: int):
    """``lambda = p_i dx^i`` on the cotangent chart."""
    def lam(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape)
        out[..., :n] = y[..., n:]
        return out
    return lam


def noisy_connection(conn: Connection, amplitude: float) -> Connection:
    """Negative control: adds a deterministic but non-smooth hash noise to Gamma."""
    d = conn.geometry.dim
    weights = np.array([12.9898, 78.233, 37.719, 94.673, 61.417, 27.031, 53.117, 19.973][:d]) * 1e4
    phases = np.arange(d ** 3).reshape(d, d, d) * 0.61803398875

    def christoffels(y):
        y = np.asarray(y, dtype=float)
        t = (y @ weights)[..., None, None, None] + phases
        noise = np.modf(np.abs(np.sin(t)) * 43758.5453)[0] - 0.5
        return conn(y) + 2 * amplitude * noise

    return Connection(conn.geometry, christoffels, name=f"{conn.name}+noise({amplitude:g})")


# --------------------------------------------------------------------------
# spec-driven construction

GEOMETRY_KINDS = ("flat_cn", "conformal_plane", "cotangent_bundle")
BASE_KINDS = ("flat_torus", "torus_of_revolution")
INITIAL_KINDS = ("circle", "product_torus", "graph_of_one_form", "zero_section", "perturbed")


@dataclass
class GeometrySpec:
    """Registry name plus parameters.

    Recognized parameters, per kind:

    * flat_cn: ``n``
    * conformal_plane: ``amplitude``, ``frequency``, ``amplitude2``, ``frequency2``
    * cotangent_bundle: ``p_max``, ``liouville_shift``; ``base`` is a nested
      spec of kind ``flat_torus`` (``n``) or ``torus_of_revolution`` (``a``, ``b``)
    * any kind: ``connection`` (``"default"``, ``"levi_civita"``, ``"canonical"``),
      ``j_corruption`` and ``connection_noise`` for negative controls.
    """

    kind: str
    parameters: dict = field(default_factory=dict)
    base: "GeometrySpec | None" = None

    def validate(self):
        if self.kind not in GEOMETRY_KINDS:
            raise SpecError(f"unknown geometry kind {self.kind!r}; expected one of {GEOMETRY_KINDS}")
        if self.kind == "cotangent_bundle":
            base = self.base or GeometrySpec("torus_of_revolution")
            if base.kind not in BASE_KINDS:
                raise SpecError(f"unknown base kind {base.kind!r}; expected one of {BASE_KINDS}")
        elif self.base is not None:
            raise SpecError(f"geometry kind {self.kind!r} takes no base")
        conn = self.parameters.get("connection", "default")
        if conn not in ("default", "levi_civita", "canonical"):
            raise SpecError(f"unknown connection {conn!r}")
        return self


def _float(params, key, default):
    try:
        return float(params.get(key, default))
    except (TypeError, ValueError) as exc:
        raise SpecError(f"parameter {key!r} must be a number") from exc


def _build_base(spec: "GeometrySpec | None") -> BaseMetric:
    spec = spec or GeometrySpec("torus_of_revolution")
    p = spec.parameters
    if spec.kind == "flat_torus":
        n = int(p.get("n", 2))
        if n not in (1, 2):
            raise SpecError(f"flat_torus base supports n in {{1, 2}}, got {n}")
        return flat_torus(n)
    return torus_of_revolution(_float(p, "a", 3.0), _float(p, "b", 1.0))


def build_geometry(spec: GeometrySpec, validate: bool | None = None,
                   scheme: FdScheme | None = None) -> tuple[ChartGeometry, Connection]:
    """Construct ``(geometry, connection)`` from a spec.

    With ``validate`` (default: on unless a negative-control parameter is set)
    the structure, connection-class and Einstein checks are run at 20 seeded
    random points and a :class:`SpecError` is raised if any fails.
    """
    spec.validate()
    p = spec.parameters
    if spec.kind == "flat_cn":
        n = int(p.get("n", 1))
        geom, conn = flat_cn(n)
    elif spec.kind == "conformal_plane":
        geom, conn, _ = conformal_plane(
            _float(p, "amplitude", 0.2), _float(p, "frequency", 1.0),
            _float(p, "amplitude2", 0.0), _float(p, "frequency2", 1.0),
        )
    else:
        base = _build_base(spec.base)
        geom, conn = cotangent_bundle(base, _float(p, "p_max", 3.0))
        c = _float(p, "liouville_shift", 0.0)
        if c != 0.0:
            lam = liouville_form(base.dim)
            conn = shift_connection(conn, lambda y: c * lam(y), name=f"{conn.name}+{c:g}*lambda(x)J")

    choice = p.get("connection", "default")
    corruption = _float(p, "j_corruption", 0.0)
    noise = _float(p, "connection_noise", 0.0)
    if corruption:
        geom = geom.corrupted(corruption)
    if choice == "levi_civita":
        conn = levi_civita_connection(geom, scheme)
    elif choice == "canonical":
        conn = canonical_connection(geom, scheme)
    else:
        conn = Connection(geom, conn.christoffels, conn.christoffel_derivative, conn.name)
    if noise:
        conn = noisy_connection(conn, noise)

    if validate is None:
        validate = not (corruption or noise) and choice == "default"
    if validate:
        _validate(geom, conn, scheme)
    return geom, conn


def _validate(geom, conn, scheme):
    sch = scheme or FdScheme()
    rng = np.random.default_rng(20240601)
    pts = geom.sample_points(20, rng, margin=4 * sch.radius)
    st = check_structure(geom, pts, scheme=sch)
    if not st.passed:
        raise GeometryCheckError(f"{geom.name}: structure check failed {st.max_residuals}")
    cc = check_connection_class(conn, pts, scheme=sch)
    if not cc.passed:
        raise GeometryCheckError(f"{geom.name}: connection not metric and complex {cc.max_residuals}")
    er = einstein_report(conn, pts, sch)
    if er.residual > 1e-6:
        raise GeometryCheckError(f"{geom.name}: connection is not Einstein (residual {er.residual:.2e})")


# --------------------------------------------------------------------------
# initial submanifolds


@dataclass
class InitialSubmanifoldSpec:
    """Initial immersion kind and parameters.

    * circle: ``r``, ``center`` (list)
    * product_torus: ``r1``, ``r2``, ``center``
    * graph_of_one_form: ``c1``, ``c2``, ``f_amp``, ``f_mx``, ``f_my`` for the
      closed form ``c + df`` with ``f = f_amp sin(f_mx x) cos(f_my y)``
    * zero_section: no parameters
    * perturbed: ``base`` (one of the kinds above) plus its parameters and
      ``eps``, ``m1``, ``m2``; breaks the Lagrangian condition when n = 2
    """

    kind: str
    parameters: dict = field(default_factory=dict)

    def validate(self):
        if self.kind not in INITIAL_KINDS:
            raise SpecError(f"unknown initial kind {self.kind!r}; expected one of {INITIAL_KINDS}")
        if self.kind == "perturbed":
            base = self.parameters.get("base", "product_torus")
            if base not in INITIAL_KINDS or base == "perturbed":
                raise SpecError(f"invalid perturbed base {base!r}")
        return self


def _parametrization(kind, p, geom: ChartGeometry, n: int):
    """Return ``(F, lift)``: F maps params ``(..., n)`` (possibly complex) to chart points."""
    d = geom.dim
    lift = np.zeros((d, n))
    center = np.asarray(p.get("center", geom.center()), dtype=float)

    if kind == "circle":
        if d != 2:
            raise SpecError("circle needs a 2-dimensional ambient chart")
        r = _float(p, "r", 1.0)
        if not r > 0:
            raise SpecError("circle radius must be positive")

        def F(s):
            return center + r * np.stack([np.cos(s[..., 0]), np.sin(s[..., 0])], axis=-1)
        return F, lift

    if kind == "product_torus":
        if d != 4:
            raise SpecError("product_torus needs a 4-dimensional ambient chart")
        r1, r2 = _float(p, "r1", 1.0), _float(p, "r2", 1.0)
        if not (r1 > 0 and r2 > 0):
            raise SpecError("torus radii must be positive")

        def F(s):
            a, b = s[..., 0], s[..., 1]
            return center + np.stack(
                [r1 * np.cos(a), r1 * np.sin(a), r2 * np.cos(b), r2 * np.sin(b)], axis=-1)
        return F, lift

    if kind in ("graph_of_one_form", "zero_section"):
        if geom.kind != "cotangent_bundle":
            raise SpecError(f"{kind} needs a cotangent_bundle geometry")
        lift[:n, :n] = np.eye(n)
        if kind == "zero_section":
            c1 = c2 = amp = 0.0
            mx, my = 1.0, 1.0
        else:
            c1, c2 = _float(p, "c1", 0.3), _float(p, "c2", 0.0)
            amp, mx, my = _float(p, "f_amp", 0.1), _float(p, "f_mx", 1.0), _float(p, "f_my", 2.0)

        def F(s):
            x = s[..., 0]
            if n == 1:
                p1 = c1 + amp * mx * np.cos(mx * x)
                return np.stack([x, p1 + 0 * x], axis=-1)
            y = s[..., 1]
            p1 = c1 + amp * mx * np.cos(mx * x) * np.cos(my * y)
            p2 = c2 - amp * my * np.sin(mx * x) * np.sin(my * y)
            return np.stack([x, y, p1 + 0 * x, p2 + 0 * x], axis=-1)
        return F, lift

    raise SpecError(f"cannot parametrize kind {kind!r}")


def _perturb(kind, F, p, n, center):
    eps = _float(p, "eps", 0.05)
    m1, m2 = _float(p, "m1", 1.0), _float(p, "m2", 2.0)
    if kind == "circle":
        def G(s):
            return center + (F(s) - center) * (1 + eps * np.sin(m1 * s[..., 0]))[..., None]
        return G
    if kind == "product_torus":
        # radius of each factor modulated by the other angle: not Lagrangian for eps != 0
        def G(s):
            f1 = 1 + eps * np.sin(m1 * s[..., 1])
            f2 = 1 + eps * np.sin(m2 * s[..., 0])
            return center + (F(s) - center) * np.stack([f1, f1, f2, f2], axis=-1)
        return G

    def G(s):
        # non-closed momentum bump
        out = F(s)
        bump = eps * np.sin(m1 * s[..., n - 1])
        if n == 1:
            return out + np.stack([0 * bump, bump], axis=-1)
        return out + np.stack([0 * bump, 0 * bump, bump, 0 * bump], axis=-1)
    return G


def build_initial(spec: InitialSubmanifoldSpec, geometry: ChartGeometry, connection: Connection,
                  resolution, scheme: FdScheme | None = None, with_tangents: bool = False):
    """Sample the initial immersion on a periodic ``[0, 2 pi)^n`` grid.

    With ``with_tangents`` also returns the exact tangent vectors at the nodes
    (complex-step differentiation of the parametrization).
    """
    from .submanifold import ImmersedGrid

    spec.validate()
    resolution = tuple(int(r) for r in np.atleast_1d(resolution))
    n = len(resolution)
    if 2 * n != geometry.dim:
        raise SpecError(f"resolution {resolution} is not half-dimensional in a {geometry.dim}-chart")
    if spec.kind == "perturbed":
        base_kind = spec.parameters.get("base", "product_torus")
        F, lift = _parametrization(base_kind, spec.parameters, geometry, n)
        eps = _float(spec.parameters, "eps", 0.05)
        if eps != 0.0:
            center = np.asarray(spec.parameters.get("center", geometry.center()), dtype=float)
            F = _perturb(base_kind, F, spec.parameters, n, center)
    else:
        F, lift = _parametrization(spec.kind, spec.parameters, geometry, n)

    axes = [np.arange(m) * (TWO_PI / m) for m in resolution]
    params = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    points = np.asarray(F(params), dtype=float)
    grid = ImmersedGrid(points, connection, lift=lift, scheme=scheme or FdScheme())
    if not with_tangents:
        return grid
    hstep = 1e-30
    tangents = np.empty(resolution + (n, geometry.dim))
    for i in range(n):
        dz = np.zeros(n, dtype=complex)
        dz[i] = 1j * hstep
        tangents[..., i, :] = np.imag(F(params + dz)) / hstep
    return grid, tangents
