"""Explicit time integration of the generalized mean curvature flow ``dF/dt = H``."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ChartExitError, DegenerateError, ImmersionError, NonFiniteError
from .submanifold import (
    GridFrames,
    ImmersedGrid,
    compute_frames,
    lagrangian_diagnostics,
    vector_norm,
)

__all__ = [
    "FlowConfig",
    "MonitorRecord",
    "FlowResult",
    "TERMINATIONS",
    "velocity_field",
    "stable_dt",
    "step",
    "run",
]

log = logging.getLogger(__name__)

TERMINATIONS = ("reached_t_end", "eta_degenerate", "speed_blowup", "chart_exit")
INTEGRATORS = ("euler", "rk4")


@dataclass(frozen=True)
class FlowConfig:
    """Time stepping settings.

    With ``dt_mode="cfl"`` the step is ``cfl * h**2 / max(1, sup|H| * h)``
    where ``h`` is the smallest physical grid spacing ``sqrt(g_ii) * ds``.
    """

    t_end: float
    dt_mode: str = "cfl"
    dt: Optional[float] = None
    cfl: float = 0.2
    integrator: str = "rk4"
    monitor_stride: int = 10
    stop_eta_margin: float = 1e-3
    stop_speed: float = 1e3
    chart_margin: Optional[float] = None  # defaults to twice the chart FD step

    def __post_init__(self):
        if not (np.isfinite(self.t_end) and self.t_end > 0):
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.dt_mode not in ("fixed", "cfl"):
            raise ValueError(f"dt_mode must be 'fixed' or 'cfl', got {self.dt_mode!r}")
        if self.dt_mode == "fixed" and not (self.dt is not None and self.dt > 0):
            raise ValueError("fixed dt_mode needs a positive dt")
        if self.dt_mode == "cfl" and not 0 < self.cfl <= 1:
            raise ValueError(f"cfl constant must lie in (0, 1], got {self.cfl}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if int(self.monitor_stride) < 1:
            raise ValueError("monitor_stride must be at least 1")


@dataclass(frozen=True)
class MonitorRecord:
    t: float
    max_pullback_omega: float
    volume: float
    sup_speed: float
    eta_margin: float
    dh_residual: float
    vector_mismatch: float
    step: int = 0

    def row(self) -> tuple[float, ...]:
        return (self.t, self.max_pullback_omega, self.volume, self.sup_speed,
                self.eta_margin, self.dh_residual, self.vector_mismatch)


@dataclass
class FlowResult:
    final_state: ImmersedGrid
    records: list[MonitorRecord] = field(default_factory=list)
    termination: str = "reached_t_end"
    steps: int = 0
    t: float = 0.0


def velocity_field(grid: ImmersedGrid, with_frames: bool = False):
    """Generalized mean curvature vector at every node.

    Raises :class:`DegenerateError` if some node is not almost Lagrangian.
    """
    frames = compute_frames(grid, full=False)
    if with_frames:
        return frames.H_generalized, frames
    return frames.H_generalized


def _min_spacing(frames: GridFrames) -> float:
    grid = frames.grid
    diag = np.diagonal(frames.g_ind, axis1=-2, axis2=-1)
    return float(np.min(np.sqrt(diag) * np.asarray(grid.spacing)))


def _sup_speed(frames: GridFrames) -> float:
    return float(np.max(vector_norm(frames.H_generalized, frames.g_amb)))


def stable_dt(frames: GridFrames, config: FlowConfig) -> float:
    if config.dt_mode == "fixed":
        return float(config.dt)
    h = _min_spacing(frames)
    return config.cfl * h * h / max(1.0, _sup_speed(frames) * h)


def _advance(grid: ImmersedGrid, pts) -> ImmersedGrid:
    if not np.all(np.isfinite(pts)):
        raise NonFiniteError("NaN or Inf produced by the time step")
    return grid.with_points(pts)


def step(state: ImmersedGrid, dt: float, integrator: str = "rk4", k1=None) -> ImmersedGrid:
    """Advance the immersion by one explicit step.

    ``k1`` may carry the already evaluated velocity of ``state``.
    """
    if integrator not in INTEGRATORS:
        raise ValueError(f"unknown integrator {integrator!r}")
    F = state.points
    k1 = velocity_field(state) if k1 is None else k1
    if integrator == "euler":
        return _advance(state, F + dt * k1)
    k2 = velocity_field(_advance(state, F + 0.5 * dt * k1))
    k3 = velocity_field(_advance(state, F + 0.5 * dt * k2))
    k4 = velocity_field(_advance(state, F + dt * k3))
    return _advance(state, F + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


def monitor(grid: ImmersedGrid, t: float, step_index: int = 0) -> MonitorRecord:
    d = lagrangian_diagnostics(grid)
    return MonitorRecord(
        t=float(t), max_pullback_omega=d.max_pullback_omega, volume=d.volume,
        sup_speed=d.sup_speed, eta_margin=d.eta_margin, dh_residual=d.dH_residual,
        vector_mismatch=d.vector_form_mismatch, step=step_index,
    )


def run(initial: ImmersedGrid, config: FlowConfig,
        on_state: Callable[[int, float, ImmersedGrid], None] | None = None) -> FlowResult:
    """Integrate from ``initial`` until ``t_end`` or a stop criterion.

    A record is taken every ``monitor_stride`` steps and always for the final
    state.  ``on_state(step, t, grid)`` is called for every accepted state,
    the initial one included.
    """
    margin = config.chart_margin
    if margin is None:
        margin = 2 * initial.scheme.step
    result = FlowResult(final_state=initial)
    state, t, n = initial, 0.0, 0
    termination = None

    def record():
        if result.records and result.records[-1].step == n:
            return
        try:
            result.records.append(monitor(state, t, n))
        except (DegenerateError, ImmersionError) as exc:
            log.warning("diagnostics failed at t=%g: %s", t, exc)

    if on_state:
        on_state(n, t, state)
    while True:
        try:
            k1, frames = velocity_field(state, with_frames=True)
        except (DegenerateError, ImmersionError) as exc:
            log.info("stopping at t=%g: %s", t, exc)
            termination = "eta_degenerate"
            break
        if n % config.monitor_stride == 0:
            record()
        if float(np.min(frames.eta_margin)) < config.stop_eta_margin:
            termination = "eta_degenerate"
            break
        if _sup_speed(frames) > config.stop_speed:
            termination = "speed_blowup"
            break
        if state.geometry.boundary_distance(state.points) < margin:
            termination = "chart_exit"
            break
        if t >= config.t_end * (1 - 1e-12):
            termination = "reached_t_end"
            break
        dt = min(stable_dt(frames, config), config.t_end - t)
        try:
            new = step(state, dt, config.integrator, k1=k1)
        except ChartExitError:
            termination = "chart_exit"
            break
        except (DegenerateError, ImmersionError):
            termination = "eta_degenerate"
            break
        except NonFiniteError:
            termination = "speed_blowup"
            break
        state, t, n = new, t + dt, n + 1
        if on_state:
            on_state(n, t, state)

    record()
    result.final_state, result.termination, result.steps, result.t = state, termination, n, t
    log.info("flow finished: %s at t=%g after %d steps", termination, t, n)
    return result
