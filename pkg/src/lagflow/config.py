"""Run configuration: a single TOML file.

Schema (every section except ``[geometry]`` is optional)::

    seed = 0                    # random sampling seed
    samples = 20                # points for check / identities
    resolution = [48, 48]       # grid nodes per intrinsic direction
    output_dir = "out"
    snapshot_stride = 10        # steps between snapshot files

    [geometry]
    kind = "cotangent_bundle"   # flat_cn | conformal_plane | cotangent_bundle
    [geometry.parameters]
    p_max = 3.0
    [geometry.base]             # cotangent_bundle only
    kind = "torus_of_revolution"
    [geometry.base.parameters]
    a = 3.0
    b = 1.0

    [initial]
    kind = "graph_of_one_form"
    [initial.parameters]
    c1 = 0.3

    [flow]                      # fields of FlowConfig
    t_end = 0.05
    integrator = "rk4"

    [fd]                        # fields of FdScheme
    step = 1e-4
    order = 4
    richardson = true

``LAGFLOW_OUTPUT_DIR`` overrides ``output_dir``.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import SpecError
from .flow import FlowConfig
from .tensor import FdScheme
from .zoo import GeometrySpec, InitialSubmanifoldSpec

__all__ = ["RunConfig", "ConfigError", "load_config", "parse_config"]

OUTPUT_ENV = "LAGFLOW_OUTPUT_DIR"


class ConfigError(SpecError):
    """The configuration file is missing, malformed or inconsistent."""


@dataclass
class RunConfig:
    geometry: GeometrySpec
    initial: Optional[InitialSubmanifoldSpec] = None
    flow: Optional[FlowConfig] = None
    resolution: tuple[int, ...] = ()
    output_dir: Path = Path("lagflow-out")
    snapshot_stride: int = 10
    fd: FdScheme = field(default_factory=FdScheme)
    seed: int = 0
    samples: int = 20


def _table(data, key, required=False) -> dict:
    val = data.get(key)
    if val is None:
        if required:
            raise ConfigError(f"missing [{key}] section")
        return {}
    if not isinstance(val, dict):
        raise ConfigError(f"{key!r} must be a table")
    return val


def _geometry(data: dict, where: str) -> GeometrySpec:
    kind = data.get("kind")
    if not isinstance(kind, str):
        raise ConfigError(f"[{where}] needs a string 'kind'")
    params = _table(data, "parameters")
    base = data.get("base")
    return GeometrySpec(kind, dict(params), _geometry(base, f"{where}.base") if base is not None else None)


def _known(cls, table: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    return table


def parse_config(data: dict) -> RunConfig:
    """Build and validate a :class:`RunConfig` from a parsed TOML document."""
    try:
        geometry = _geometry(_table(data, "geometry", required=True), "geometry")
        if geometry.kind != "cotangent_bundle" and geometry.base is not None:
            raise ConfigError("only cotangent_bundle takes [geometry.base]")
        geometry.validate()
        if geometry.base is not None and geometry.base.base is not None:
            raise ConfigError("base geometries cannot be nested further")

        initial = None
        if "initial" in data:
            tab = _table(data, "initial")
            if not isinstance(tab.get("kind"), str):
                raise ConfigError("[initial] needs a string 'kind'")
            initial = InitialSubmanifoldSpec(tab["kind"], dict(_table(tab, "parameters"))).validate()

        flow = None
        if "flow" in data:
            flow = FlowConfig(**_known(FlowConfig, _table(data, "flow"), "flow"))
        fd = FdScheme(**_known(FdScheme, _table(data, "fd"), "fd"))

        resolution = data.get("resolution", ())
        if isinstance(resolution, int):
            resolution = (resolution,)
        resolution = tuple(int(r) for r in resolution)
        if initial is not None and not resolution:
            raise ConfigError("an [initial] section needs 'resolution'")
        if any(r < 8 for r in resolution):
            raise ConfigError(f"resolution entries must be at least 8, got {resolution}")

        out = Path(os.environ.get(OUTPUT_ENV) or data.get("output_dir", "lagflow-out"))
        stride = int(data.get("snapshot_stride", 10))
        samples = int(data.get("samples", 20))
        if stride < 1:
            raise ConfigError("snapshot_stride must be at least 1")
        if samples < 10:
            raise ConfigError("samples must be at least 10")
        return RunConfig(geometry=geometry, initial=initial, flow=flow, resolution=resolution,
                         output_dir=out, snapshot_stride=stride, fd=fd,
                         seed=int(data.get("seed", 0)), samples=samples)
    except ConfigError:
        raise
    except (SpecError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(data)
