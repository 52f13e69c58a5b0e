"""Experiment configuration: JSON schema, parsing and validation.

Every validation failure raises :class:`ConfigError` whose message starts
with the dotted path of the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dual import FunctionalKind, OptimizerSettings, QuadratureGrid
from .lti import LtiSystem
from .pwl import ConvexProfile, Partition, PwlConvex, build_penalization, quadratic_profile

__all__ = ["ConfigError", "ChecksConfig", "ExperimentConfig", "load_config"]


class ConfigError(ValueError):
    """Configuration field error; the message names the field."""


@dataclass(frozen=True)
class ChecksConfig:
    terminal_tol: float = 1e-2
    staircase: bool = True
    fenchel: bool = False
    fenchel_gap_rtol: float = 1e-3
    fenchel_agreement_tol: Optional[float] = 0.05
    solvable: bool = False
    expect_divergence: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    system: LtiSystem
    partitions: tuple
    profile: str
    table_values: Optional[tuple]
    allow_offgrid_minimum: bool
    kind: FunctionalKind
    beta: float
    grid_nodes: int
    bracket_multiplier: int
    optimizer: OptimizerSettings
    checks: ChecksConfig
    output_dir: str
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    def penalizations(self) -> list[PwlConvex]:
        pens = []
        for ch, pts in enumerate(self.partitions):
            part = Partition(np.asarray(pts, dtype=float))
            if self.profile == "quadratic":
                prof = quadratic_profile()
                if self.allow_offgrid_minimum:
                    prof = ConvexProfile(prof.fun, prof.second_derivative, minimizer=None)
                pens.append(build_penalization(prof, part))
            else:  # custom-table: chord interpolation of tabulated values
                vals = np.asarray(self.table_values[ch], dtype=float)
                if vals.size != part.points.size:
                    raise ConfigError(
                        f"penalization.values[{ch}]: need one value per partition point"
                    )
                seg = np.diff(vals) / np.diff(part.points)
                if np.any(np.diff(seg) <= 0):
                    raise ConfigError(
                        f"penalization.values[{ch}]: chord slopes must be strictly increasing"
                    )
                icpts = vals[:-1] - seg * part.points[:-1]
                pens.append(
                    PwlConvex(seg, icpts, interval=(part.points[0], part.points[-1]))
                )
        return pens

    def quadrature(self) -> QuadratureGrid:
        return QuadratureGrid.trapezoid(self.system.T, self.grid_nodes)


def _require(raw, key: str, path: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path.rstrip('.') or 'config'}: must be an object")
    if key not in raw:
        raise ConfigError(f"{path}{key}: missing required field")
    return raw[key]


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{key}: must be an object")
    return value


def _numeric_array(value, path: str, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a numeric array ({exc})") from None
    if arr.ndim != ndim:
        raise ConfigError(f"{path}: expected a {ndim}-d numeric array, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{path}: contains non-finite entries")
    return arr


def parse_config(raw: dict, name_hint: str = "scenario") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    name = raw.get("name", name_hint)

    sys_raw = _require(raw, "system", "")
    A = _numeric_array(_require(sys_raw, "A", "system."), "system.A", 2)
    B = np.asarray(_require(sys_raw, "B", "system."), dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    x0 = _numeric_array(_require(sys_raw, "x0", "system."), "system.x0", 1)
    T = _require(sys_raw, "T", "system.")
    try:
        system = LtiSystem(A=A, B=B, x0=x0, T=float(T))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"system: {exc}") from None

    kind_raw = raw.get("kind", "plain")
    try:
        kind = FunctionalKind(kind_raw)
    except ValueError:
        choices = ", ".join(k.value for k in FunctionalKind)
        raise ConfigError(f"kind: unknown kind {kind_raw!r} (choices: {choices})") from None
    beta = float(raw.get("beta", 1.0))
    if kind == FunctionalKind.SCALED and not beta > 1.0:
        raise ConfigError(f"beta: the scaled kind needs beta > 1, got {beta}")

    pen_raw = _section(raw, "penalization")
    profile = pen_raw.get("profile", "quadratic")
    if profile not in ("quadratic", "custom-table"):
        raise ConfigError(f"penalization.profile: unknown profile {profile!r}")
    partitions = None
    table_values = None
    if kind.penalized:
        partitions = _require(pen_raw, "partitions", "penalization.")
        if not isinstance(partitions, list) or not partitions:
            raise ConfigError("penalization.partitions: need a list of per-channel point lists")
        if len(partitions) != system.channels:
            raise ConfigError(
                f"penalization.partitions: got {len(partitions)} partitions for "
                f"{system.channels} control channels"
            )
        parsed = []
        for ch, pts in enumerate(partitions):
            arr = _numeric_array(pts, f"penalization.partitions[{ch}]", 1)
            if arr.size < 3 or np.any(np.diff(arr) <= 0):
                raise ConfigError(
                    f"penalization.partitions[{ch}]: need >= 3 strictly increasing points"
                )
            parsed.append(tuple(arr.tolist()))
        partitions = tuple(parsed)
        if profile == "custom-table":
            vals = _require(pen_raw, "values", "penalization.")
            if not isinstance(vals, list) or len(vals) != len(partitions):
                raise ConfigError("penalization.values: need one value list per channel")
            parsed_vals = []
            for ch, v in enumerate(vals):
                arr = _numeric_array(v, f"penalization.values[{ch}]", 1)
                if np.any(arr < 0):
                    raise ConfigError(
                        f"penalization.values[{ch}]: penalization values must be non-negative"
                    )
                parsed_vals.append(tuple(arr.tolist()))
            table_values = tuple(parsed_vals)
    else:
        partitions = tuple()

    grid_raw = _section(raw, "grid")
    grid_nodes = int(grid_raw.get("nodes", 4000))
    if grid_nodes < 2:
        raise ConfigError(f"grid.nodes: need at least 2, got {grid_nodes}")
    bracket_multiplier = int(grid_raw.get("bracket_multiplier", 8))
    if bracket_multiplier < 1:
        raise ConfigError("grid.bracket_multiplier: must be >= 1")

    opt_raw = _section(raw, "optimizer")
    try:
        optimizer = OptimizerSettings(
            max_iterations=int(opt_raw.get("max_iterations", 50_000)),
            gtol=float(opt_raw.get("gtol", 1e-6)),
            flat_tol=float(opt_raw.get("flat_tol", 1e-12)),
            flat_window=int(opt_raw.get("flat_window", 200)),
            divergence_threshold=float(opt_raw.get("divergence_threshold", 1e6)),
            divergence_window=int(opt_raw.get("divergence_window", 100)),
            step_rule=str(opt_raw.get("step_rule", "adaptive")),
            step_c=float(opt_raw.get("step_c", 1.0)),
            lower_bound=opt_raw.get("lower_bound"),
            exact_refinement=bool(opt_raw.get("exact_refinement", True)),
            bracket_multiplier=bracket_multiplier,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"optimizer: {exc}") from None

    chk_raw = _section(raw, "checks")
    agreement = chk_raw.get("fenchel_agreement_tol", 0.05)
    checks = ChecksConfig(
        terminal_tol=float(chk_raw.get("terminal_tol", 1e-2)),
        staircase=bool(chk_raw.get("staircase", True)),
        fenchel=bool(chk_raw.get("fenchel", False)),
        fenchel_gap_rtol=float(chk_raw.get("fenchel_gap_rtol", 1e-3)),
        fenchel_agreement_tol=None if agreement is None else float(agreement),
        solvable=bool(chk_raw.get("solvable", False)),
        expect_divergence=bool(chk_raw.get("expect_divergence", False)),
    )

    cfg = ExperimentConfig(
        name=str(name),
        system=system,
        partitions=partitions,
        profile=profile,
        table_values=table_values,
        allow_offgrid_minimum=bool(pen_raw.get("allow_offgrid_minimum", False)),
        kind=kind,
        beta=beta,
        grid_nodes=grid_nodes,
        bracket_multiplier=bracket_multiplier,
        optimizer=optimizer,
        checks=checks,
        output_dir=str(raw.get("output_dir", name)),
        seed=int(raw.get("seed", 0)),
        raw=raw,
    )
    if kind.penalized:
        try:
            cfg.penalizations()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"penalization: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON in {path} ({exc})") from None
    return parse_config(raw, name_hint=path.stem)
