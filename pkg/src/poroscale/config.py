"""Run configuration: strict YAML schema shared by all CLI subcommands.

Unknown keys are rejected anywhere in the tree, and the physical regime
parameters (tau0, mu1, c_f, and beta for acoustics) must be explicit; the
regime criteria of the homogenization limits are too easy to corrupt with
silent defaults.  Every run echoes the fully resolved configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .geometry import AlphaRule, CellSpec, ScalingRegime
from .dns import Forcing
from .macro import BoundaryCondition

_CELL_KEYS = {"shape", "s", "resolution", "axis", "mask"}
_GEOMETRY_KEYS = {"dimension", "crack_cell", "pore_cell", "epsilon",
                  "eps_list", "r", "resolution"}
_REGIME_KEYS = {"kind", "tau0", "mu1", "mu2", "c_f", "beta",
                "alpha_tau", "alpha_mu", "alpha_q"}
_ALPHA_KEYS = {"limit", "coeff", "exponent"}
_SOLVER_KEYS = {"tolerance", "max_iter", "dt", "t_end", "macro_grid",
                "incompressible"}
_FORCING_KEYS = {"amplitude", "time", "space"}
_BOUNDARY_KEYS = {"x_lo", "x_hi", "y_lo", "y_hi", "z_lo", "z_hi"}
_OUTPUT_KEYS = {"directory", "formats", "sample_times", "fields"}
_TOP_KEYS = {"geometry", "regime", "solver", "forcing", "boundary", "output"}
_FORMATS = {"csv", "json", "vtk", "raw"}


def _check_keys(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"section {where!r} must be a mapping")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(
            f"unknown keys in {where}: {', '.join(sorted(unknown))}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key {where}.{key}")
    return section[key]


def _number(val, where: str) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where} must be a number, got {val!r}")
    return float(val)


@dataclass
class RunConfig:
    """Validated configuration with typed builders per subsystem."""

    geometry: dict
    regime: dict
    solver: dict
    forcing: dict
    boundary: dict
    output: dict
    resolved: dict = field(default_factory=dict)

    def cell(self, which: str) -> CellSpec:
        spec = self.geometry.get(which)
        if spec is None:
            raise ConfigError(f"geometry.{which} is required for this run")
        mask = spec.get("mask")
        return CellSpec(dimension=self.geometry["dimension"],
                        shape=spec["shape"], s=spec.get("s", 0.0),
                        resolution=spec.get("resolution", 32),
                        axis=spec.get("axis", 0),
                        mask=tuple(map(tuple, mask)) if mask else None)

    def _alpha(self, key):
        rule = self.regime.get(key)
        if rule is None:
            return None
        return AlphaRule(limit=rule.get("limit", 0.0),
                         coeff=rule.get("coeff", 0.0),
                         exponent=rule.get("exponent", 0.0))

    def build_regime(self, epsilon: float | None = None) -> ScalingRegime:
        eps = epsilon if epsilon is not None else self.geometry.get("epsilon")
        if eps is None:
            raise ConfigError("geometry.epsilon is required for this run")
        kw = {}
        for key in ("alpha_tau", "alpha_mu", "alpha_q"):
            rule = self._alpha(key)
            if rule is not None:
                kw[key] = rule
        reg = self.regime
        mu2 = reg.get("mu2", math.inf if reg["kind"] == "filtration" else 0.0)
        return ScalingRegime(epsilon=eps, r=self.geometry.get("r", 1.0),
                             kind=reg["kind"], tau0=reg["tau0"],
                             mu1=reg["mu1"], mu2=mu2, c_f=reg["c_f"],
                             beta=reg.get("beta"), **kw)

    def build_forcing(self) -> Forcing:
        f = self.forcing
        amp = tuple(float(a) for a in f.get("amplitude", ()))
        time = tuple(f.get("time", ["constant"]))
        space = tuple(tuple(s) for s in f.get("space", ()))
        return Forcing(amplitude=amp, time=time, space=space)

    def build_boundary(self) -> BoundaryCondition:
        return BoundaryCondition({k: float(v)
                                  for k, v in self.boundary.items()})

    def eps_list(self) -> list:
        lst = self.geometry.get("eps_list")
        if lst is None:
            raise ConfigError("geometry.eps_list is required for converge")
        return [float(e) for e in lst]


def parse_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return validate_config(raw)


def validate_config(raw) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(raw, _TOP_KEYS, "config")
    geometry = _require(raw, "geometry", "config")
    _check_keys(geometry, _GEOMETRY_KEYS, "geometry")
    dim = _require(geometry, "dimension", "geometry")
    if dim not in (2, 3):
        raise ConfigError(f"geometry.dimension must be 2 or 3, got {dim}")
    for which in ("crack_cell", "pore_cell"):
        if which in geometry:
            _check_keys(geometry[which], _CELL_KEYS, f"geometry.{which}")
            _require(geometry[which], "shape", f"geometry.{which}")
    if "epsilon" in geometry:
        _number(geometry["epsilon"], "geometry.epsilon")
    if "eps_list" in geometry:
        lst = geometry["eps_list"]
        if not isinstance(lst, list) or not lst:
            raise ConfigError("geometry.eps_list must be a non-empty list")
        for e in lst:
            _number(e, "geometry.eps_list entry")

    regime = _require(raw, "regime", "config")
    _check_keys(regime, _REGIME_KEYS, "regime")
    kind = _require(regime, "kind", "regime")
    if kind not in ("filtration", "acoustics"):
        raise ConfigError(f"unknown regime kind {kind!r}")
    # the physical parameters are deliberately default-free
    _number(_require(regime, "tau0", "regime"), "regime.tau0")
    _number(_require(regime, "mu1", "regime"), "regime.mu1")
    _number(_require(regime, "c_f", "regime"), "regime.c_f")
    if kind == "acoustics" and "beta" not in regime:
        raise ConfigError("regime.beta is required for acoustics")
    for key in ("alpha_tau", "alpha_mu", "alpha_q"):
        if key in regime:
            _check_keys(regime[key], _ALPHA_KEYS, f"regime.{key}")

    solver = raw.get("solver", {})
    _check_keys(solver, _SOLVER_KEYS, "solver")
    forcing = raw.get("forcing", {})
    _check_keys(forcing, _FORCING_KEYS, "forcing")
    boundary = raw.get("boundary", {})
    _check_keys(boundary, _BOUNDARY_KEYS, "boundary")
    for k, v in boundary.items():
        _number(v, f"boundary.{k}")
    output = raw.get("output", {})
    _check_keys(output, _OUTPUT_KEYS, "output")
    for fmt in output.get("formats", []):
        if fmt not in _FORMATS:
            raise ConfigError(f"unknown output format {fmt!r}")

    resolved = {
        "geometry": geometry, "regime": regime, "solver": solver,
        "forcing": forcing, "boundary": boundary, "output": output,
    }
    cfg = RunConfig(geometry, regime, solver, forcing, boundary, output,
                    resolved=resolved)
    # force early validation of the typed objects that are always needed
    cfg.build_forcing()
    return cfg


def dump_resolved(cfg: RunConfig, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.resolved, fh, sort_keys=True,
                       default_flow_style=False)
