"""Run configuration: strict JSON schema with field-path error reporting.

No defaults exist for s, q, or the dilation scale R; a config that omits
them is rejected so runs stay reproducible.  The seed is mandatory for the
same reason.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .domain import DomainSpec, Grid, build_grid, mirror_group, symmetry_group
from .energy import EnergyParams
from .solver import InitSpec, MassConstraint, SolveConfig
from .spectral import BoundaryCondition, QUASI_PERIODIC
from .tiling import TilingSpec


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"config field '{path}': {message}")


def _req(obj: dict, key: str, path: str):
    if key not in obj:
        raise ConfigError(f"{path}.{key}" if path else key, "is required")
    return obj[key]


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"must be a number, got {value!r}")
    return float(value)


def _int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"must be an integer, got {value!r}")
    return value


@dataclass(eq=False)
class RunConfig:
    domain: DomainSpec
    bc: BoundaryCondition
    resolution: int
    params: EnergyParams
    solve: SolveConfig
    tiling: TilingSpec | None
    R_list: list | None
    warm_start: bool
    seed: int
    out_dir: str
    raw: dict


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}")
    return parse_config(raw)


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "must be a JSON object")
    seed = _int(_req(raw, "seed", ""), "seed")
    domain = _parse_domain(_req(raw, "domain", ""))
    bc = _parse_bc(_req(raw, "bc", ""), domain)
    resolution = _int(_req(raw, "resolution", ""), "resolution")
    params = _parse_energy(_req(raw, "energy", ""))
    solve = _parse_solve(raw.get("solve", {}), params, seed)
    tiling = _parse_tiling(raw.get("tiling"), bc)
    R_list = raw.get("R_list")
    if R_list is not None:
        if not isinstance(R_list, list) or not R_list:
            raise ConfigError("R_list", "must be a non-empty list of increasing numbers")
        R_list = [_num(v, f"R_list[{i}]") for i, v in enumerate(R_list)]
        if any(b <= a for a, b in zip(R_list, R_list[1:])):
            raise ConfigError("R_list", "must be strictly increasing")
    out_dir = raw.get("output", {}).get("dir", "out")
    return RunConfig(
        domain=domain,
        bc=bc,
        resolution=resolution,
        params=params,
        solve=solve,
        tiling=tiling,
        R_list=R_list,
        warm_start=bool(raw.get("warm_start", True)),
        seed=seed,
        out_dir=out_dir,
        raw=raw,
    )


def _parse_domain(obj) -> DomainSpec:
    if not isinstance(obj, dict):
        raise ConfigError("domain", "must be an object")
    kind = _req(obj, "kind", "domain")
    scale = _num(_req(obj, "scale", "domain"), "domain.scale")
    try:
        if kind == "rectangle":
            return DomainSpec.rectangle(
                _num(_req(obj, "L1", "domain"), "domain.L1"),
                _num(_req(obj, "L2", "domain"), "domain.L2"),
                scale,
            )
        if kind == "strip":
            width = _num(_req(obj, "width", "domain"), "domain.width")
            trunc = obj.get("truncation")
            return DomainSpec.strip(width, None if trunc is None else _num(trunc, "domain.truncation"), scale)
        if kind == "parallelogram":
            return DomainSpec.parallelogram(
                _req(obj, "h1", "domain"), _req(obj, "h2", "domain"), scale
            )
        if kind == "equilateral_triangle":
            return DomainSpec.equilateral_triangle(_num(_req(obj, "side", "domain"), "domain.side"), scale)
        if kind == "triangle_30_60_90":
            return DomainSpec.triangle_30_60_90(
                _num(_req(obj, "hypotenuse", "domain"), "domain.hypotenuse"), scale
            )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("domain", str(exc))
    raise ConfigError("domain.kind", f"unknown kind {kind!r}")


def _parse_bc(obj, domain: DomainSpec) -> BoundaryCondition:
    if not isinstance(obj, dict):
        raise ConfigError("bc", "must be an object")
    regime = _req(obj, "regime", "bc")
    try:
        if regime == "quasi_periodic":
            theta = _req(obj, "theta", "bc")
            if not isinstance(theta, list) or len(theta) != 2:
                raise ConfigError("bc.theta", "must be a list of two phases")
            return BoundaryCondition(regime, theta=(float(theta[0]), float(theta[1])))
        if regime == "mixed_dn":
            return BoundaryCondition(regime, dirichlet_axis=_int(_req(obj, "dirichlet_axis", "bc"), "bc.dirichlet_axis"))
        return BoundaryCondition(regime)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("bc", str(exc))


def _parse_energy(obj) -> EnergyParams:
    if not isinstance(obj, dict):
        raise ConfigError("energy", "must be an object")
    s = _num(_req(obj, "s", "energy"), "energy.s")
    q = _num(_req(obj, "q", "energy"), "energy.q")
    if not (0.0 < s <= 1.0):
        raise ConfigError("energy.s", f"must lie in (0, 1], got {s}")
    if q <= 2.0:
        raise ConfigError("energy.q", f"must satisfy q ∈ (2, 2*_s), got {q}")
    return EnergyParams(s=s, q=q)


def _parse_solve(obj, params: EnergyParams, seed: int) -> SolveConfig:
    if not isinstance(obj, dict):
        raise ConfigError("solve", "must be an object")
    init_obj = obj.get("init", {"kind": "constant_plus_noise"})
    if not isinstance(init_obj, dict):
        raise ConfigError("solve.init", "must be an object")
    try:
        init = InitSpec(
            kind=init_obj.get("kind", "constant_plus_noise"),
            vertex=init_obj.get("vertex"),
            width=init_obj.get("width"),
            path=init_obj.get("path"),
        )
    except ValueError as exc:
        raise ConfigError("solve.init", str(exc))
    constraints = []
    for i, c in enumerate(obj.get("constraints", [])):
        constraints.append(
            MassConstraint(
                vertex=c.get("vertex"),
                point=tuple(c["point"]) if c.get("point") else None,
                radius=c.get("radius"),
                theta_q=c.get("theta_q"),
            )
        )
    try:
        return SolveConfig(
            params=params,
            max_iters=_int(obj.get("max_iters", 5000), "solve.max_iters"),
            tol_J=_num(obj.get("tol_J", 1e-13), "solve.tol_J"),
            tol_residual=_num(obj.get("tol_residual", 1e-8), "solve.tol_residual"),
            init=init,
            enforce_positivity=bool(obj.get("enforce_positivity", True)),
            symmetrize=None,  # materialized later, needs the grid
            radialize=bool(obj.get("radialize", False)),
            constraints=tuple(constraints),
            seed=seed,
            noise_amplitude=_num(obj.get("noise_amplitude", 1e-2), "solve.noise_amplitude"),
        )
    except ValueError as exc:
        raise ConfigError("solve", str(exc))


def _parse_tiling(obj, bc: BoundaryCondition) -> TilingSpec | None:
    if obj is None:
        return None
    if not isinstance(obj, dict):
        raise ConfigError("tiling", "must be an object")
    copies = obj.get("copies", [2, 2])
    if not isinstance(copies, list) or len(copies) != 2:
        raise ConfigError("tiling.copies", "must be a list [k1, k2]")
    try:
        return TilingSpec(
            mode=_req(obj, "mode", "tiling"),
            copies=(int(copies[0]), int(copies[1])),
            dirichlet_axis=bc.dirichlet_axis,
        )
    except ValueError as exc:
        raise ConfigError("tiling", str(exc))


def materialize_symmetrize(cfg: RunConfig, grid: Grid):
    """Build the symmetry group named in the config for this grid."""
    spec = cfg.raw.get("solve", {}).get("symmetrize")
    if spec is None:
        if cfg.domain.is_triangle:
            # triangle solves are symmetry-reduced periodic solves; default
            # to the even group unless the config says otherwise
            return symmetry_group(cfg.domain, grid, "even")
        return None
    if isinstance(spec, str):
        if spec not in ("even", "odd"):
            raise ConfigError("solve.symmetrize", f"must be 'even', 'odd', or an object, got {spec!r}")
        return symmetry_group(cfg.domain, grid, spec)
    if isinstance(spec, dict):
        character = spec.get("character", "even")
        axes = spec.get("axes")
        if axes is not None:
            return mirror_group(grid, tuple(axes), character)
        return symmetry_group(cfg.domain, grid, character)
    raise ConfigError("solve.symmetrize", "must be 'even', 'odd', null, or an object")


def build_grid_for(cfg: RunConfig, scale: float | None = None) -> Grid:
    domain = cfg.domain if scale is None else DomainSpec(
        cfg.domain.kind, scale, cfg.domain.lengths, cfg.domain.h1, cfg.domain.h2
    )
    return build_grid(domain, cfg.resolution)
