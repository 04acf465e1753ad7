"""Command-line front end.

Commands: solve, sweep, extend, render, diagnose, stverify.  Global flags
--config, --out, --threads, --seed.  Exit codes: 0 success, 2 validation,
3 convergence failure, 4 I/O.  Reports are versioned JSON; fields go to the
binary field-file format.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

import numpy as np
from scipy import fft as sfft

from . import __version__
from .config import ConfigError, RunConfig, build_grid_for, load_config, materialize_symmetrize
from .diagnostics import DiagnosticsError, concentration_report, vertex_distance
from .domain import DomainError, symmetry_group
from .energy import EnergyError, EnergyParams, residual_report
from .fieldfile import FieldFileError, bc_from_json, field_from_file, write_field
from .render import render_overlay, render_pgm, render_ppm
from .solver import SolveConfig, SolverError, minimize, sweep_R
from .spectral import (
    BoundaryCondition,
    DIRICHLET,
    Field,
    NEUMANN,
    QUASI_PERIODIC,
    SpectralError,
    symbol,
)
from .stx import (
    STXError,
    cutoff_energy_defect,
    make_tgrid,
    neumann_trace,
    st_energy,
    st_extend,
    with_coefficients,
)
from .tiling import TilingError, TilingSpec, extend_field, structure_map, verify_extension
from .spectral import apply_fraclap, norms

REPORT_VERSION = 1

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4

_VALIDATION_ERRORS = (
    ConfigError,
    DomainError,
    SpectralError,
    EnergyError,
    SolverError,
    TilingError,
    DiagnosticsError,
    STXError,
)


def _write_json(path: str, payload: dict):
    payload = dict(payload)
    payload.setdefault("report_version", REPORT_VERSION)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_out(out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.solve = replace(cfg.solve, seed=args.seed)
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def _prepare(cfg: RunConfig):
    grid = build_grid_for(cfg)
    group = materialize_symmetrize(cfg, grid)
    scfg = replace(cfg.solve, symmetrize=group)
    return grid, scfg


def _classify(cfg: RunConfig, grid, sol, rep):
    if cfg.domain.kind in ("rectangle", "strip") or cfg.domain.is_triangle:
        group = None
        if cfg.domain.is_triangle:
            group = symmetry_group(cfg.domain, grid, "even")
        vertex_distance(rep, cfg.domain, grid, group)
    return rep


def cmd_solve(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    grid, scfg = _prepare(cfg)
    sol = minimize(grid, cfg.bc, scfg)
    p = cfg.params.bind(symbol(grid, cfg.bc))
    rep = _classify(cfg, grid, sol, concentration_report(sol.field, cfg.params.q))
    out = _ensure_out(cfg.out_dir)
    provenance = {
        "command": "solve",
        "seed": cfg.seed,
        "character": sol.character,
        "version": __version__,
    }
    field_path = os.path.join(out, "solution.fld")
    write_field(field_path, sol.field, cfg.bc, cfg.params.s, cfg.params.q,
                lam=sol.lam, residual=sol.residual, provenance=provenance)
    report = {
        "lambda": sol.lam,
        "residuals": residual_report(sol.field, p),
        "iterations": sol.iterations,
        "converged": sol.converged,
        "constraint_active": list(sol.constraint_active),
        "concentration": rep.as_dict(),
        "flags": sol.flags,
        "seed": cfg.seed,
        "field_file": field_path,
    }
    _write_json(os.path.join(out, "report.json"), report)
    print(f"lambda = {sol.lam:.12g}  residual = {sol.residual:.3e}  iterations = {sol.iterations}")
    return EXIT_OK if sol.converged else EXIT_CONVERGENCE


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if not cfg.R_list:
        raise ConfigError("R_list", "sweep needs a non-empty R_list")
    grid0 = build_grid_for(cfg)
    group = materialize_symmetrize(cfg, grid0)
    # the group is grid-bound; sweep rebuilds it per R through the config hook
    out = _ensure_out(cfg.out_dir)
    entries = []
    prev_values = None
    for R in cfg.R_list:
        sub = replace(cfg.solve, seed=cfg.seed)
        gridR = build_grid_for(cfg, scale=R)
        groupR = materialize_symmetrize(cfg, gridR)
        sub = replace(sub, symmetrize=groupR)
        from .solver import _rescale_to, _run_minimize  # sweep internals

        try:
            if cfg.warm_start and prev_values is not None:
                periodic = cfg.domain.is_triangle or cfg.bc.regime in ("periodic", QUASI_PERIODIC)
                sol = _run_minimize(gridR, cfg.bc, sub, _rescale_to(prev_values, gridR.dims, periodic))
            else:
                sol = minimize(gridR, cfg.bc, sub)
            rep = _classify(cfg, gridR, sol, concentration_report(sol.field, cfg.params.q))
            prev_values = sol.field.values
            fpath = os.path.join(out, f"solution_R{R:g}.fld")
            write_field(fpath, sol.field, cfg.bc, cfg.params.s, cfg.params.q,
                        lam=sol.lam, residual=sol.residual,
                        provenance={"command": "sweep", "R": R, "seed": cfg.seed,
                                    "character": sol.character, "version": __version__})
            entries.append({
                "R": R,
                "status": "ok",
                "lambda": sol.lam,
                "residual": sol.residual,
                "converged": sol.converged,
                "weight": rep.weight,
                "location_class": rep.location_class,
                "x_star": list(rep.x_star),
                "field_file": fpath,
            })
        except Exception as exc:  # per-R failures keep the sweep going
            entries.append({"R": R, "status": "failed", "error": str(exc)})
            prev_values = None
    _write_json(os.path.join(out, "sweep.json"), {"entries": entries, "seed": cfg.seed})
    for e in entries:
        if e["status"] == "ok":
            print(f"R={e['R']:g}  lambda={e['lambda']:.8g}  weight={e['weight']:.4f}  {e['location_class']}")
        else:
            print(f"R={e['R']:g}  FAILED: {e['error']}")
    return EXIT_OK


def cmd_extend(args) -> int:
    field, header = field_from_file(args.field)
    bc = bc_from_json(header["bc"])
    character = (header.get("provenance") or {}).get("character")
    if args.config:
        cfg = load_config(args.config)
        spec = cfg.tiling
        out_dir = args.out or cfg.out_dir
    else:
        spec = None
        out_dir = args.out or "out"
    if args.mode is not None or spec is None:
        mode = args.mode or "even"
        copies = tuple(args.copies) if args.copies else (2, 2)
        spec = TilingSpec(mode=mode, copies=copies, dirichlet_axis=bc.dirichlet_axis)
    ext = extend_field(field, bc, character, spec)
    p = EnergyParams(s=float(header["s"]), q=float(header["q"]))
    wrap_ok = True
    if bc.regime == QUASI_PERIODIC:
        wrap_ok = all(
            abs((t * k) % (2 * math.pi)) < 1e-9 or abs((t * k) % (2 * math.pi) - 2 * math.pi) < 1e-9
            for t, k in zip(bc.theta, spec.copies)
        )
    report = {"mode": spec.mode, "copies": list(spec.copies)}
    if wrap_ok:
        fund = header.get("residual")
        report["verification"] = verify_extension(ext, p, None if fund is None or math.isnan(fund) else fund)
    else:
        report["verification"] = {"skipped": "phase does not close over the requested copies"}
    report["structure"] = structure_map(ext, float(header["q"]))
    out = _ensure_out(out_dir)
    ext_path = os.path.join(out, "extended.fld")
    write_field(ext_path, ext, BoundaryCondition("periodic"), float(header["s"]), float(header["q"]),
                lam=float(header.get("lambda", float("nan"))),
                residual=report["verification"].get("residual", float("nan")) if wrap_ok else float("nan"),
                provenance={"command": "extend", "source": os.path.basename(args.field),
                            "mode": spec.mode, "copies": list(spec.copies),
                            "theta": list(bc.theta), "version": __version__})
    report["field_file"] = ext_path
    _write_json(os.path.join(out, "extend.json"), report)
    print(f"extended {spec.copies[0]}x{spec.copies[1]} ({spec.mode}); "
          f"residual = {report['verification'].get('residual', float('nan')):.3e}"
          if wrap_ok else "extended (verification skipped)")
    return EXIT_OK


def cmd_render(args) -> int:
    field, header = field_from_file(args.field)
    out = _ensure_out(args.out or "out")
    stem = os.path.splitext(os.path.basename(args.field))[0]
    if args.overlay:
        pts = structure_map(field, float(header["q"]))
        data = render_overlay(field.values, pts)
        path = os.path.join(out, stem + "_structure.ppm")
    elif field.scalar_kind == "complex":
        data = render_ppm(field.values)
        path = os.path.join(out, stem + ".ppm")
    else:
        data = render_pgm(field.values)
        path = os.path.join(out, stem + ".pgm")
    with open(path, "wb") as fh:
        fh.write(data)
    print(path)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    field, header = field_from_file(args.field)
    rep = concentration_report(field, float(header["q"]), eps=args.eps)
    try:
        from .fieldfile import domain_from_json

        dom = domain_from_json(header["domain"])
        if dom.kind in ("rectangle", "strip") or dom.is_triangle:
            group = symmetry_group(dom, field.grid, "even") if dom.is_triangle else None
            vertex_distance(rep, dom, field.grid, group)
    except (DomainError, DiagnosticsError):
        pass
    payload = rep.as_dict()
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.out:
        _write_json(os.path.join(_ensure_out(args.out), "diagnose.json"), payload)
    return EXIT_OK


def cmd_stverify(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if cfg.bc.regime not in (NEUMANN, DIRICHLET):
        raise ConfigError("bc.regime", "the extension oracle is restricted to Neumann/Dirichlet regimes")
    grid = build_grid_for(cfg)
    sym = symbol(grid, cfg.bc)
    s, q = cfg.params.s, cfg.params.q
    opts = cfg.raw.get("stverify", {})
    n_fields = int(opts.get("fields", 10))
    count = int(opts.get("t_count", 400))
    tg = make_tgrid(sym, count=count)
    rng = np.random.default_rng(cfg.seed)
    gaps, traces = [], []
    table = None
    for _ in range(n_fields):
        u = Field(grid, rng.standard_normal(grid.dims))
        w = st_extend(u, sym, s, tg) if table is None else with_coefficients(table, u)
        table = w
        _, _, gap = st_energy(w)
        gaps.append(gap)
        tr = neumann_trace(w)
        ap = apply_fraclap(u, sym, s)
        num, _ = norms(Field(grid, tr.values - ap.values), 2.0)
        den, _ = norms(ap, 2.0)
        traces.append(num / den)
    # cutoff defect over four doublings of r around a centered bump
    a, b = grid.domain.side_lengths()
    center = 0.5 * (grid.cell[:, 0] + grid.cell[:, 1])
    d = grid.torus_distance(grid.nodes(), center)
    bump = Field(grid, np.exp(-(d**2) / (2.0 * (0.05 * min(a, b)) ** 2)))
    omega = d <= 0.15 * min(a, b)
    h = max(grid.spacings())
    defects = []
    r0 = 2.5 * h
    for k in range(4):
        r = r0 * 2**k
        if r > 0.45 * min(a, b):
            break
        defects.append({"r": r, "defect": cutoff_energy_defect(bump, sym, s, omega, r, tg)})
    out = _ensure_out(cfg.out_dir)
    payload = {
        "s": s,
        "q": q,
        "energy_identity_gap": {"max": max(gaps), "values": gaps},
        "trace_mismatch": {"max": max(traces), "values": traces},
        "cutoff_defects": defects,
        "t_grid": {"count": tg.count, "T": float(tg.t[-1]), "t_min": float(tg.t[0])},
        "fields": n_fields,
        "seed": cfg.seed,
    }
    _write_json(os.path.join(out, "stverify.json"), payload)
    print(f"energy identity gap max = {max(gaps):.3e}; trace mismatch max = {max(traces):.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fractile",
                                 description="fractional ground states on fundamental domains and their tilings")
    ap.add_argument("--version", action="version", version=f"fractile {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=1, help="worker cap for transforms and sweeps")
        p.add_argument("--seed", type=int, default=None, help="seed override")

    p = sub.add_parser("solve", help="minimize the quotient on one cell")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="solve across the R_list of the config")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("extend", help="extend a solution field by reflections or phases")
    common(p, needs_config=False)
    p.add_argument("--config", default=None)
    p.add_argument("--field", required=True, help="field file of the fundamental solve")
    p.add_argument("--mode", choices=["even", "odd", "mixed", "quasi_phase"], default=None)
    p.add_argument("--copies", type=int, nargs=2, default=None, metavar=("K1", "K2"))
    p.set_defaults(func=cmd_extend)

    p = sub.add_parser("render", help="write a PGM/PPM image of a field file")
    common(p, needs_config=False)
    p.add_argument("--field", required=True)
    p.add_argument("--overlay", action="store_true", help="mark structure maxima, sign-colored")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("diagnose", help="concentration report of a field file")
    common(p, needs_config=False)
    p.add_argument("--field", required=True)
    p.add_argument("--eps", type=float, default=0.01)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("stverify", help="extension-oracle identity checks")
    common(p)
    p.set_defaults(func=cmd_stverify)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    workers = max(1, args.threads)
    try:
        with sfft.set_workers(workers):
            return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FieldFileError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
