"""Command-line entry point: one config file in, one run directory out.

Every subcommand writes ``summary.json``, ``diagnostics.csv`` and a copy
of the resolved configuration; VTK field series are written when the
output formats include ``vtk``.  Outputs are deterministic: identical
configs produce byte-identical CSV and JSON.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import PoroscaleError, ConfigError
from .geometry import (IndicatorField, build_cell, build_phase_masks,
                       composite_porosity, minimal_macro_resolution,
                       _tile_indices)
from .cell_problems import (acoustic_tensor_crack, acoustic_tensor_pore,
                            filtration_tensor, solve_filtration_cell,
                            solve_neumann_cell, DEFAULT_TOL, MAX_ITER)
from .dns import run_dns
from .macro import HomogenizedCoefficients, run_acoustics, run_darcy
from .analysis import convergence_study, poincare_constant, verify_estimates
from .config import RunConfig, dump_resolved, parse_config
from .io import write_csv, write_json, write_mask_raw, \
    write_vtk_structured_points

SUBCOMMANDS = ("cell-tensor", "dns", "darcy", "acoustics", "poincare",
               "converge")


def _tensor_payload(t):
    return {"matrix": t.matrix, "kind": t.kind, "asymmetry": t.asymmetry,
            "blocked": t.blocked, "eigenvalues": t.eigenvalues(),
            "momentum": t.momentum, "tolerance": t.tolerance,
            "diagnostics": t.diagnostics}


def _build_domain(cfg: RunConfig):
    """Crack and pore indicators of the perforated box at the configured
    resolution (pore phase empty when no pore cell is given)."""
    crack = cfg.cell("crack_cell")
    regime = cfg.build_regime()
    if cfg.geometry.get("pore_cell"):
        pore = cfg.cell("pore_cell")
        n = cfg.geometry.get("resolution")
        if n is None:
            n = minimal_macro_resolution(regime, crack, pore)
        return build_phase_masks(regime, crack, pore, n), regime
    n = cfg.geometry.get("resolution")
    if n is None:
        n = round(crack.resolution / regime.epsilon)
    per = round(n * regime.epsilon)
    if per < crack.resolution or per % crack.resolution:
        raise ConfigError(
            f"resolution {n} does not align with epsilon={regime.epsilon} "
            f"and cell resolution {crack.resolution}")
    idx = _tile_indices(n, per, crack.resolution)
    mask = build_cell(crack).mask[np.ix_(*[idx] * crack.dimension)]
    flags = (False,) * crack.dimension
    chi_c = IndicatorField(mask, flags)
    chi_p = IndicatorField(np.zeros_like(mask), flags)
    return (chi_c, chi_p), regime


def _coefficients(cfg: RunConfig, regime):
    crack = build_cell(cfg.cell("crack_cell"))
    m_c = crack.porosity()
    tol = cfg.solver.get("tolerance", DEFAULT_TOL)
    has_pore = bool(cfg.geometry.get("pore_cell"))
    m_p = build_cell(cfg.cell("pore_cell")).porosity() if has_pore else 0.0
    m = composite_porosity(m_c, m_p)
    d = cfg.geometry["dimension"]
    payload = {"m_c": m_c, "m_p": m_p, "m": m}
    if regime.kind == "filtration":
        b1 = filtration_tensor(crack, regime.mu1, tol=tol,
                               max_iter=cfg.solver.get("max_iter", MAX_ITER))
        payload["B1"] = _tensor_payload(b1)
        coeffs = HomogenizedCoefficients(d, m=m, c_f=regime.c_f,
                                         permeability=b1.matrix)
    else:
        tc = acoustic_tensor_crack(crack, tol=tol)
        if has_pore:
            tp = acoustic_tensor_pore(build_cell(cfg.cell("pore_cell")),
                                      regime.beta, m_c, tol=tol)
            mp_mat = tp.momentum
            payload["B2_pore"] = _tensor_payload(tp)
        else:
            mp_mat = np.zeros((d, d))
        payload["B2_crack"] = _tensor_payload(tc)
        coeffs = HomogenizedCoefficients(
            d, m=m, c_f=regime.c_f, tau0=regime.tau0,
            momentum_crack=tc.momentum, momentum_pore=mp_mat,
            m_c=m_c, m_p=m_p, beta=regime.beta)
    return coeffs, payload


def _write_macro_fields(out, traj, formats):
    if "vtk" not in formats:
        return
    d = traj.states[0].pressure.ndim
    n = traj.states[0].pressure.shape[0]
    for k, st in enumerate(traj.states):
        fields = {"pressure": st.pressure}
        for a in range(d):
            lo = tuple(slice(None, -1) if b == a else slice(None)
                       for b in range(d))
            hi = tuple(slice(1, None) if b == a else slice(None)
                       for b in range(d))
            fields[f"v_c_{'xyz'[a]}"] = 0.5 * (st.v_c[a][lo] + st.v_c[a][hi])
            fields[f"v_p_{'xyz'[a]}"] = 0.5 * (st.v_p[a][lo] + st.v_p[a][hi])
        write_vtk_structured_points(out / f"fields_{k:04d}.vtk", fields,
                                    spacing=1.0 / n)


def _run_cell_tensor(cfg: RunConfig, out: Path, jobs: int):
    regime = cfg.build_regime()
    crack = build_cell(cfg.cell("crack_cell"))
    tol = cfg.solver.get("tolerance", DEFAULT_TOL)
    formats = cfg.output.get("formats", ["csv", "json"])
    summary = {"regime": regime.kind, "epsilon": regime.epsilon}
    rows = []
    if regime.kind == "filtration":
        tens = filtration_tensor(crack, regime.mu1, tol=tol,
                                 max_iter=cfg.solver.get("max_iter", MAX_ITER),
                                 fingerprint=cfg.cell("crack_cell").fingerprint())
        summary["B1"] = _tensor_payload(tens)
        for i, (it, res) in enumerate(zip(tens.diagnostics["iterations"],
                                          tens.diagnostics["div_residuals"])):
            rows.append({"axis": i, "iterations": it, "residual": res})
        if "vtk" in formats:
            for axis in range(crack.dimension):
                fld = solve_filtration_cell(crack, regime.mu1, axis, tol=tol)
                write_vtk_structured_points(
                    out / f"fields_axis{axis}.vtk",
                    {"speed2": fld.speed_squared(), "pressure": fld.pressure},
                    spacing=fld.spacing)
    else:
        tc = acoustic_tensor_crack(crack, tol=tol)
        summary["B2_crack"] = _tensor_payload(tc)
        for i, res in enumerate(tc.diagnostics["residuals"]):
            rows.append({"axis": i, "iterations": 0, "residual": res})
        if cfg.geometry.get("pore_cell"):
            tp = acoustic_tensor_pore(build_cell(cfg.cell("pore_cell")),
                                      regime.beta, tc.diagnostics["porosity"],
                                      tol=tol)
            summary["B2_pore"] = _tensor_payload(tp)
        if "vtk" in formats:
            for axis in range(crack.dimension):
                fld = solve_neumann_cell(crack, axis, tol=tol)
                write_vtk_structured_points(
                    out / f"fields_axis{axis}.vtk",
                    {"grad2": fld.speed_squared(), "potential": fld.pressure},
                    spacing=fld.spacing)
    if "raw" in formats:
        write_mask_raw(out / "crack_mask.raw", crack.mask)
    write_csv(out / "diagnostics.csv", rows,
              columns=["axis", "iterations", "residual"])
    write_json(out / "summary.json", summary)


def _run_dns_cmd(cfg: RunConfig, out: Path, jobs: int):
    (chi_c, chi_p), regime = _build_domain(cfg)
    forcing = cfg.build_forcing()
    t_end = cfg.solver.get("t_end", 1.0)
    dt = cfg.solver.get("dt", 0.1)
    samples = cfg.output.get("sample_times")
    traj = run_dns((chi_c, chi_p), regime, forcing, t_end, dt,
                   sample_times=samples)
    formats = cfg.output.get("formats", ["csv", "json"])
    write_csv(out / "diagnostics.csv", traj.table,
              columns=traj.diagnostics_columns())
    pore_cfg = cfg.geometry.get("pore_cell")
    est = verify_estimates(traj, regime, forcing,
                           pore_cell=cfg.cell("pore_cell") if pore_cfg
                           else None) if traj.table else {}
    summary = {"meta": traj.meta, "estimates": est,
               "alpha": dict(zip(("alpha_tau", "alpha_mu", "alpha_q"),
                                 regime.coefficients())),
               "porosity": {"crack": chi_c.porosity(),
                            "pore": chi_p.porosity()}}
    write_json(out / "summary.json", summary)
    if "raw" in formats:
        write_mask_raw(out / "fluid_mask.raw", chi_c.mask | chi_p.mask)
    if "vtk" in formats:
        for k, st in enumerate(traj.states):
            write_vtk_structured_points(
                out / f"fields_{k:04d}.vtk",
                {"speed2": st.fld.speed_squared(),
                 "pressure": st.fld.pressure,
                 "crack": chi_c.mask.astype(float),
                 "pore": chi_p.mask.astype(float)},
                spacing=st.fld.spacing)


def _run_macro(cfg: RunConfig, out: Path, jobs: int, acoustic: bool):
    regime = cfg.build_regime()
    coeffs, payload = _coefficients(cfg, regime)
    forcing = cfg.build_forcing()
    bc = cfg.build_boundary()
    grid_n = cfg.solver.get("macro_grid", 64)
    t_end = cfg.solver.get("t_end", 1.0)
    dt = cfg.solver.get("dt", 0.1)
    samples = cfg.output.get("sample_times")
    if acoustic:
        traj = run_acoustics(coeffs, forcing, bc, grid_n, t_end, dt,
                             sample_times=samples,
                             incompressible=cfg.solver.get(
                                 "incompressible", False))
    else:
        traj = run_darcy(coeffs, forcing, bc, grid_n, t_end, dt,
                         sample_times=samples)
    cols = list(traj.table[0].keys()) if traj.table else []
    write_csv(out / "diagnostics.csv", traj.table, columns=cols)
    summary = {"coefficients": payload, "meta": traj.meta}
    if traj.table:
        summary["final"] = traj.table[-1]
    write_json(out / "summary.json", summary)
    _write_macro_fields(out, traj, cfg.output.get("formats", ["csv", "json"]))


def _run_poincare(cfg: RunConfig, out: Path, jobs: int):
    which = "pore_cell" if cfg.geometry.get("pore_cell") else "crack_cell"
    cell = build_cell(cfg.cell(which))
    const = poincare_constant(cell)
    row = {"cell": which, "constant": const, "lambda_min": 1.0 / const,
           "porosity": cell.porosity()}
    write_csv(out / "diagnostics.csv", [row],
              columns=["cell", "constant", "lambda_min", "porosity"])
    write_json(out / "summary.json", row)


def _run_converge(cfg: RunConfig, out: Path, jobs: int):
    crack = cfg.cell("crack_cell")
    pore = cfg.cell("pore_cell")
    forcing = cfg.build_forcing()
    bc = cfg.build_boundary()
    report = convergence_study(
        crack, pore, cfg.build_regime, cfg.eps_list(), forcing,
        t_end=cfg.solver.get("t_end", 1.0), dt=cfg.solver.get("dt", 0.1),
        sample_times=cfg.output.get("sample_times"),
        macro_grid=cfg.solver.get("macro_grid", 64), bc=bc, jobs=jobs)
    cols = ["epsilon", "delta", "micro_resolution", "velocity_error",
            "pressure_error", "pore_speed", "ratio_22", "ratio_23",
            "poincare_holds", "dns_steps"]
    write_csv(out / "diagnostics.csv", report.entries, columns=cols)
    write_json(out / "summary.json",
               {"entries": report.entries, "verdicts": report.verdicts,
                "meta": report.meta,
                "converging": report.verdicts.get("velocity_converging",
                                                  False)})


_HANDLERS = {
    "cell-tensor": _run_cell_tensor,
    "dns": _run_dns_cmd,
    "darcy": lambda cfg, out, jobs: _run_macro(cfg, out, jobs, False),
    "acoustics": lambda cfg, out, jobs: _run_macro(cfg, out, jobs, True),
    "poincare": _run_poincare,
    "converge": _run_converge,
}


def run(subcommand: str, config_path, out_dir=None, jobs: int = 1,
        quiet: bool = False) -> int:
    try:
        if subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        cfg = parse_config(config_path)
        # validate before any artifact is written
        out = Path(out_dir or cfg.output.get("directory", "poroscale_out"))
        out.mkdir(parents=True, exist_ok=True)
        dump_resolved(cfg, out / "config.resolved")
        _HANDLERS[subcommand](cfg, out, jobs)
    except PoroscaleError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_status
    if not quiet:
        print(f"{subcommand}: artifacts in {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="poroscale",
        description="Double-porosity homogenization toolkit")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)
    return run(args.subcommand, args.config, args.out, args.jobs, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
