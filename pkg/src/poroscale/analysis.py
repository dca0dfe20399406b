"""Verification layer: Poincare constants, a priori estimate tracking and
the fine-scale versus homogenized convergence study.

The study runs, per crack size eps: the microscale simulation on the
perforated domain, the matching homogenized model driven by tensors from
the unit-cell problems, and a cell-averaged comparison in relative
space-time L2.  The verdict is monotone error decrease along the eps list,
no rate is asserted.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConfigError, ConvergenceError, GeometryError
from .geometry import (CellSpec, IndicatorField, ScalingRegime, build_cell,
                       build_phase_masks, minimal_macro_resolution)
from .staggered import StaggeredField, scalar_laplacian
from .cell_problems import (filtration_tensor, acoustic_tensor_crack,
                            acoustic_tensor_pore)
from .dns import Forcing, run_dns
from .macro import (BoundaryCondition, HomogenizedCoefficients, run_acoustics,
                    run_darcy)

POINCARE_TOL = 1e-6
POINCARE_MAX_ITER = 1000


def poincare_constant(cell: IndicatorField, tol: float = POINCARE_TOL,
                      max_iter: int = POINCARE_MAX_ITER) -> float:
    """Smallest C with  int |u|^2 <= C int |grad u|^2  for fields vanishing
    on solid cells (zero extension), as 1/lambda_min of the masked
    Dirichlet Laplacian via inverse power iteration."""
    if cell.mask.all() and all(cell.periodic):
        raise GeometryError(
            "fluid region has no solid contact; the Poincare constant "
            "is unbounded")
    lap = scalar_laplacian(cell, dirichlet_solid=True, dirichlet_boundary=True)
    try:
        lu = spla.splu(lap.tocsc())
    except RuntimeError as exc:
        raise GeometryError(
            "fluid region has no solid contact; the Poincare constant "
            "is unbounded") from exc
    rng = np.random.default_rng(1234)
    x = rng.standard_normal(lap.shape[0])
    x /= np.linalg.norm(x)
    lam = math.inf
    for _ in range(max_iter):
        y = lu.solve(x)
        ny = np.linalg.norm(y)
        if not np.isfinite(ny) or ny == 0.0:
            raise GeometryError(
                "fluid region has no solid contact; the Poincare constant "
                "is unbounded")
        y /= ny
        lam_new = float(y @ (lap @ y))
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return 1.0 / lam_new
        lam, x = lam_new, y
    raise ConvergenceError(
        f"Poincare power iteration did not converge (last lambda {lam:.6e})",
        residual=lam, iterations=max_iter)


def _block_mean(arr: np.ndarray, b: int) -> np.ndarray:
    d = arr.ndim
    m = arr.shape[0] // b
    shape = []
    for _ in range(d):
        shape += [m, b]
    return arr.reshape(shape).mean(axis=tuple(range(1, 2 * d, 2)))


def cell_average(fld: StaggeredField, eps: float, phase: str = "all",
                 chi_c: IndicatorField | None = None,
                 chi_p: IndicatorField | None = None,
                 quantity: str = "velocity"):
    """Average the phase-masked micro field over each eps-cell.

    The divisor is the full cell volume (zero extension into solid), so
    pore and crack averages sum exactly to the total average.  Velocity
    returns one macro array per component, pressure a single array.
    """
    if phase not in ("all", "pore", "crack"):
        raise ConfigError(f"unknown phase {phase!r}")
    n = fld.pressure.shape[0]
    m = round(1.0 / eps)
    if m < 1 or abs(1.0 / m - eps) > 1e-12 or n % m:
        raise GeometryError(
            f"eps={eps} does not align with the micro resolution {n}")
    b = n // m
    if phase == "all":
        mask = None
    else:
        src = chi_p if phase == "pore" else chi_c
        if src is None:
            raise ConfigError(f"phase {phase!r} requires its indicator field")
        mask = src.mask.astype(float)
    if quantity == "pressure":
        arr = fld.pressure if mask is None else fld.pressure * mask
        return _block_mean(arr, b)
    if quantity != "velocity":
        raise ConfigError(f"unknown quantity {quantity!r}")
    out = []
    for comp in fld.center_velocity():
        arr = comp if mask is None else comp * mask
        out.append(_block_mean(arr, b))
    return out


def verify_estimates(traj, regime: ScalingRegime, forcing: Forcing,
                     pore_cell=None) -> dict:
    """Measured constants of the a priori energy estimates.

    Returns the ratios (cumulative estimate left sides) / (cumulative
    ||F||^2) plus a pointwise check of the pore-phase Poincare bound
    I_p <= C delta^2 int |grad v|^2.  ``pore_cell`` supplies the unit pore
    cell for the constant; without it the constant is measured on the
    domain-scale pore indicator (then already carrying the delta scaling).
    """
    if not traj.table:
        raise ConfigError("trajectory carries no diagnostics table")
    needed = ("cum_est22", "cum_est23", "cum_F2", "int_gradv2",
              "weighted_pore")
    for key in needed:
        if key not in traj.table[-1]:
            raise ConfigError(f"trajectory diagnostics lack {key!r}")
    final = traj.table[-1]
    f2 = final["cum_F2"]
    ratio22 = final["cum_est22"] / f2 if f2 > 0.0 else 0.0
    ratio23 = final["cum_est23"] / f2 if f2 > 0.0 else 0.0
    report = {"epsilon": regime.epsilon, "delta": regime.delta,
              "ratio_22": ratio22, "ratio_23": ratio23,
              "cum_F2": f2, "samples": len(traj.table)}

    a_mu = regime.coefficients()[1]
    has_pore = traj.chi_p.mask.any()
    if a_mu > 0.0 and has_pore:
        if pore_cell is not None:
            cell = build_cell(pore_cell) if isinstance(pore_cell, CellSpec) \
                else pore_cell
            c_val = poincare_constant(cell)
            scale = c_val * regime.delta**2
        else:
            c_val = poincare_constant(traj.chi_p)
            scale = c_val
        max_ratio = 0.0
        for row in traj.table:
            ip = row["weighted_pore"] * regime.delta**2 / a_mu
            bound = scale * row["int_gradv2"]
            if bound > 0.0:
                max_ratio = max(max_ratio, ip / bound)
            elif ip > 0.0:
                max_ratio = math.inf
        report["poincare"] = {"constant": c_val, "max_ratio": max_ratio,
                              "holds": max_ratio <= 1.0}
    else:
        report["poincare"] = {"constant": None, "max_ratio": 0.0,
                              "holds": True}
    return report


@dataclass
class ConvergenceReport:
    """Per-eps comparison rows plus monotonicity verdicts.

    Entries are sorted by decreasing eps; each holds the relative
    space-time L2 errors of the cell-averaged micro fields against the
    homogenized ones and the measured estimate constants.
    """

    entries: list
    verdicts: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        eps = [e["epsilon"] for e in self.entries]
        if eps != sorted(eps, reverse=True):
            raise ConfigError("report entries must be sorted by decreasing eps")
        for e in self.entries:
            for key in ("velocity_error", "pressure_error"):
                if e.get(key, 0.0) < 0.0:
                    raise ConfigError("errors must be non-negative")


def _faces_to_centers(state, d):
    out = []
    for a in range(d):
        v = state.v_c[a] + state.v_p[a]
        lo = tuple(slice(None, -1) if b == a else slice(None) for b in range(d))
        hi = tuple(slice(1, None) if b == a else slice(None) for b in range(d))
        out.append(0.5 * (v[lo] + v[hi]))
    return out


def _run_single_eps(eps, crack_cell, pore_cell, regime_for, forcing, t_end,
                    dt, sample_times, macro_grid, bc, tensors):
    regime = regime_for(eps)
    if regime.epsilon != eps:
        regime = replace(regime, epsilon=eps)
    n_micro = minimal_macro_resolution(regime, crack_cell, pore_cell)
    chi_c, chi_p = build_phase_masks(regime, crack_cell, pore_cell, n_micro)
    samples = sample_times or [t_end]
    traj = run_dns((chi_c, chi_p), regime, forcing, t_end, dt,
                   sample_times=samples)
    est = verify_estimates(traj, regime, forcing, pore_cell=pore_cell)

    d = crack_cell.dimension
    m_c = build_cell(crack_cell).porosity()
    m_p = build_cell(pore_cell).porosity()
    m_eff = m_c + (1.0 - m_c) * m_p  # composite crack-pore porosity
    if regime.kind == "filtration":
        coeffs = HomogenizedCoefficients(
            d, m=m_eff, c_f=regime.c_f, permeability=tensors["B1"].matrix)
        macro = run_darcy(coeffs, forcing, bc, macro_grid, t_end, dt,
                          sample_times=samples)
    else:
        coeffs = HomogenizedCoefficients(
            d, m=m_eff, c_f=regime.c_f, tau0=regime.tau0,
            momentum_crack=tensors["Mc"].momentum,
            momentum_pore=tensors["Mp"].momentum,
            m_c=m_c, m_p=m_p, beta=regime.beta)
        macro = run_acoustics(coeffs, forcing, bc, macro_grid, t_end, dt,
                              sample_times=samples)

    m_blocks = round(1.0 / eps)
    restrict = macro_grid // m_blocks
    num_v = den_v = num_q = den_q = 0.0
    micro_states = traj.states[1:]
    macro_states = macro.states[1:]
    n_pairs = min(len(micro_states), len(macro_states))
    for micro, hom in zip(micro_states[:n_pairs], macro_states[:n_pairs]):
        avg_v = cell_average(micro.fld, eps, "all", chi_c, chi_p, "velocity")
        avg_q = cell_average(micro.fld, eps, "all", chi_c, chi_p, "pressure")
        hom_v = [_block_mean(c, restrict)
                 for c in _faces_to_centers(hom, d)]
        # the fine-scale pressure (zero-extended) averages to the macro
        # pressure itself: its three-scale limit is q chi / m
        hom_q = _block_mean(hom.pressure, restrict)
        for a in range(d):
            diff = avg_v[a] - hom_v[a]
            num_v += float((diff * diff).sum())
            den_v += float((hom_v[a] * hom_v[a]).sum())
        diff_q = avg_q - hom_q
        num_q += float((diff_q * diff_q).sum())
        den_q += float((hom_q * hom_q).sum())
    vel_err = math.sqrt(num_v / den_v) if den_v > 0.0 else math.sqrt(num_v)
    prs_err = math.sqrt(num_q / den_q) if den_q > 0.0 else math.sqrt(num_q)

    last = traj.table[-1]
    a_mu = regime.coefficients()[1]
    pore_vol = last["pore_volume"]
    if a_mu > 0.0 and pore_vol > 0.0:
        pore_v2 = last["weighted_pore"] * regime.delta**2 / a_mu
        pore_speed = math.sqrt(pore_v2 / pore_vol)
    else:
        pore_speed = 0.0
    return {"epsilon": eps, "delta": regime.delta,
            "micro_resolution": n_micro,
            "velocity_error": vel_err, "pressure_error": prs_err,
            "pore_speed": pore_speed,
            "ratio_22": est["ratio_22"], "ratio_23": est["ratio_23"],
            "poincare_holds": est["poincare"]["holds"],
            "dns_steps": traj.meta.get("n_steps", 0)}


def convergence_study(crack_cell: CellSpec, pore_cell: CellSpec, regime_for,
                      eps_list, forcing: Forcing, t_end: float, dt: float,
                      sample_times=None, macro_grid: int = 64,
                      bc: BoundaryCondition | None = None,
                      jobs: int = 1) -> ConvergenceReport:
    """Fine-scale versus homogenized comparison across decreasing eps.

    ``regime_for`` maps eps to the scaling regime of that run.  The
    homogenized model runs once per eps on the fixed ``macro_grid`` and is
    block-restricted to the eps-cell grid for the comparison, so its own
    discretization does not drift with eps.
    """
    eps_list = list(eps_list)
    if len(eps_list) < 1 or any(e2 >= e1 for e1, e2 in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps list must be strictly decreasing")
    if crack_cell.dimension != 2:
        raise ConfigError("the convergence study runs in d = 2")
    for e in eps_list:
        if macro_grid % round(1.0 / e):
            raise ConfigError(
                f"macro grid {macro_grid} does not restrict to eps={e}")
    if bc is None:
        bc = BoundaryCondition.zero_flux()

    tensors = {}
    probe = regime_for(eps_list[0])
    crack = build_cell(crack_cell)
    if probe.kind == "filtration":
        tensors["B1"] = filtration_tensor(crack, probe.mu1)
    else:
        m_c = crack.porosity()
        beta = probe.beta if probe.beta is not None else 1.0
        tensors["Mc"] = acoustic_tensor_crack(crack)
        tensors["Mp"] = acoustic_tensor_pore(build_cell(pore_cell), beta, m_c)

    def work(eps):
        return _run_single_eps(eps, crack_cell, pore_cell, regime_for,
                               forcing, t_end, dt, sample_times, macro_grid,
                               bc, tensors)

    entries = []
    failure = None
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(work, e) for e in eps_list]
            for fut in futures:
                try:
                    entries.append(fut.result())
                except Exception as exc:  # partial report on sub-run failure
                    failure = exc
                    break
    else:
        for e in eps_list:
            try:
                entries.append(work(e))
            except Exception as exc:
                failure = exc
                break
    entries.sort(key=lambda r: -r["epsilon"])

    def strictly_decreasing(key):
        vals = [r[key] for r in entries]
        return len(vals) >= 2 and all(b < a for a, b in zip(vals, vals[1:]))

    verdicts = {
        "velocity_converging": strictly_decreasing("velocity_error"),
        "pressure_converging": strictly_decreasing("pressure_error"),
        "pore_speed_decreasing": strictly_decreasing("pore_speed"),
    }
    ratios = [r["ratio_22"] for r in entries if r["ratio_22"] > 0.0]
    verdicts["estimate_ratio_stable"] = (
        bool(ratios) and max(ratios) <= 2.0 * min(ratios))
    meta = {"eps_list": eps_list, "macro_grid": macro_grid,
            "t_end": t_end, "dt": dt,
            "regime_kind": probe.kind,
            "complete": failure is None}
    if failure is not None:
        meta["failure"] = f"{type(failure).__name__}: {failure}"
    report = ConvergenceReport(entries, verdicts, meta)
    if failure is not None and not entries:
        raise failure
    return report
