"""End-to-end acceptance suite.

Each test prints one PASS line with the measured quantity so a plain
``pytest -s`` run doubles as an acceptance report.  The convergence study
shared by several tests runs once per session.
"""

import filecmp
import time

import numpy as np
import pytest

from poroscale import (BoundaryCondition, CellSpec, Forcing,
                       HomogenizedCoefficients, IndicatorField, ScalingRegime,
                       acoustic_cfl_limit, acoustic_tensor_crack,
                       acoustic_tensor_pore, build_cell, build_phase_masks,
                       convergence_study, minimal_macro_resolution,
                       filtration_tensor, fluid_percolates, poincare_constant,
                       run_acoustics, run_darcy, run_dns)
from poroscale.cli import run as cli_run


def _report(label, detail):
    print(f"PASS {label}: {detail}")


@pytest.fixture(scope="session")
def study():
    """Filtration convergence study over eps in {1/2, 1/4, 1/8}."""
    crack = CellSpec(2, "centered_block", s=0.5, resolution=8)
    pore = CellSpec(2, "centered_block", s=0.75, resolution=8)

    def regime_for(eps):
        return ScalingRegime.filtration(eps, r=2.0, mu1=1.0, c_f=1.0)

    start = time.monotonic()
    report = convergence_study(
        crack, pore, regime_for, [0.5, 0.25, 0.125],
        Forcing(amplitude=(1.0, 0.0)), t_end=4.0, dt=0.1,
        sample_times=[1.0, 2.0, 3.0, 4.0], macro_grid=64)
    report.meta["wall_seconds"] = time.monotonic() - start
    return report


def test_channel_permeability_matches_poiseuille():
    cell = build_cell(CellSpec(2, "axis_channel", s=0.5, resolution=128))
    start = time.monotonic()
    tensor = filtration_tensor(cell, mu1=1.0)
    elapsed = time.monotonic() - start
    exact = 0.5**3 / 12.0
    b_xx = tensor.matrix[0, 0]
    assert abs(b_xx - exact) <= 0.05 * exact
    assert elapsed < 60.0
    _report("channel permeability",
            f"B_xx={b_xx:.7f} vs s^3/12={exact:.7f} "
            f"({abs(b_xx - exact) / exact:.2%} off) in {elapsed:.1f}s")


def test_disconnected_cracks_are_blocked():
    mask = np.zeros((8, 8), dtype=bool)
    mask[2:6, 2:6] = True
    pocket = IndicatorField(mask, (True, True))
    assert not fluid_percolates(pocket)
    tensor = filtration_tensor(pocket, mu1=1.0)
    norm = np.abs(tensor.matrix).max()
    assert norm <= 10.0 * tensor.tolerance
    coeffs = HomogenizedCoefficients(
        dimension=2, m=pocket.porosity(), c_f=1.0,
        permeability=tensor.matrix, mu1=1.0)
    traj = run_darcy(coeffs, Forcing(amplitude=(1.0, 0.0)),
                     BoundaryCondition.zero_flux(), 16,
                     t_end=0.5, dt=0.1, sample_times=[0.5])
    v_max = max(np.abs(v).max() for v in traj.states[-1].v_c)
    assert v_max <= 10.0 * tensor.tolerance
    _report("disconnected cracks blocked",
            f"|B|={norm:.2e}, max|v_c|={v_max:.2e}")


def test_pore_speed_decreases_under_filtration(study):
    speeds = [row["pore_speed"] for row in study.entries]
    assert study.verdicts["pore_speed_decreasing"], speeds
    assert study.meta["wall_seconds"] < 1800.0
    _report("blocked pores",
            "pore speeds " + " > ".join(f"{s:.2e}" for s in speeds)
            + f" in {study.meta['wall_seconds']:.0f}s")


def test_crack_velocity_error_decreases(study):
    errors = [row["velocity_error"] for row in study.entries]
    assert study.verdicts["velocity_converging"], errors
    _report("homogenization convergence",
            "velocity errors " + " > ".join(f"{e:.3f}" for e in errors))


def test_effective_tensors_are_symmetric_positive():
    rng = np.random.default_rng(7)
    specs = [CellSpec(2, "centered_block", s=0.5, resolution=16),
             CellSpec(2, "centered_block", s=0.75, resolution=16),
             CellSpec(2, "centered_ball", s=0.6, resolution=16),
             CellSpec(2, "axis_channel", s=0.5, resolution=16),
             CellSpec(3, "centered_block", s=0.5, resolution=8)]
    for spec in specs:
        cell = build_cell(spec)
        d = spec.dimension
        vectors = rng.standard_normal((100, d))
        tensors = [filtration_tensor(cell, mu1=1.0),
                   acoustic_tensor_crack(cell),
                   acoustic_tensor_pore(cell, beta=1.0, m_c=0.5)]
        for tensor in tensors:
            assert tensor.asymmetry <= 1e-6
            mat = tensor.matrix
            assert np.abs(mat - mat.T).max() == 0.0
            quad = np.einsum("ni,ij,nj->n", vectors, mat, vectors)
            assert (quad >= -1e-12 * max(np.abs(mat).max(), 1.0)).all()
            if tensor.momentum is not None:
                quad_m = np.einsum("ni,ij,nj->n", vectors, tensor.momentum,
                                   vectors)
                assert (quad_m >= -1e-12).all()
    _report("tensor structure",
            f"{len(specs)} geometries x 3 tensors, 100 random vectors each")


def test_full_fluid_acoustic_limit_is_trivial():
    cell = build_cell(CellSpec(2, "full_fluid", resolution=8))
    crack = acoustic_tensor_crack(cell)
    pore = acoustic_tensor_pore(cell, beta=1.0, m_c=0.5)
    assert np.abs(crack.matrix).max() == 0.0
    assert np.abs(pore.matrix).max() == 0.0
    # beta_c = beta + 1 - m_c = 1.5, so M_p = 1.5 I exactly
    assert np.array_equal(crack.momentum, np.eye(2))
    assert np.array_equal(pore.momentum, 1.5 * np.eye(2))

    coeffs = HomogenizedCoefficients(
        dimension=2, m=1.0, c_f=1.0, momentum_crack=crack.momentum,
        momentum_pore=pore.momentum, m_c=1.0, m_p=1.0, tau0=1.0, beta=1.0)
    t_end, dt = 0.1, 0.005
    traj = run_acoustics(coeffs, Forcing(amplitude=(1.0, 0.0)),
                         BoundaryCondition.pressure(2, 0.0), 16,
                         t_end=t_end, dt=dt, sample_times=[t_end])
    state = traj.states[-1]
    # velocities live at half steps: the sampled value sits at t_end + dt/2
    t_half = t_end + dt / 2.0
    assert np.abs(state.pressure).max() == 0.0
    assert np.abs(state.v_c[0] - t_half * 1.0).max() <= 1e-14
    assert np.abs(state.v_p[0] - t_half * 1.5).max() <= 1e-14
    assert np.abs(state.v_c[1]).max() == 0.0
    _report("trivial acoustic limit",
            "B2 = 0 exactly, v = (t/tau0) m_phase F to machine precision")


def test_dns_energy_identity_residual():
    regime = ScalingRegime.filtration(0.5, r=2.0, mu1=1.0, c_f=1.0)
    crack = CellSpec(2, "centered_block", s=0.5, resolution=8)
    pore = CellSpec(2, "centered_block", s=0.75, resolution=8)
    n = minimal_macro_resolution(regime, crack, pore)
    chi_c, chi_p = build_phase_masks(regime, crack, pore, n)
    traj = run_dns((chi_c, chi_p), regime, Forcing(amplitude=(1.0, 0.5)),
                   t_end=0.5, dt=0.05, sample_times=[0.5])
    residuals = [row["energy_residual"] for row in traj.table]
    worst = max(residuals)
    assert worst <= 1e-10
    _report("discrete energy identity", f"max residual {worst:.2e}")


def test_estimate_ratio_stable_across_eps(study):
    ratios = [row["ratio_22"] for row in study.entries]
    assert study.verdicts["estimate_ratio_stable"], ratios
    assert max(ratios) <= 2.0 * min(ratios)
    _report("a priori estimate stability",
            "ratios " + ", ".join(f"{r:.4f}" for r in ratios)
            + f" (spread x{max(ratios) / min(ratios):.2f})")


def test_acoustic_wave_speed_and_energy_decay():
    n = 256
    coeffs = HomogenizedCoefficients(
        dimension=1, m=1.0, c_f=1.0, momentum_crack=np.array([[0.5]]),
        momentum_pore=np.array([[0.5]]), tau0=1.0)
    assert acoustic_cfl_limit(coeffs, n) == pytest.approx(1.0 / n)
    x = (np.arange(n) + 0.5) / n
    pulse = np.exp(-((x - 0.3) / 0.03) ** 2)
    traj = run_acoustics(coeffs, Forcing(amplitude=(0.0,)),
                         BoundaryCondition.zero_flux(), n,
                         t_end=0.3, dt=0.5 / n, sample_times=[0.3],
                         initial_pressure=pulse)
    state = traj.states[-1]
    q = state.pressure.reshape(n)
    right = np.where(x > 0.45, q, 0.0)
    speed = (x[np.argmax(right)] - 0.3) / state.t
    assert abs(speed - 1.0) <= 0.02
    energies = [row["energy"] for row in traj.table]
    drift = max(b - a for a, b in zip(energies, energies[1:]))
    assert drift <= 1e-12 * energies[0]
    _report("acoustic wave speed",
            f"speed {speed:.4f} (target 1.0), max energy gain {drift:.2e}")


def test_poincare_strip_and_runtime_bound(study):
    cell = build_cell(CellSpec(2, "axis_channel", s=0.5, resolution=256))
    const = poincare_constant(cell)
    exact = 0.5**2 / np.pi**2
    assert abs(const - exact) <= 0.05 * exact
    holds = [bool(row["poincare_holds"]) for row in study.entries]
    assert all(holds)
    _report("Poincare scaling",
            f"strip C={const:.6f} vs s^2/pi^2={exact:.6f} "
            f"({abs(const - exact) / exact:.2%} off); "
            f"runtime bound held at all {len(holds)} eps values")


def test_cli_outputs_are_deterministic(tmp_path):
    config = tmp_path / "run.yaml"
    config.write_text(
        "geometry:\n"
        "  dimension: 2\n"
        "  crack_cell: {shape: centered_block, s: 0.5, resolution: 16}\n"
        "  epsilon: 0.25\n"
        "  r: 2.0\n"
        "regime: {kind: filtration, tau0: 0.0, mu1: 1.0, c_f: 1.0}\n"
        "solver: {dt: 0.1, t_end: 0.5, macro_grid: 16}\n"
        "forcing: {amplitude: [1.0, 0.0]}\n"
        "boundary: {x_lo: 1.0, x_hi: 0.0}\n"
        "output: {formats: [csv, json]}\n")
    for out in ("a", "b"):
        status = cli_run("darcy", str(config), str(tmp_path / out),
                         jobs=1, quiet=True)
        assert status == 0
    for name in ("diagnostics.csv", "summary.json"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name,
                           shallow=False), name
    _report("determinism", "two darcy runs byte-identical (CSV and JSON)")
