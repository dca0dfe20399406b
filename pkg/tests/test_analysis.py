"""Poincare constants, cell averages, estimate checks and the study."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poroscale import (CellSpec, ConfigError, ConvergenceReport, Forcing,
                       GeometryError, IndicatorField, ScalingRegime,
                       build_cell, build_phase_masks, cell_average,
                       convergence_study, minimal_macro_resolution,
                       poincare_constant, run_dns, verify_estimates)

# frozen values of the periodic-strip constant at increasing grids; the
# sequence decreases toward the interval eigenvalue s^2/pi^2 = 0.0253303
STRIP_CONSTANT = {64: 0.026959, 128: 0.026133}


def test_strip_constant_matches_frozen_values():
    for n, value in STRIP_CONSTANT.items():
        cell = build_cell(CellSpec(2, "axis_channel", s=0.5, resolution=n))
        assert poincare_constant(cell) == pytest.approx(value, abs=1e-6)


def test_poincare_monotone_under_inclusion():
    wide = build_cell(CellSpec(2, "axis_channel", s=0.5, resolution=64))
    narrow = build_cell(CellSpec(2, "axis_channel", s=0.25, resolution=64))
    assert poincare_constant(narrow) < poincare_constant(wide)
    # shrinking the fluid region never increases the constant
    smaller = IndicatorField(wide.mask & narrow.mask, wide.periodic)
    assert poincare_constant(smaller) <= poincare_constant(wide)


def test_poincare_quarter_width_scaling():
    # halving the strip width divides the constant by about four
    wide = poincare_constant(
        build_cell(CellSpec(2, "axis_channel", s=0.5, resolution=128)))
    narrow = poincare_constant(
        build_cell(CellSpec(2, "axis_channel", s=0.25, resolution=128)))
    assert wide / narrow == pytest.approx(4.0, rel=0.1)


def test_poincare_unbounded_without_solid():
    full = build_cell(CellSpec(2, "full_fluid", resolution=16))
    with pytest.raises(GeometryError):
        poincare_constant(full)


def _sample_trajectory():
    crack = CellSpec(2, "centered_block", s=0.5, resolution=8)
    pore = CellSpec(2, "centered_block", s=0.75, resolution=8)
    regime = ScalingRegime.filtration(0.5, r=2.0, mu1=1.0, c_f=1.0)
    n = minimal_macro_resolution(regime, crack, pore)
    chi_c, chi_p = build_phase_masks(regime, crack, pore, n)
    traj = run_dns((chi_c, chi_p), regime, Forcing(amplitude=(1.0, 0.0)),
                   t_end=0.5, dt=0.1, sample_times=[0.5])
    return traj, regime, pore


def test_cell_average_partitions_by_phase():
    traj, regime, _ = _sample_trajectory()
    fld = traj.states[-1].fld
    kw = dict(chi_c=traj.chi_c, chi_p=traj.chi_p)
    for quantity in ("velocity", "pressure"):
        total = cell_average(fld, regime.epsilon, "all", quantity=quantity)
        crack = cell_average(fld, regime.epsilon, "crack", quantity=quantity,
                             **kw)
        pore = cell_average(fld, regime.epsilon, "pore", quantity=quantity,
                            **kw)
        if quantity == "pressure":
            total, crack, pore = [total], [crack], [pore]
        for t, c, p in zip(total, crack, pore):
            assert np.allclose(t, c + p, rtol=0.0, atol=1e-15)
            assert t.shape == (2, 2)


@settings(max_examples=10, deadline=None)
@given(scale=st.floats(-3.0, 3.0, allow_nan=False))
def test_cell_average_is_linear(scale):
    traj, regime, _ = _sample_trajectory()
    fld = traj.states[-1].fld
    base = cell_average(fld, regime.epsilon, "all")
    fld.pressure *= scale
    for v in fld.velocity:
        v *= scale
    scaled = cell_average(fld, regime.epsilon, "all")
    for b, s in zip(base, scaled):
        assert np.allclose(s, scale * b, rtol=1e-12, atol=1e-300)


def test_cell_average_rejects_misaligned_eps():
    traj, _, _ = _sample_trajectory()
    with pytest.raises(GeometryError):
        cell_average(traj.states[-1].fld, 0.3)


def test_verify_estimates_reports_bound():
    traj, regime, pore = _sample_trajectory()
    report = verify_estimates(traj, regime, traj.forcing, pore_cell=pore)
    assert report["ratio_22"] > 0.0
    assert report["ratio_23"] > 0.0
    assert report["poincare"]["holds"]
    assert 0.0 < report["poincare"]["max_ratio"] <= 1.0


def test_convergence_report_rejects_bad_entries():
    with pytest.raises(ConfigError):
        ConvergenceReport([{"epsilon": 0.25}, {"epsilon": 0.5}])
    with pytest.raises(ConfigError):
        ConvergenceReport([{"epsilon": 0.5, "velocity_error": -1.0}])


def test_convergence_study_two_eps_smoke():
    crack = CellSpec(2, "centered_block", s=0.5, resolution=8)
    pore = CellSpec(2, "centered_block", s=0.75, resolution=8)

    def regime_for(eps):
        return ScalingRegime.filtration(eps, r=2.0, mu1=1.0, c_f=1.0)

    report = convergence_study(crack, pore, regime_for, [0.5, 0.25],
                               Forcing(amplitude=(1.0, 0.0)),
                               t_end=0.5, dt=0.1, sample_times=[0.5],
                               macro_grid=16)
    assert [row["epsilon"] for row in report.entries] == [0.5, 0.25]
    assert report.meta["complete"]
    for row in report.entries:
        assert row["velocity_error"] >= 0.0
        assert row["pore_speed"] >= 0.0
    for key in ("velocity_converging", "pressure_converging",
                "pore_speed_decreasing", "estimate_ratio_stable"):
        assert key in report.verdicts


def test_convergence_study_parallel_matches_serial():
    crack = CellSpec(2, "centered_block", s=0.5, resolution=8)
    pore = CellSpec(2, "centered_block", s=0.75, resolution=8)

    def regime_for(eps):
        return ScalingRegime.filtration(eps, r=2.0, mu1=1.0, c_f=1.0)

    kw = dict(forcing=Forcing(amplitude=(1.0, 0.0)), t_end=0.3, dt=0.1,
              sample_times=[0.3], macro_grid=16)
    serial = convergence_study(crack, pore, regime_for, [0.5, 0.25], **kw)
    parallel = convergence_study(crack, pore, regime_for, [0.5, 0.25],
                                 jobs=2, **kw)
    for a, b in zip(serial.entries, parallel.entries):
        assert a == b


def test_convergence_study_rejects_misaligned_macro_grid():
    crack = CellSpec(2, "centered_block", s=0.5, resolution=8)
    pore = CellSpec(2, "centered_block", s=0.75, resolution=8)

    def regime_for(eps):
        return ScalingRegime.filtration(eps, r=2.0, mu1=1.0, c_f=1.0)

    with pytest.raises((ConfigError, GeometryError)):
        convergence_study(crack, pore, regime_for, [0.5],
                          Forcing(amplitude=(1.0, 0.0)), t_end=0.2, dt=0.1,
                          macro_grid=17)
