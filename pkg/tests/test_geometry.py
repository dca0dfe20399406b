"""Unit-cell discretization, phase masks and scaling regimes."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poroscale import (CellSpec, ConfigError, GeometryError, IndicatorField,
                       ScalingRegime, build_cell, build_phase_masks,
                       composite_porosity, fluid_percolates,
                       minimal_macro_resolution, porosity)


def test_full_fluid_porosity_is_one():
    cell = build_cell(CellSpec(2, "full_fluid", resolution=16))
    assert porosity(cell) == 1.0


def test_centered_block_porosity():
    # s = 0.5 removes exactly a quarter of the voxels at even resolution
    cell = build_cell(CellSpec(2, "centered_block", s=0.5, resolution=32))
    assert porosity(cell) == 0.75
    cell3 = build_cell(CellSpec(3, "centered_block", s=0.5, resolution=8))
    assert porosity(cell3) == 1.0 - 0.125


def test_axis_channel_porosity_equals_width():
    for axis in (0, 1):
        cell = build_cell(CellSpec(2, "axis_channel", s=0.5, resolution=64,
                                   axis=axis))
        assert porosity(cell) == 0.5
        # the channel runs the full length of its axis
        fluid_rows = cell.mask.all(axis=axis)
        assert fluid_rows.sum() == 32


def test_centered_ball_porosity_approaches_formula():
    s = 0.6
    cell = build_cell(CellSpec(2, "centered_ball", s=s, resolution=256))
    exact = 1.0 - np.pi * (s / 2.0) ** 2
    assert abs(porosity(cell) - exact) < 2e-3


def test_custom_mask_round_trip():
    mask = ((1, 0, 1, 0, 1, 0, 1, 0),) * 8
    cell = build_cell(CellSpec(2, "custom_mask", resolution=8, mask=mask))
    assert cell.mask.tolist() == [[bool(v) for v in row] for row in mask]


def test_cell_spec_validation():
    with pytest.raises(ConfigError):
        CellSpec(2, "no_such_shape")
    with pytest.raises(ConfigError):
        CellSpec(2, "centered_block", s=1.5)
    with pytest.raises(ConfigError):
        CellSpec(2, "centered_block", s=0.5, resolution=12)
    with pytest.raises(ConfigError):
        CellSpec(4, "full_fluid")
    with pytest.raises(ConfigError):
        CellSpec(2, "axis_channel", s=0.5, axis=2)


def test_percolation_channel_vs_pocket():
    channel = build_cell(CellSpec(2, "axis_channel", s=0.25, resolution=16))
    assert fluid_percolates(channel)
    block = build_cell(CellSpec(2, "centered_block", s=0.5, resolution=16))
    assert fluid_percolates(block)
    mask = np.zeros((8, 8), dtype=bool)
    mask[2:6, 2:6] = True
    assert not fluid_percolates(IndicatorField(mask, (True, True)))


def test_composite_porosity_formula():
    assert composite_porosity(0.75, 0.4375) == 0.75 + 0.25 * 0.4375
    assert composite_porosity(1.0, 0.5) == 1.0


@given(m_c=st.floats(0.0, 1.0), m_p=st.floats(0.0, 1.0))
def test_composite_porosity_bounds(m_c, m_p):
    m = composite_porosity(m_c, m_p)
    assert max(m_c, 0.0) <= m <= 1.0
    assert m >= m_c
    assert m >= (1.0 - m_c) * m_p


def test_scaling_regime_constructors():
    filt = ScalingRegime.filtration(0.25, r=2.0, mu1=1.0, c_f=1.0)
    assert filt.kind == "filtration"
    assert filt.tau0 == 0.0
    assert filt.delta == 0.0625
    ac = ScalingRegime.acoustics(0.25, r=2.0, tau0=1.0, c_f=1.0, beta=1.0)
    assert ac.kind == "acoustics"
    assert ac.tau0 == 1.0


def test_scaling_regime_rejects_bad_parameters():
    with pytest.raises(ConfigError):
        ScalingRegime.filtration(0.0, r=2.0, mu1=1.0, c_f=1.0)
    with pytest.raises(ConfigError):
        ScalingRegime.filtration(0.25, r=0.5, mu1=1.0, c_f=1.0)
    with pytest.raises(ConfigError):
        ScalingRegime.filtration(0.25, r=2.0, mu1=1.0, c_f=-1.0)


def test_minimal_macro_resolution_nests_both_scales():
    crack = CellSpec(2, "centered_block", s=0.5, resolution=8)
    pore = CellSpec(2, "centered_block", s=0.75, resolution=8)
    regime = ScalingRegime.filtration(0.25, r=2.0, mu1=1.0, c_f=1.0)
    n = minimal_macro_resolution(regime, crack, pore)
    # one delta period must span a whole number of voxels >= pore resolution
    assert n * regime.delta >= pore.resolution
    assert (n * regime.delta) % 1 == 0
    assert (n * regime.epsilon) % 1 == 0


def test_phase_masks_partition_and_tile():
    crack = CellSpec(2, "centered_block", s=0.5, resolution=8)
    pore = CellSpec(2, "centered_block", s=0.75, resolution=8)
    regime = ScalingRegime.filtration(0.5, r=2.0, mu1=1.0, c_f=1.0)
    n = minimal_macro_resolution(regime, crack, pore)
    chi_c, chi_p = build_phase_masks(regime, crack, pore, n)
    assert chi_c.mask.shape == (n, n)
    # phases never overlap; pores only live in the solid matrix of the cracks
    assert not (chi_c.mask & chi_p.mask).any()
    assert porosity(chi_c) == 0.75
    assert porosity(chi_p) == pytest.approx(0.25 * 0.4375)
    # crack mask is exactly the scaled periodic tiling of the crack cell
    per = round(n * regime.epsilon)
    tile = chi_c.mask[:per, :per]
    assert np.array_equal(chi_c.mask, np.tile(tile, (n // per, n // per)))


def test_phase_masks_reject_misaligned_resolution():
    crack = CellSpec(2, "centered_block", s=0.5, resolution=8)
    pore = CellSpec(2, "centered_block", s=0.75, resolution=8)
    regime = ScalingRegime.filtration(0.5, r=2.0, mu1=1.0, c_f=1.0)
    n = minimal_macro_resolution(regime, crack, pore)
    with pytest.raises(GeometryError):
        build_phase_masks(regime, crack, pore, n // 2)


@settings(max_examples=20, deadline=None)
@given(s=st.floats(0.1, 0.9),
       shape=st.sampled_from(["centered_block", "centered_ball",
                              "axis_channel"]))
def test_porosity_always_in_unit_interval(s, shape):
    cell = build_cell(CellSpec(2, shape, s=s, resolution=16))
    assert 0.0 <= porosity(cell) <= 1.0
