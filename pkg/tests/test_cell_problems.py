"""Periodic cell problems and their effective tensors."""

import numpy as np
import pytest

from poroscale import (CellSpec, GeometryError, acoustic_tensor_crack,
                       acoustic_tensor_pore, build_cell, filtration_tensor,
                       solve_neumann_cell)

# permeability of the centered-block cell (s = 0.5) at increasing grids,
# frozen from converged runs of this solver; the sequence decreases toward
# the grid limit, so it doubles as a monotone-refinement oracle
BLOCK_PERMEABILITY = {8: 0.014615, 16: 0.013513, 32: 0.013185}


def test_channel_permeability_converges_to_poiseuille():
    # plane Poiseuille between no-slip walls a distance s apart: s^3/12
    exact = 0.5**3 / 12.0
    errors = []
    for n in (16, 32, 64):
        cell = build_cell(CellSpec(2, "axis_channel", s=0.5, resolution=n))
        tensor = filtration_tensor(cell, mu1=1.0)
        errors.append(abs(tensor.matrix[0, 0] - exact))
        # cross-channel flow is blocked by the walls
        assert abs(tensor.matrix[1, 1]) <= 10.0 * tensor.tolerance
        assert abs(tensor.matrix[0, 1]) <= 10.0 * tensor.tolerance
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] <= 0.01 * exact


def test_block_permeability_matches_frozen_values():
    for n, value in BLOCK_PERMEABILITY.items():
        cell = build_cell(CellSpec(2, "centered_block", s=0.5, resolution=n))
        tensor = filtration_tensor(cell, mu1=1.0)
        assert tensor.matrix[0, 0] == pytest.approx(value, abs=1e-6)


def test_block_cell_tensor_is_isotropic():
    cell = build_cell(CellSpec(2, "centered_block", s=0.5, resolution=16))
    tensor = filtration_tensor(cell, mu1=1.0)
    mat = tensor.matrix
    assert mat[0, 0] == pytest.approx(mat[1, 1], rel=1e-9)
    assert abs(mat[0, 1]) <= 1e-9 * mat[0, 0]


def test_permeability_scales_inversely_with_viscosity():
    cell = build_cell(CellSpec(2, "centered_block", s=0.5, resolution=16))
    one = filtration_tensor(cell, mu1=1.0)
    four = filtration_tensor(cell, mu1=4.0)
    assert np.allclose(four.matrix, one.matrix / 4.0, rtol=1e-8)


def test_full_fluid_cell_rejected_for_filtration():
    cell = build_cell(CellSpec(2, "full_fluid", resolution=8))
    with pytest.raises(GeometryError):
        filtration_tensor(cell, mu1=1.0)


def test_blocked_cell_flagged():
    mask = np.zeros((8, 8), dtype=bool)
    mask[2:6, 2:6] = True
    from poroscale import IndicatorField
    tensor = filtration_tensor(IndicatorField(mask, (True, True)), mu1=1.0)
    assert tensor.blocked
    assert np.abs(tensor.matrix).max() <= 10.0 * tensor.tolerance


def test_neumann_potential_is_mean_zero_and_periodic():
    cell = build_cell(CellSpec(2, "centered_block", s=0.5, resolution=16))
    fld = solve_neumann_cell(cell, axis=0)
    p = fld.pressure[cell.mask]
    assert abs(p.mean()) <= 1e-10 * max(np.abs(p).max(), 1.0)


def test_acoustic_momentum_matrices_shrink_fluid_inertia():
    cell = build_cell(CellSpec(2, "centered_block", s=0.5, resolution=16))
    crack = acoustic_tensor_crack(cell)
    m_c = cell.porosity()
    # B2 is positive for an obstructed cell, so M_c < m_c I in the Loewner
    # order but stays positive semidefinite
    eigs = np.linalg.eigvalsh(crack.momentum)
    assert (eigs >= -1e-12).all()
    assert eigs.max() < m_c
    assert np.allclose(crack.momentum, m_c * np.eye(2) - crack.matrix)


def test_acoustic_pore_momentum_uses_beta_c():
    cell = build_cell(CellSpec(2, "centered_block", s=0.75, resolution=16))
    beta, m_c = 1.0, 0.75
    pore = acoustic_tensor_pore(cell, beta=beta, m_c=m_c)
    beta_c = beta + 1.0 - m_c
    m_p = cell.porosity()
    assert np.allclose(pore.momentum,
                       m_p * beta_c * np.eye(2) - pore.matrix)


def test_acoustic_pore_rejects_bad_parameters():
    cell = build_cell(CellSpec(2, "centered_block", s=0.5, resolution=8))
    with pytest.raises(GeometryError):
        acoustic_tensor_pore(cell, beta=0.0, m_c=0.5)
    with pytest.raises(GeometryError):
        acoustic_tensor_pore(cell, beta=1.0, m_c=1.0)


def test_tensors_symmetric_after_symmetrization_report():
    for spec in (CellSpec(2, "centered_ball", s=0.5, resolution=16),
                 CellSpec(2, "axis_channel", s=0.25, resolution=16)):
        cell = build_cell(spec)
        for tensor in (filtration_tensor(cell, mu1=1.0),
                       acoustic_tensor_crack(cell)):
            assert np.array_equal(tensor.matrix, tensor.matrix.T)
            assert tensor.asymmetry <= 1e-6
