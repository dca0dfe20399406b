"""Periodic unit-cell problems and the effective tensors they induce.

Two problem families:

* the steady Stokes filtration problem driven by a unit body force, whose
  axis solutions integrate to the effective permeability tensor, and
* the potential (Neumann) problem for the acoustic regime, whose gradients
  integrate to the tensors entering the two momentum matrices.

The Stokes saddle point is solved by an Uzawa-type outer conjugate-gradient
iteration on the pressure Schur complement with a prefactorized direct
inner solve for the viscous block; the outer residual is exactly the
discrete divergence, so the termination test is the divergence tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, GeometryError
from .geometry import IndicatorField
from .staggered import MacGrid, StaggeredField, scalar_laplacian

TENSOR_KINDS = ("filtration_B1", "acoustic_B2_crack", "acoustic_B2_pore",
                "acoustic_momentum_matrix")

DEFAULT_TOL = 1e-6
MAX_ITER = 10_000


@dataclass
class EffectiveTensor:
    """d x d symmetric tensor with solve provenance.

    ``asymmetry`` is the relative Frobenius asymmetry before the (B+B^T)/2
    symmetrization; ``momentum`` carries the associated momentum matrix for
    the acoustic kinds.
    """

    matrix: np.ndarray
    kind: str
    fingerprint: str = ""
    tolerance: float = DEFAULT_TOL
    asymmetry: float = 0.0
    momentum: np.ndarray | None = None
    blocked: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def is_symmetric(self, rtol=1e-12) -> bool:
        m = self.matrix
        scale = max(np.abs(m).max(), 1e-300)
        return bool(np.abs(m - m.T).max() <= rtol * scale)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def _symmetrize(mat: np.ndarray):
    sym = 0.5 * (mat + mat.T)
    denom = max(np.linalg.norm(mat), 1e-300)
    return sym, float(np.linalg.norm(mat - mat.T) / denom)


def solve_filtration_cell(cell: IndicatorField, mu1: float, axis: int,
                          tol: float = DEFAULT_TOL,
                          max_iter: int = MAX_ITER) -> StaggeredField:
    """Steady periodic Stokes flow driven by a unit force along one axis.

    Returns velocity and mean-zero pressure with divergence below ``tol``
    on every fluid cell.  Non-percolating fluid converges to a velocity
    below solver tolerance; the result is flagged ``blocked``.
    """
    if mu1 <= 0.0:
        raise GeometryError(f"viscosity mu1={mu1} must be positive")
    if tol <= 0.0:
        raise GeometryError("tolerance must be positive")
    grid = MacGrid(cell)
    if not 0 <= axis < grid.d:
        raise GeometryError(f"axis {axis} outside dimension {grid.d}")
    return _stokes_axis(grid, mu1, axis, tol, max_iter)


def _stokes_axis(grid: MacGrid, mu1: float, axis: int, tol: float,
                 max_iter: int, lu=None) -> StaggeredField:
    if all(act.all() for act in grid.face_active):
        raise GeometryError(
            "cell has no solid boundary; the steady filtration problem "
            "with a constant drive has no periodic solution")
    div = grid.divergence()
    if lu is None:
        lap = grid.vector_laplacian()
        lu = spla.splu((-mu1 * lap).tocsc())
    f = grid.face_force(axis)
    if grid.n_faces == 0:
        # every face solid-adjacent: the zero field solves the problem
        return grid.make_field(meta={"blocked": True, "iterations": 0,
                                     "div_residual": 0.0})

    def project(x):
        return x - x.mean()

    # CG on S p = -D A^{-1} f, S = D A^{-1} D^T; residual r = -D v
    p = np.zeros(grid.n_cells)
    v = lu.solve(f)
    r = project(-div @ v)
    z = r.copy()
    rs = r @ r
    it = 0
    res = np.abs(r).max() if r.size else 0.0
    while res > tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"Uzawa iteration cap {max_iter} reached (residual {res:.3e})",
                residual=res, iterations=it)
        sz = project(div @ lu.solve(div.T @ z))
        alpha = rs / (z @ sz)
        p += alpha * z
        r -= alpha * sz
        r = project(r)
        rs_new = r @ r
        z = r + (rs_new / rs) * z
        rs = rs_new
        res = np.abs(r).max()
        it += 1
    v = lu.solve(f + div.T @ p)
    p = project(p)
    blocked = bool(np.abs(v).max() <= 10.0 * tol)
    fld = grid.make_field(v_flat=v, p_flat=p)
    fld.meta.update(blocked=blocked, iterations=it,
                    div_residual=float(np.abs(div @ v).max()))
    return fld


def filtration_tensor(cell: IndicatorField, mu1: float,
                      tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER,
                      fingerprint: str = "") -> EffectiveTensor:
    """Effective permeability: column i integrates the axis-i velocity."""
    grid = MacGrid(cell)
    if all(act.all() for act in grid.face_active):
        raise GeometryError(
            "cell has no solid boundary; the steady filtration problem "
            "with a constant drive has no periodic solution")
    lu = spla.splu((-mu1 * grid.vector_laplacian()).tocsc())
    d = grid.d
    mat = np.zeros((d, d))
    iters, residuals, blocked = [], [], True
    for i in range(d):
        fld = _stokes_axis(grid, mu1, i, tol, max_iter, lu=lu)
        v_flat = grid.gather_faces(fld.velocity)
        mat[:, i] = grid.integrate_faces(v_flat)
        iters.append(fld.meta["iterations"])
        residuals.append(fld.meta["div_residual"])
        blocked = blocked and fld.meta["blocked"]
    sym, asym = _symmetrize(mat)
    return EffectiveTensor(sym, "filtration_B1", fingerprint=fingerprint,
                           tolerance=tol, asymmetry=asym, blocked=blocked,
                           diagnostics={"iterations": iters,
                                        "div_residuals": residuals,
                                        "porosity": cell.porosity()})


def solve_neumann_cell(cell: IndicatorField, axis: int, flux_scale: float = 1.0,
                       tol: float = DEFAULT_TOL) -> StaggeredField:
    """Mean-zero potential with Laplace interior and prescribed wall flux.

    The masked-Laplacian (finite-volume) form makes the zero-normal-flux
    condition ``(flux_scale e_axis - grad Pi) . n = 0`` natural: fluxes
    through solid-adjacent faces are simply absent.  Solved directly with
    one pinned cell, then shifted to the mean-zero gauge.
    """
    if tol <= 0.0:
        raise GeometryError("tolerance must be positive")
    grid = MacGrid(cell)
    if not 0 <= axis < grid.d:
        raise GeometryError(f"axis {axis} outside dimension {grid.d}")
    lap = scalar_laplacian(cell, dirichlet_solid=False)
    n_cells = lap.shape[0]
    # rhs: divergence of the face field flux_scale * e_axis restricted to
    # fluid-fluid faces (absent faces carry no flux)
    div = grid.divergence()
    e = grid.face_force(axis, flux_scale)
    # flux balance per cell: A Pi = -div(e restricted to open faces),
    # with A = D D^T the positive Neumann Laplacian
    rhs = -(div @ e)
    if np.abs(rhs).max() == 0.0:
        # no interface crossing the drive direction: the potential vanishes
        fld = grid.make_field()
        fld.meta.update(residual=0.0, flux_scale=flux_scale)
        return fld
    # pin one cell to remove the constant nullspace (rhs sums to zero)
    lap = lap.tolil()
    lap[0, :] = 0.0
    lap[:, 0] = 0.0
    lap[0, 0] = 1.0
    rhs = rhs.copy()
    rhs[0] = 0.0
    sol = spla.splu(lap.tocsc()).solve(rhs)
    sol -= sol.mean()
    lap_full = scalar_laplacian(cell, dirichlet_solid=False)
    full_rhs = -(div @ e)
    residual = float(np.abs(lap_full @ sol - full_rhs).max())
    denom = max(np.abs(full_rhs).max(), 1.0)
    if residual > tol * denom * 10 and residual > tol:
        raise ConvergenceError(
            f"Neumann cell solve residual {residual:.3e} above tolerance",
            residual=residual)
    grad = -(div.T @ sol)  # gradient of the potential on active faces
    fld = grid.make_field(v_flat=grad, p_flat=sol)
    fld.meta.update(residual=residual, flux_scale=flux_scale)
    return fld


def _potential_tensor(cell: IndicatorField, flux_scale: float, tol: float):
    grid = MacGrid(cell)
    d = grid.d
    mat = np.zeros((d, d))
    residuals = []
    for i in range(d):
        fld = solve_neumann_cell(cell, i, flux_scale, tol)
        grad_flat = grid.gather_faces(fld.velocity)
        mat[:, i] = grid.integrate_faces(grad_flat)
        residuals.append(fld.meta["residual"])
    return mat, residuals


def acoustic_tensor_crack(cell: IndicatorField, tol: float = DEFAULT_TOL,
                          fingerprint: str = "") -> EffectiveTensor:
    """Crack-cell acoustic tensor and the momentum matrix m_c I - B."""
    m_c = cell.porosity()
    if m_c == 0.0:
        raise GeometryError("empty fluid domain")
    mat, residuals = _potential_tensor(cell, 1.0, tol)
    sym, asym = _symmetrize(mat)
    momentum = m_c * np.eye(cell.dimension) - sym
    return EffectiveTensor(sym, "acoustic_B2_crack", fingerprint=fingerprint,
                           tolerance=tol, asymmetry=asym, momentum=momentum,
                           diagnostics={"residuals": residuals,
                                        "porosity": m_c})


def acoustic_tensor_pore(cell: IndicatorField, beta: float, m_c: float,
                         tol: float = DEFAULT_TOL,
                         fingerprint: str = "") -> EffectiveTensor:
    """Pore-cell acoustic tensor and the momentum matrix m_p beta_c I - B.

    ``beta`` is the postulated pore-crack interaction constant and
    ``beta_c = beta + 1 - m_c`` the resulting flux scale.
    """
    if beta <= 0.0:
        raise GeometryError(f"interaction constant beta={beta} must be positive")
    if not 0.0 <= m_c < 1.0:
        raise GeometryError(f"crack porosity m_c={m_c} outside [0, 1)")
    m_p = cell.porosity()
    if m_p == 0.0:
        raise GeometryError("empty fluid domain")
    beta_c = beta + 1.0 - m_c
    mat, residuals = _potential_tensor(cell, beta_c, tol)
    sym, asym = _symmetrize(mat)
    momentum = m_p * beta_c * np.eye(cell.dimension) - sym
    return EffectiveTensor(sym, "acoustic_B2_pore", fingerprint=fingerprint,
                           tolerance=tol, asymmetry=asym, momentum=momentum,
                           diagnostics={"residuals": residuals,
                                        "porosity": m_p, "beta_c": beta_c})
