"""Staggered (MAC) grid fields and masked discrete operators.

Velocity components live on cell faces, pressure at cell centers.  A face
is an unknown only when both adjacent cells are fluid; every other face is
pinned to zero, which enforces no-slip on solid-adjacent faces and the
homogeneous Dirichlet condition on the outer boundary of non-periodic
domains.

The divergence matrix D and the pressure gradient G = -D^T are exact
adjoints of each other, and the masked vector Laplacian is symmetric, so
the discrete energy identities of the solvers hold to linear-solver
accuracy by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError
from .geometry import IndicatorField


@dataclass
class StaggeredField:
    """Face velocities plus cell-centered pressure on one grid.

    ``velocity[a]`` has the cell shape except along axis ``a``, where it has
    one extra entry on non-periodic axes (boundary faces included, pinned to
    zero).  Inactive faces are stored as zeros.
    """

    velocity: list
    pressure: np.ndarray
    spacing: float
    periodic: tuple
    meta: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.pressure.ndim

    def center_velocity(self) -> list:
        """Velocity components averaged to cell centers."""
        out = []
        for a, v in enumerate(self.velocity):
            if self.periodic[a]:
                out.append(0.5 * (v + np.roll(v, -1, axis=a)))
            else:
                lo = tuple(slice(None, -1) if b == a else slice(None)
                           for b in range(v.ndim))
                hi = tuple(slice(1, None) if b == a else slice(None)
                           for b in range(v.ndim))
                out.append(0.5 * (v[lo] + v[hi]))
        return out

    def speed_squared(self) -> np.ndarray:
        c = self.center_velocity()
        return sum(u * u for u in c)


class MacGrid:
    """Masked staggered grid with lazily assembled sparse operators."""

    def __init__(self, fluid: IndicatorField):
        mask = fluid.mask
        if mask.ndim < 1:
            raise GeometryError("empty grid")
        n = mask.shape[0]
        if any(s != n for s in mask.shape):
            raise GeometryError("grid must be cubic")
        if not mask.any():
            raise GeometryError("empty fluid domain")
        self.mask = mask
        self.periodic = tuple(fluid.periodic)
        self.d = mask.ndim
        self.n = n
        self.h = 1.0 / n
        self.shape = mask.shape

        # fluid-cell numbering
        self.n_cells = int(mask.sum())
        self.cell_index = -np.ones(mask.shape, dtype=np.int64)
        self.cell_index[mask] = np.arange(self.n_cells)

        # face activity and numbering per component
        self.face_shape = []
        self.face_active = []
        offsets = [0]
        for a in range(self.d):
            shape = list(mask.shape)
            if not self.periodic[a]:
                shape[a] += 1
            shape = tuple(shape)
            left = self._cell_at_face(a, shape, side=-1)
            right = self._cell_at_face(a, shape, side=0)
            active = left & right
            self.face_shape.append(shape)
            self.face_active.append(active)
            offsets.append(offsets[-1] + int(active.sum()))
        self.face_offset = offsets
        self.n_faces = offsets[-1]
        self.face_index = []
        for a in range(self.d):
            idx = -np.ones(self.face_shape[a], dtype=np.int64)
            idx[self.face_active[a]] = self.face_offset[a] + np.arange(
                int(self.face_active[a].sum()))
            self.face_index.append(idx)

        self._div = None
        self._lap = None

    def _cell_at_face(self, a, face_shape, side):
        """Fluid flag of the cell on one side of each face of component a.

        side=-1 is the cell with the lower index along axis a, side=0 the
        higher one.  Out-of-domain neighbors count as solid.
        """
        mask = self.mask
        n = self.n
        out = np.zeros(face_shape, dtype=bool)
        idx = np.arange(face_shape[a]) + side  # cell index along axis a
        if self.periodic[a]:
            idx = idx % n
            valid = np.ones(face_shape[a], dtype=bool)
        else:
            valid = (idx >= 0) & (idx < n)
        take = np.clip(idx, 0, n - 1)
        moved = np.take(mask, take, axis=a)
        out[...] = moved
        # zero out invalid planes
        bad = np.nonzero(~valid)[0]
        for b in bad:
            sl_a = [slice(None)] * self.d
            sl_a[a] = b
            out[tuple(sl_a)] = False
        return out

    # -- operators -----------------------------------------------------

    def divergence(self) -> sp.csr_matrix:
        """Rows: fluid cells; columns: active faces; entries +-1/h."""
        if self._div is not None:
            return self._div
        rows, cols, vals = [], [], []
        cells = np.nonzero(self.mask)
        cell_ids = self.cell_index[cells]
        for a in range(self.d):
            for side, sgn in ((1, 1.0), (0, -1.0)):
                # face on the high (side=1) or low (side=0) side of the cell
                fidx = list(cells)
                pos = cells[a] + side
                if self.periodic[a]:
                    pos = pos % self.n
                fidx[a] = pos
                f = self.face_index[a][tuple(fidx)]
                ok = f >= 0
                rows.append(cell_ids[ok])
                cols.append(f[ok])
                vals.append(np.full(ok.sum(), sgn / self.h))
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_cells, self.n_faces)).tocsr()
        self._div = mat
        return mat

    def vector_laplacian(self) -> sp.csr_matrix:
        """Componentwise 2d+1-point Laplacian on active faces.

        Couplings to inactive faces are dropped while their diagonal
        contribution is kept, which is the Dirichlet-zero (no-slip)
        convention.  Symmetric negative definite.
        """
        if self._lap is not None:
            return self._lap
        h2 = self.h * self.h
        rows, cols, vals = [], [], []
        for a in range(self.d):
            act = np.nonzero(self.face_active[a])
            ids = self.face_index[a][act]
            diag = np.full(ids.size, -2.0 * self.d / h2)
            for b in range(self.d):
                size_b = self.face_shape[a][b]
                for step in (-1, 1):
                    nidx = list(act)
                    pos = act[b] + step
                    if self.periodic[b]:
                        pos = pos % size_b
                        ok = np.ones(pos.size, dtype=bool)
                    else:
                        ok = (pos >= 0) & (pos < size_b)
                        pos = np.clip(pos, 0, size_b - 1)
                    nidx[b] = pos
                    nb = self.face_index[a][tuple(nidx)]
                    good = ok & (nb >= 0)
                    rows.append(ids[good])
                    cols.append(nb[good])
                    vals.append(np.full(int(good.sum()), 1.0 / h2))
                    if b != a:
                        # tangential neighbor inside a wall: the physical
                        # wall sits midway, so a mirror ghost (-v) keeps the
                        # no-slip second order; adds -1/h^2 to the diagonal
                        diag[~good] -= 1.0 / h2
            rows.append(ids)
            cols.append(ids)
            vals.append(diag)
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_faces, self.n_faces)).tocsr()
        self._lap = mat
        return mat

    # -- flat <-> field conversions ------------------------------------

    def gather_faces(self, arrays: list) -> np.ndarray:
        flat = np.zeros(self.n_faces)
        for a in range(self.d):
            flat[self.face_index[a][self.face_active[a]]] = \
                arrays[a][self.face_active[a]]
        return flat

    def scatter_faces(self, flat: np.ndarray) -> list:
        out = []
        for a in range(self.d):
            arr = np.zeros(self.face_shape[a])
            arr[self.face_active[a]] = flat[
                self.face_index[a][self.face_active[a]] - 0]
            out.append(arr)
        return out

    def gather_cells(self, arr: np.ndarray) -> np.ndarray:
        return arr[self.mask]

    def scatter_cells(self, flat: np.ndarray) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.mask] = flat
        return out

    def make_field(self, v_flat=None, p_flat=None, **meta) -> StaggeredField:
        vel = (self.scatter_faces(v_flat) if v_flat is not None
               else [np.zeros(s) for s in self.face_shape])
        p = (self.scatter_cells(p_flat) if p_flat is not None
             else np.zeros(self.shape))
        return StaggeredField(vel, p, self.h, self.periodic, dict(meta))

    def face_force(self, direction: int, value: float = 1.0) -> np.ndarray:
        """Flat face vector of a constant body force along one axis."""
        flat = np.zeros(self.n_faces)
        idx = self.face_index[direction][self.face_active[direction]]
        flat[idx] = value
        return flat

    def integrate_faces(self, flat: np.ndarray) -> np.ndarray:
        """Componentwise integral of a face field, midpoint quadrature."""
        hv = self.h**self.d
        out = np.zeros(self.d)
        for a in range(self.d):
            sel = self.face_index[a][self.face_active[a]]
            out[a] = flat[sel].sum() * hv
        return out


def scalar_laplacian(fluid: IndicatorField, dirichlet_solid: bool,
                     dirichlet_boundary: bool | None = None) -> sp.csr_matrix:
    """Cell-centered -Laplacian on fluid cells (positive semi/definite).

    Fluid-fluid neighbor couplings are harmonic with unit transmissibility.
    ``dirichlet_solid`` keeps the diagonal contribution of solid neighbors
    (value-zero wall); otherwise solid contacts are natural zero-flux.
    ``dirichlet_boundary`` controls the outer boundary of non-periodic axes
    and defaults to ``dirichlet_solid``.
    """
    if dirichlet_boundary is None:
        dirichlet_boundary = dirichlet_solid
    mask = fluid.mask
    d = mask.ndim
    n = mask.shape[0]
    h2 = (1.0 / n) ** 2
    n_cells = int(mask.sum())
    if n_cells == 0:
        raise GeometryError("empty fluid domain")
    index = -np.ones(mask.shape, dtype=np.int64)
    index[mask] = np.arange(n_cells)
    cells = np.nonzero(mask)
    ids = index[cells]
    rows, cols, vals = [], [], []
    diag = np.zeros(n_cells)
    for a in range(d):
        for step in (-1, 1):
            nidx = list(cells)
            pos = cells[a] + step
            if fluid.periodic[a]:
                pos = pos % n
                inside = np.ones(pos.size, dtype=bool)
            else:
                inside = (pos >= 0) & (pos < n)
                pos = np.clip(pos, 0, n - 1)
            nidx[a] = pos
            neighbor = index[tuple(nidx)]
            is_fluid = inside & (neighbor >= 0)
            rows.append(ids[is_fluid])
            cols.append(neighbor[is_fluid])
            vals.append(np.full(int(is_fluid.sum()), -1.0 / h2))
            np.add.at(diag, ids[is_fluid], 1.0 / h2)
            solid_contact = inside & (neighbor < 0)
            if dirichlet_solid:
                np.add.at(diag, ids[solid_contact], 1.0 / h2)
            if dirichlet_boundary:
                np.add.at(diag, ids[~inside], 1.0 / h2)
    rows.append(ids)
    cols.append(ids)
    vals.append(diag)
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_cells, n_cells)).tocsr()
