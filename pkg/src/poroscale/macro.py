"""Homogenized macro models on the unit cube.

Two solvers share one staggered macro mesh:

* ``run_darcy`` advances the parabolic pressure equation induced by the
  Darcy law with implicit Euler and reconstructs the crack velocity from
  the pressure each sample; the pore velocity is identically zero.
* ``run_acoustics`` advances the two-velocity acoustic system with a
  staggered-in-time leapfrog (velocities at half steps).

Boundary conditions are per-face: prescribed pressure (half-cell ghost) or
zero normal flux (boundary face closed).  Both whole-domain variants are
convenience constructors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, ConvergenceError
from .dns import Forcing

PSD_TOL = 1e-10


def _check_spsd(mat: np.ndarray, name: str):
    if mat is None:
        return
    if not np.allclose(mat, mat.T, rtol=0, atol=1e-9 * max(1.0, np.abs(mat).max())):
        raise ConfigError(f"{name} must be symmetric")
    w = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    if w.min() < -PSD_TOL * max(1.0, abs(w.max())):
        raise ConfigError(f"{name} must be positive semidefinite "
                          f"(min eigenvalue {w.min():.3e})")


@dataclass
class HomogenizedCoefficients:
    """Coefficient bundle consumed by the macro solvers."""

    dimension: int
    m: float
    c_f: float
    permeability: np.ndarray | None = None     # filtration tensor
    momentum_crack: np.ndarray | None = None   # m_c I - B2_c
    momentum_pore: np.ndarray | None = None    # m_p beta_c I - B2_p
    m_c: float = 0.0
    m_p: float = 0.0
    tau0: float = 0.0
    mu1: float = 0.0
    beta: float | None = None

    def __post_init__(self):
        if not 0.0 < self.m <= 1.0:
            raise ConfigError(f"porosity m={self.m} outside (0, 1]")
        if self.c_f <= 0.0:
            raise ConfigError("c_f must be positive")
        for name in ("permeability", "momentum_crack", "momentum_pore"):
            val = getattr(self, name)
            if val is not None:
                arr = np.asarray(val, dtype=float)
                if arr.shape != (self.dimension, self.dimension):
                    raise ConfigError(f"{name} must be {self.dimension}x"
                                      f"{self.dimension}")
                _check_spsd(arr, name)
                setattr(self, name, arr)


@dataclass(frozen=True)
class BoundaryCondition:
    """Per-face boundary data keyed by names like ``x_lo``, ``y_hi``.

    Faces absent from ``pressures`` are zero normal flux.
    """

    pressures: dict = field(default_factory=dict)

    _AXES = "xyz"

    @classmethod
    def zero_flux(cls):
        return cls({})

    @classmethod
    def pressure(cls, dimension: int, value: float = 0.0, **overrides):
        vals = {}
        for a in range(dimension):
            for side in ("lo", "hi"):
                key = f"{cls._AXES[a]}_{side}"
                vals[key] = overrides.get(key, value)
        return cls(vals)

    def face(self, axis: int, side: str):
        key = f"{self._AXES[axis]}_{side}"
        if key in self.pressures:
            return ("pressure", float(self.pressures[key]))
        return ("zero_flux",)


@dataclass
class MacroState:
    pressure: np.ndarray
    v_c: list
    v_p: list
    t: float


@dataclass
class MacroTrajectory:
    states: list
    table: list
    coefficients: HomogenizedCoefficients
    meta: dict = field(default_factory=dict)


class MacroMesh:
    """Uniform all-fluid staggered mesh with BC-aware gradient operators.

    For each face component a and derivative axis b, ``grad[a][b]`` maps
    cell pressures to the b-derivative evaluated on a-faces, with affine
    part ``grad_affine[a][b]`` carrying prescribed boundary pressures.
    ``open_face[a]`` is zero on closed (zero-flux) boundary faces.
    """

    def __init__(self, dimension: int, n: int, bc: BoundaryCondition):
        if dimension not in (1, 2, 3):
            raise ConfigError("macro dimension must be 1, 2 or 3")
        if n < 2:
            raise ConfigError("macro resolution must be at least 2")
        self.d = dimension
        self.n = n
        self.h = 1.0 / n
        self.bc = bc
        self.cell_shape = (n,) * dimension
        self.n_cells = n**dimension
        self.face_shape = [tuple(n + 1 if b == a else n for b in range(dimension))
                           for a in range(dimension)]
        self.open_face = []
        for a in range(dimension):
            op = np.ones(self.face_shape[a])
            for side, plane in (("lo", 0), ("hi", -1)):
                if bc.face(a, side)[0] == "zero_flux":
                    sl = [slice(None)] * dimension
                    sl[a] = plane
                    op[tuple(sl)] = 0.0
            self.open_face.append(op)
        self._centered = [self._centered_diff(b) for b in range(dimension)]
        self.grad = [[None] * dimension for _ in range(dimension)]
        self.grad_affine = [[None] * dimension for _ in range(dimension)]
        for a in range(dimension):
            for b in range(dimension):
                if a == b:
                    g, aff = self._normal_gradient(a)
                else:
                    avg = self._face_average(a)
                    cb, cb_aff = self._centered[b]
                    g, aff = avg @ cb, avg @ cb_aff
                self.grad[a][b] = g.tocsr()
                self.grad_affine[a][b] = aff
        self.divergence = [self._face_divergence(a) for a in range(dimension)]

    # -- index helpers --------------------------------------------------

    def _cell_flat(self, idx):
        return np.ravel_multi_index(idx, self.cell_shape)

    def _face_flat(self, a, idx):
        return np.ravel_multi_index(idx, self.face_shape[a])

    def _plane(self, shape, axis, pos):
        """Multi-index arrays of the slice ``axis == pos``."""
        grids = np.meshgrid(*[np.arange(s) for s in shape], indexing="ij")
        sl = [slice(None)] * len(shape)
        sl[axis] = pos
        return [g[tuple(sl)].ravel() for g in grids]

    # -- operator assembly ----------------------------------------------

    def _normal_gradient(self, a):
        """d q / d x_a on a-faces (two-point; half-cell at pressure walls)."""
        n, h, d = self.n, self.h, self.d
        rows, cols, vals = [], [], []
        aff = np.zeros(self.face_shape[a]).ravel()
        # interior faces i = 1..n-1: (q_i - q_{i-1}) / h
        idx = self._plane(self.face_shape[a], a, slice(1, n))
        for shift, sgn in ((0, 1.0), (-1, -1.0)):
            cidx = list(idx)
            cidx[a] = idx[a] + shift
            rows.append(self._face_flat(a, idx))
            cols.append(self._cell_flat(cidx))
            vals.append(np.full(idx[0].size, sgn / h))
        for side, fpos, cpos, sgn in (("lo", 0, 0, 1.0), ("hi", n, n - 1, -1.0)):
            kind = self.bc.face(a, side)
            fidx = self._plane(self.face_shape[a], a, fpos)
            if kind[0] == "pressure":
                cidx = list(fidx)
                cidx[a] = np.full_like(fidx[a], cpos)
                rows.append(self._face_flat(a, fidx))
                cols.append(self._cell_flat(cidx))
                vals.append(np.full(fidx[0].size, sgn * 2.0 / h))
                aff[self._face_flat(a, fidx)] = -sgn * 2.0 * kind[1] / h
            # zero-flux faces stay zero rows; the open_face mask closes them
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(np.prod(self.face_shape[a]), self.n_cells))
        return mat, aff

    def _centered_diff(self, b):
        """Cell-to-cell centered d/dx_b with BC ghosts (affine part too)."""
        n, h = self.n, self.h
        rows, cols, vals = [], [], []
        aff = np.zeros(self.n_cells)
        inner = self._plane(self.cell_shape, b, slice(1, n - 1))
        for shift, sgn in ((1, 1.0), (-1, -1.0)):
            cidx = list(inner)
            cidx[b] = inner[b] + shift
            rows.append(self._cell_flat(inner))
            cols.append(self._cell_flat(cidx))
            vals.append(np.full(inner[0].size, sgn / (2 * h)))
        for side, pos, nb_shift, sgn in (("lo", 0, 1, 1.0), ("hi", n - 1, -1, -1.0)):
            kind = self.bc.face(b, side)
            cidx = self._plane(self.cell_shape, b, pos)
            nidx = list(cidx)
            nidx[b] = cidx[b] + nb_shift
            here = self._cell_flat(cidx)
            there = self._cell_flat(nidx)
            if kind[0] == "pressure":
                # ghost = 2 p_wall - q_c: (q_nb - ghost)/(2h)
                rows += [here, here]
                cols += [there, here]
                vals += [np.full(here.size, sgn / (2 * h)),
                         np.full(here.size, sgn / (2 * h))]
                aff[here] += -sgn * kind[1] / h
            else:
                # one-sided difference toward the interior
                rows += [here, here]
                cols += [there, here]
                vals += [np.full(here.size, sgn / h),
                         np.full(here.size, -sgn / h)]
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_cells, self.n_cells))
        return mat, aff

    def _face_average(self, a):
        """Cell values averaged onto a-faces (one-sided at the boundary)."""
        n = self.n
        rows, cols, vals = [], [], []
        idx = self._plane(self.face_shape[a], a, slice(1, n))
        for shift in (0, -1):
            cidx = list(idx)
            cidx[a] = idx[a] + shift
            rows.append(self._face_flat(a, idx))
            cols.append(self._cell_flat(cidx))
            vals.append(np.full(idx[0].size, 0.5))
        for fpos, cpos in ((0, 0), (n, n - 1)):
            fidx = self._plane(self.face_shape[a], a, fpos)
            cidx = list(fidx)
            cidx[a] = np.full_like(fidx[a], cpos)
            rows.append(self._face_flat(a, fidx))
            cols.append(self._cell_flat(cidx))
            vals.append(np.full(fidx[0].size, 1.0))
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(np.prod(self.face_shape[a]), self.n_cells)).tocsr()

    def _face_divergence(self, a):
        """a-face values to cells: (f_hi - f_lo)/h."""
        rows, cols, vals = [], [], []
        cells = self._plane(self.cell_shape, a, slice(0, self.n))
        for shift, sgn in ((1, 1.0), (0, -1.0)):
            fidx = list(cells)
            fidx[a] = cells[a] + shift
            rows.append(self._cell_flat(cells))
            cols.append(self._face_flat(a, fidx))
            vals.append(np.full(cells[0].size, sgn / self.h))
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_cells, np.prod(self.face_shape[a]))).tocsr()

    # -- evaluation helpers ---------------------------------------------

    def face_coords(self, a):
        coords = np.meshgrid(
            *[np.arange(s) + (0.0 if b == a else 0.5)
              for b, s in enumerate(self.face_shape[a])], indexing="ij")
        return [c.ravel() * self.h for c in coords]

    def forcing_on_faces(self, forcing: Forcing, a: int, component: int,
                         t: float) -> np.ndarray:
        return np.asarray(
            forcing.component_at(component, self.face_coords(a), t)).ravel()

    def gradient(self, a, b, q_flat):
        return self.grad[a][b] @ q_flat + self.grad_affine[a][b]

    def tensor_flux(self, tensor: np.ndarray, q_flat, forcing, t,
                    grad_scale=1.0):
        """Per-axis face arrays of  tensor . (F - grad_scale * grad q).

        ``grad_scale`` multiplies the full gradient including the boundary
        ghost contribution, so prescribed wall pressures stay consistent
        with the interior field.
        """
        out = []
        for a in range(self.d):
            total = np.zeros(np.prod(self.face_shape[a]))
            for b in range(self.d):
                if tensor[a, b] == 0.0:
                    continue
                drive = -grad_scale * self.gradient(a, b, q_flat)
                if forcing is not None:
                    drive = drive + self.forcing_on_faces(forcing, a, b, t)
                total += tensor[a, b] * drive
            total *= self.open_face[a].ravel()
            out.append(total)
        return out

    def boundary_fluxes(self, face_vals: list) -> dict:
        """Outward flux through each boundary plane (per unit area x area)."""
        ha = self.h ** (self.d - 1)
        out = {}
        for a in range(self.d):
            arr = face_vals[a].reshape(self.face_shape[a])
            for side, pos, sgn in (("lo", 0, -1.0), ("hi", -1, 1.0)):
                sl = [slice(None)] * self.d
                sl[a] = pos
                key = f"{BoundaryCondition._AXES[a]}_{side}"
                out[key] = float(sgn * arr[tuple(sl)].sum() * ha)
        return out


def _sample_steps(t_end, dt, sample_times):
    n_steps = max(1, round(t_end / dt))
    steps = set()
    for ts in (sample_times or [t_end]):
        steps.add(max(1, min(n_steps, round(ts / dt))))
    return n_steps, steps


def run_darcy(coeffs: HomogenizedCoefficients, forcing: Forcing,
              bc: BoundaryCondition, grid_n: int, t_end: float, dt: float,
              sample_times=None, initial_pressure=None) -> MacroTrajectory:
    """Implicit-Euler filtration run; pore velocity is identically zero."""
    if coeffs.permeability is None:
        raise ConfigError("filtration run requires the permeability tensor")
    if dt <= 0.0 or t_end < 0.0:
        raise ConfigError("need dt > 0 and t_end >= 0")
    d = coeffs.dimension
    mesh = MacroMesh(d, grid_n, bc)
    B = coeffs.permeability
    K = B / coeffs.m
    hv = mesh.h**d

    # A q = div(K grad q); implicit matrix I/(cf^2 dt) - A
    A = sp.csr_matrix((mesh.n_cells, mesh.n_cells))
    for a in range(d):
        open_diag = sp.diags(mesh.open_face[a].ravel())
        for b in range(d):
            if K[a, b] != 0.0:
                A = A + mesh.divergence[a] @ (open_diag @ (K[a, b] * mesh.grad[a][b]))
    inv_cfdt = 1.0 / (coeffs.c_f**2 * dt)
    lhs = (inv_cfdt * sp.identity(mesh.n_cells) - A).tocsc()
    lu = spla.splu(lhs)

    q = np.zeros(mesh.n_cells)
    if initial_pressure is not None:
        q = np.asarray(initial_pressure, dtype=float).reshape(-1).copy()
        if q.size != mesh.n_cells:
            raise ConfigError("initial pressure has wrong size")

    def darcy_velocity(q_flat, t):
        return mesh.tensor_flux(B, q_flat, forcing, t, grad_scale=1.0 / coeffs.m)

    def make_state(q_flat, t):
        vc = darcy_velocity(q_flat, t)
        return MacroState(q_flat.reshape(mesh.cell_shape).copy(),
                          [v.reshape(s) for v, s in zip(vc, mesh.face_shape)],
                          [np.zeros(s) for s in mesh.face_shape], t)

    states = [make_state(q, 0.0)]
    table = []
    if t_end == 0.0:
        return MacroTrajectory(states, table, coeffs, {"dt": dt, "grid": grid_n})

    n_steps, samples = _sample_steps(t_end, dt, sample_times)
    t = 0.0
    for k in range(1, n_steps + 1):
        t1 = t + dt
        # affine part of div v at the new level (forcing + BC ghosts)
        affine = np.zeros(mesh.n_cells)
        for a in range(d):
            vec = np.zeros(np.prod(mesh.face_shape[a]))
            for b in range(d):
                if B[a, b] == 0.0:
                    continue
                vec += B[a, b] * (mesh.forcing_on_faces(forcing, a, b, t1)
                                  - mesh.grad_affine[a][b] / coeffs.m)
            affine += mesh.divergence[a] @ (mesh.open_face[a].ravel() * vec)
        rhs = inv_cfdt * q - affine
        q_new = lu.solve(rhs)
        if not np.isfinite(q_new).all():
            raise ConvergenceError("darcy step diverged")
        vc = darcy_velocity(q_new, t1)
        mass_prev = q.sum() * hv / coeffs.c_f**2
        mass_new = q_new.sum() * hv / coeffs.c_f**2
        fluxes = mesh.boundary_fluxes(vc)
        net_out = sum(fluxes.values())
        budget = (mass_new - mass_prev) + dt * net_out
        # scale on the absolute pressure mass so a signed mass near zero
        # does not turn round-off into an O(1) relative residual
        scale = max(abs(mass_new), abs(mass_prev), dt * abs(net_out),
                    np.abs(q_new).sum() * hv / coeffs.c_f**2, 1e-300)
        row = {"t": t1, "mass": mass_new,
               "mass_budget_residual": abs(budget) / scale,
               "max_abs_vc": max(np.abs(v).max() for v in vc),
               "max_abs_q": float(np.abs(q_new).max())}
        row.update({f"flux_{k2}": v2 for k2, v2 in fluxes.items()})
        table.append(row)
        q, t = q_new, t1
        if k in samples:
            states.append(make_state(q, t))
    return MacroTrajectory(states, table, coeffs,
                           {"dt": dt, "grid": grid_n, "n_steps": n_steps})


def acoustic_cfl_limit(coeffs: HomogenizedCoefficients, grid_n: int) -> float:
    """Largest stable leapfrog dt for the two-velocity system."""
    d = coeffs.dimension
    total = np.zeros((d, d))
    if coeffs.momentum_crack is not None:
        total += coeffs.momentum_crack
    if coeffs.momentum_pore is not None:
        total += coeffs.momentum_pore
    lam = max(np.linalg.eigvalsh(total).max(), 0.0)
    if lam == 0.0 or coeffs.tau0 <= 0.0:
        return math.inf
    c_eff = coeffs.c_f * math.sqrt(lam / (coeffs.tau0 * coeffs.m))
    return (1.0 / grid_n) / (c_eff * math.sqrt(d))


def run_acoustics(coeffs: HomogenizedCoefficients, forcing: Forcing,
                  bc: BoundaryCondition, grid_n: int, t_end: float, dt: float,
                  sample_times=None, initial_pressure=None,
                  incompressible: bool = False) -> MacroTrajectory:
    """Leapfrog two-velocity acoustic run (velocities at half steps).

    The recorded energy is the staggered form (kinetic terms pair adjacent
    half-step velocities through the pseudo-inverse of the momentum
    matrices), which the scheme conserves exactly for zero forcing and
    closed boundaries.
    """
    if coeffs.tau0 <= 0.0:
        raise ConfigError("acoustic run requires tau0 > 0")
    Mc = coeffs.momentum_crack
    Mp = coeffs.momentum_pore
    if Mc is None or Mp is None:
        raise ConfigError("acoustic run requires both momentum matrices")
    if dt <= 0.0 or t_end < 0.0:
        raise ConfigError("need dt > 0 and t_end >= 0")
    limit = acoustic_cfl_limit(coeffs, grid_n)
    if dt > limit * (1.0 + 1e-12):
        raise ConfigError(
            f"dt={dt} above the leapfrog CFL bound {limit:.6g} for N={grid_n}")
    d = coeffs.dimension
    mesh = MacroMesh(d, grid_n, bc)
    hv = mesh.h**d
    cf2 = coeffs.c_f**2
    singular = {}
    pinv_diag = {}
    for name, M in (("crack", Mc), ("pore", Mp)):
        w = np.linalg.eigvalsh(M)
        singular[name] = bool(w.min() <= 1e-12 * max(1.0, w.max()))
        dg = np.diag(M).copy()
        pinv_diag[name] = np.where(dg > 1e-14 * max(1.0, dg.max()),
                                   1.0 / np.where(dg > 0, dg, 1.0), 0.0)

    q = np.zeros(mesh.n_cells)
    if initial_pressure is not None:
        q = np.asarray(initial_pressure, dtype=float).reshape(-1).copy()
        if q.size != mesh.n_cells:
            raise ConfigError("initial pressure has wrong size")

    proj_lu = None
    if incompressible:
        P = sp.csr_matrix((mesh.n_cells, mesh.n_cells))
        scale = dt / (coeffs.tau0 * coeffs.m)
        for a in range(d):
            open_diag = sp.diags(mesh.open_face[a].ravel())
            for b in range(d):
                coef = (Mc[a, b] + Mp[a, b]) * scale
                if coef != 0.0:
                    P = P + mesh.divergence[a] @ (open_diag @ (coef * mesh.grad[a][b]))
        P = P.tolil()
        P[0, :] = 0.0
        P[0, 0] = 1.0
        proj_lu = spla.splu(P.tocsc())

    def momentum_kick(M, q_flat, t, fraction=1.0, with_forcing=True):
        # (dt/tau0) * M . (-grad q / m + F), per face component
        out = mesh.tensor_flux(M, q_flat, forcing if with_forcing else None,
                               t, grad_scale=1.0 / coeffs.m)
        return [fraction * dt / coeffs.tau0 * v for v in out]

    def energy(v_prev, v_next, q_flat):
        kin = 0.0
        for name, vp, vn in (("crack", v_prev[0], v_next[0]),
                             ("pore", v_prev[1], v_next[1])):
            for a in range(d):
                kin += pinv_diag[name][a] * float(vp[a] @ vn[a])
        return (coeffs.tau0 / 2.0 * kin * hv
                + float(q_flat @ q_flat) * hv / (2.0 * cf2 * coeffs.m))

    # half-step start from homogeneous velocity data
    vc = momentum_kick(Mc, q, 0.0, fraction=0.5)
    vp = momentum_kick(Mp, q, 0.0, fraction=0.5)
    vc_prev = [np.zeros_like(v) for v in vc]
    vp_prev = [np.zeros_like(v) for v in vp]

    def make_state(t):
        return MacroState(q.reshape(mesh.cell_shape).copy(),
                          [v.reshape(s).copy() for v, s in zip(vc, mesh.face_shape)],
                          [v.reshape(s).copy() for v, s in zip(vp, mesh.face_shape)],
                          t)

    states = [make_state(0.0)]
    table = []
    if t_end == 0.0:
        return MacroTrajectory(states, table, coeffs, {"dt": dt, "grid": grid_n})

    n_steps, samples = _sample_steps(t_end, dt, sample_times)
    t = 0.0
    e0 = energy((vc_prev, vp_prev), (vc, vp), q)
    for k in range(1, n_steps + 1):
        total = [vc[a] + vp[a] for a in range(d)]
        divv = np.zeros(mesh.n_cells)
        for a in range(d):
            divv += mesh.divergence[a] @ total[a]
        if incompressible:
            rhs = divv.copy()
            rhs[0] = 0.0
            lam = proj_lu.solve(rhs)
            corr_c = momentum_kick(Mc, lam, t, with_forcing=False)
            corr_p = momentum_kick(Mp, lam, t, with_forcing=False)
            for a in range(d):
                vc[a] += corr_c[a]
                vp[a] += corr_p[a]
            q = lam  # the multiplier doubles as the pressure field
        else:
            q = q - dt * cf2 * divv
        t1 = t + dt
        vc_prev = [v.copy() for v in vc]
        vp_prev = [v.copy() for v in vp]
        kick_c = momentum_kick(Mc, q, t1)
        kick_p = momentum_kick(Mp, q, t1)
        for a in range(d):
            vc[a] = vc[a] + kick_c[a]
            vp[a] = vp[a] + kick_p[a]
        e = energy((vc_prev, vp_prev), (vc, vp), q)
        fluxes = mesh.boundary_fluxes([vc_prev[a] + vp_prev[a] for a in range(d)])
        mass = q.sum() * hv / cf2
        row = {"t": t1, "energy": e, "mass": mass,
               "max_abs_q": float(np.abs(q).max()),
               "max_abs_vc": max(np.abs(v).max() for v in vc),
               "max_abs_vp": max(np.abs(v).max() for v in vp)}
        row.update({f"flux_{k2}": v2 for k2, v2 in fluxes.items()})
        table.append(row)
        t = t1
        if k in samples:
            states.append(make_state(t))
    meta = {"dt": dt, "grid": grid_n, "n_steps": n_steps,
            "cfl_limit": limit, "initial_energy": e0,
            "singular_momentum": singular,
            "incompressible": incompressible}
    return MacroTrajectory(states, table, coeffs, meta)
