"""Direct simulation of slightly compressible Stokes flow in the
perforated double-porosity domain.

The scheme is first-order semi-implicit: viscous stress and pressure
gradient are implicit, forcing explicit, and the compressibility equation
is eliminated into the momentum solve, so one SPD linear system is solved
per step.  With the adjoint-pair operators of :mod:`poroscale.staggered`
the discrete energy identity

    d/dt [ (a_tau/2)|v|^2 + 1/(2 a_q)|q|^2 ] + a_mu |grad v|^2 = (F, v)

holds per step to linear-solver accuracy; the residual is recorded.

When a_tau falls below a floor the same solve degenerates smoothly into
the quasi-static (steady Stokes per step) branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, ConvergenceError, GeometryError
from .geometry import IndicatorField, ScalingRegime
from .staggered import MacGrid, StaggeredField

ALPHA_TAU_FLOOR = 1e-12
REFINE_PASSES = 3


@dataclass(frozen=True)
class Forcing:
    """Separable forcing family: amplitude * T(t) * prod_b S_b(x_b).

    ``time`` is ("constant",), ("sin", f) or ("cos", f) with frequency f in
    cycles per unit time; ``space`` holds one such factor per axis (empty
    for a spatially constant force).
    """

    amplitude: tuple
    time: tuple = ("constant",)
    space: tuple = ()

    def __post_init__(self):
        for factor in (self.time, *self.space):
            if factor[0] not in ("constant", "sin", "cos"):
                raise ConfigError(f"unknown forcing factor {factor[0]!r}")

    @staticmethod
    def _factor(kind_freq, x):
        kind = kind_freq[0]
        if kind == "constant":
            return np.ones_like(x) if isinstance(x, np.ndarray) else 1.0
        freq = kind_freq[1]
        fn = np.sin if kind == "sin" else np.cos
        return fn(2.0 * math.pi * freq * x)

    def time_factor(self, t: float) -> float:
        return float(self._factor(self.time, t))

    def _space_profile(self, coords: list) -> np.ndarray:
        prof = 1.0
        for b, x in enumerate(coords):
            if b < len(self.space):
                prof = prof * self._factor(self.space[b], x)
        if not isinstance(prof, np.ndarray):
            prof = np.full(coords[0].shape, prof)
        return prof

    def component_at(self, axis: int, coords: list, t: float):
        """Component ``axis`` sampled at the given coordinate arrays."""
        amp = self.amplitude[axis] if axis < len(self.amplitude) else 0.0
        if amp == 0.0:
            return np.zeros(np.broadcast(*coords).shape) if coords else 0.0
        return amp * self.time_factor(t) * self._space_profile(coords)

    def on_faces(self, grid: MacGrid, t: float) -> np.ndarray:
        """Flat vector of the force sampled at active face centers."""
        out = np.zeros(grid.n_faces)
        h = grid.h
        for a in range(grid.d):
            if (a >= len(self.amplitude)) or self.amplitude[a] == 0.0:
                continue
            idx = np.nonzero(grid.face_active[a])
            coords = []
            for b in range(grid.d):
                pos = idx[b].astype(float)
                coords.append((pos if b == a else pos + 0.5) * h)
            out[grid.face_index[a][idx]] = self.component_at(a, coords, t)
        return out

    def at_centers(self, grid: MacGrid, t: float) -> np.ndarray:
        """|F|^2 at fluid cell centers (flat over fluid cells)."""
        tf = self.time_factor(t)
        idx = np.nonzero(grid.mask)
        coords = [(i.astype(float) + 0.5) * grid.h for i in idx]
        prof = self._space_profile(coords)
        total = np.zeros(prof.shape)
        for a in range(grid.d):
            amp = self.amplitude[a] if a < len(self.amplitude) else 0.0
            total += (amp * tf * prof) ** 2
        return total


@dataclass
class DnsState:
    """One time level of the microscale run."""

    fld: StaggeredField
    t: float
    regime: ScalingRegime
    diagnostics: dict = field(default_factory=dict)


@dataclass
class DnsTrajectory:
    states: list
    table: list
    chi_c: IndicatorField
    chi_p: IndicatorField
    regime: ScalingRegime
    forcing: Forcing
    meta: dict = field(default_factory=dict)

    def diagnostics_columns(self):
        if not self.table:
            return []
        return list(self.table[0].keys())


class DnsOperator:
    """Prefactorized step operator for fixed geometry, regime and dt."""

    def __init__(self, chi_c: IndicatorField, chi_p: IndicatorField,
                 regime: ScalingRegime, dt: float):
        if dt <= 0.0:
            raise ConfigError(f"dt={dt} must be positive")
        fluid = IndicatorField(chi_c.mask | chi_p.mask, chi_c.periodic)
        if not fluid.mask.any():
            raise GeometryError("empty fluid domain")
        self.chi_c, self.chi_p = chi_c, chi_p
        self.regime = regime
        self.dt = dt
        self.grid = MacGrid(fluid)
        a_tau, a_mu, a_q = regime.coefficients()
        if a_tau < ALPHA_TAU_FLOOR:
            a_tau = 0.0  # quasi-static branch: steady Stokes each step
        self.a_tau, self.a_mu, self.a_q = a_tau, a_mu, a_q
        grid = self.grid
        self.div = grid.divergence()
        self.neg_lap = (-grid.vector_laplacian()).tocsr()
        eye = sp.identity(grid.n_faces, format="csr")
        self.matrix = ((a_tau / dt) * eye + a_mu * self.neg_lap
                       + (dt * a_q) * (self.div.T @ self.div)).tocsc()
        try:
            self.lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise ConvergenceError(f"singular DNS step matrix: {exc}") from exc
        self.crack_cells = chi_c.mask[fluid.mask]
        self.pore_cells = chi_p.mask[fluid.mask]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        v = self.lu.solve(rhs)
        norm = np.abs(rhs).max() or 1.0
        for _ in range(REFINE_PASSES):
            r = rhs - self.matrix @ v
            if np.abs(r).max() <= 1e-14 * norm:
                break
            v += self.lu.solve(r)
        r = rhs - self.matrix @ v
        if not np.isfinite(v).all() or np.abs(r).max() > 1e-6 * norm:
            raise ConvergenceError(
                "DNS step solve diverged",
                residual=float(np.abs(r).max()))
        return v

    def step(self, v0: np.ndarray, q0: np.ndarray, t: float,
             forcing: Forcing):
        """One semi-implicit step; returns (v1, q1, diagnostics)."""
        grid, dt = self.grid, self.dt
        a_tau, a_mu, a_q = self.a_tau, self.a_mu, self.a_q
        f = forcing.on_faces(grid, t)
        rhs = (a_tau / dt) * v0 + self.div.T @ q0 + f
        if np.abs(rhs).max() == 0.0:
            v1 = np.zeros_like(v0)
        else:
            v1 = self.solve(rhs)
        q1 = q0 - (dt * a_q) * (self.div @ v1)

        hv = grid.h**grid.d
        dv, dq = v1 - v0, q1 - q0
        t_kin = a_tau / (2 * dt) * (v1 @ v1 - v0 @ v0 + dv @ dv) * hv
        t_prs = 1.0 / (2 * a_q * dt) * (q1 @ q1 - q0 @ q0 + dq @ dq) * hv
        grad2 = float(v1 @ (self.neg_lap @ v1)) * hv
        t_visc = a_mu * grad2
        t_force = float(f @ v1) * hv
        scale = max(abs(t_kin), abs(t_prs), abs(t_visc), abs(t_force), 1e-300)
        energy_residual = abs(t_kin + t_prs + t_visc - t_force) / scale
        if t_force == t_kin == t_prs == t_visc == 0.0:
            energy_residual = 0.0

        eps, delta = self.regime.epsilon, self.regime.delta
        fld = grid.make_field(v_flat=v1, p_flat=q1)
        c2 = fld.speed_squared()[grid.mask]
        ip = (a_mu / delta**2) * float(c2[self.pore_cells].sum()) * hv
        ic = (a_mu / eps**2) * float(c2[self.crack_cells].sum()) * hv
        divv = self.div @ v1
        diag = {
            "t": t + dt,
            "int_v2": float(v1 @ v1) * hv,
            "int_gradv2": grad2,
            "int_q2": float(q1 @ q1) * hv,
            "int_divv2": float(divv @ divv) * hv,
            "int_F2": float(forcing.at_centers(grid, t).sum()) * hv,
            "weighted_pore": ip,
            "weighted_crack": ic,
            "pore_volume": float(self.pore_cells.sum()) * hv,
            "crack_volume": float(self.crack_cells.sum()) * hv,
            "energy_residual": energy_residual,
        }
        return v1, q1, diag


def dns_step(state: DnsState, dt: float, forcing: Forcing,
             chi_c: IndicatorField, chi_p: IndicatorField,
             operator: DnsOperator | None = None) -> DnsState:
    """Advance one state by one step (convenience wrapper around the
    cached operator; ``run_dns`` is the efficient loop)."""
    op = operator
    if op is None or op.dt != dt:
        op = DnsOperator(chi_c, chi_p, state.regime, dt)
    grid = op.grid
    v0 = grid.gather_faces(state.fld.velocity)
    q0 = grid.gather_cells(state.fld.pressure)
    v1, q1, diag = op.step(v0, q0, state.t, forcing)
    fld = grid.make_field(v_flat=v1, p_flat=q1)
    return DnsState(fld, state.t + dt, state.regime, diag)


def initial_state(chi_c: IndicatorField, chi_p: IndicatorField,
                  regime: ScalingRegime) -> DnsState:
    fluid = IndicatorField(chi_c.mask | chi_p.mask, chi_c.periodic)
    grid = MacGrid(fluid)
    return DnsState(grid.make_field(), 0.0, regime)


def run_dns(geometry, regime: ScalingRegime, forcing: Forcing, t_end: float,
            dt: float, sample_times=None) -> DnsTrajectory:
    """Time-step the microscale system from rest to ``t_end``.

    ``geometry`` is either the pair (chi_c, chi_p) of phase indicators or a
    single fluid indicator (then treated as pure crack fluid).  States are
    sampled at the steps nearest each requested time; cumulative integrals
    for the a priori estimates accumulate by the rectangle rule.
    """
    if isinstance(geometry, IndicatorField):
        chi_c = geometry
        chi_p = IndicatorField(np.zeros_like(geometry.mask), geometry.periodic)
    else:
        chi_c, chi_p = geometry
        if (chi_c.mask & chi_p.mask).any():
            raise GeometryError("crack and pore indicators overlap")
    if t_end < 0.0:
        raise ConfigError("t_end must be non-negative")

    state0 = initial_state(chi_c, chi_p, regime)
    states = [state0]
    table = []
    if t_end == 0.0:
        return DnsTrajectory(states, table, chi_c, chi_p, regime, forcing)

    op = DnsOperator(chi_c, chi_p, regime, dt)
    grid = op.grid
    n_steps = max(1, round(t_end / dt))
    sample_steps = set()
    for ts in (sample_times or [t_end]):
        k = max(1, min(n_steps, round(ts / dt)))
        sample_steps.add(k)

    v = np.zeros(grid.n_faces)
    q = np.zeros(grid.n_cells)
    cum = {"est22": 0.0, "est23": 0.0, "F2": 0.0}
    t = 0.0
    for k in range(1, n_steps + 1):
        v, q, diag = op.step(v, q, t, forcing)
        t += dt
        cum["est22"] += dt * (diag["int_v2"] + op.a_mu * diag["int_gradv2"]
                              + diag["int_q2"] + diag["int_divv2"])
        cum["est23"] += dt * (diag["weighted_pore"] + diag["weighted_crack"])
        cum["F2"] += dt * diag["int_F2"]
        diag.update(cum_est22=cum["est22"], cum_est23=cum["est23"],
                    cum_F2=cum["F2"])
        table.append(diag)
        if k in sample_steps:
            fld = grid.make_field(v_flat=v, p_flat=q)
            states.append(DnsState(fld, t, regime, dict(diag)))
    return DnsTrajectory(states, table, chi_c, chi_p, regime, forcing,
                         meta={"dt": dt, "t_end": t_end,
                               "n_steps": n_steps,
                               "resolution": grid.n})
