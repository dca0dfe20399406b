"""Unit-cell and perforated-domain geometry on uniform voxel grids.

A cell geometry is a boolean indicator field on an N^d grid over the unit
cube: True marks fluid, False marks solid.  Shapes are discretized by
cell-center membership (midpoint rule), so porosities converge to the
analytic measure at first order in 1/N.

The perforated macro domain combines a crack cell scaled by epsilon with a
pore cell scaled by delta = epsilon**r: a macro voxel is crack fluid where
the scaled crack cell is fluid, and pore fluid where the crack cell is
solid but the scaled pore cell is fluid.  Both scales are restricted to
grid-aligned inverse powers of two so the nesting is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigError, GeometryError

SHAPES = ("full_fluid", "centered_block", "centered_ball", "axis_channel", "custom_mask")
REGIME_KINDS = ("filtration", "acoustics")


@dataclass(frozen=True)
class CellSpec:
    """Parametrized unit-cell geometry.

    ``s`` is the shape parameter in cell units: side of the centered solid
    block, diameter of the centered solid ball, or width of the fluid
    channel.  ``axis`` orients the channel.  ``mask`` supplies the voxels
    for ``custom_mask``.
    """

    dimension: int
    shape: str
    s: float = 0.0
    resolution: int = 32
    axis: int = 0
    mask: tuple | None = None

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {self.dimension}")
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown shape {self.shape!r}")
        if not 0.0 <= self.s <= 1.0:
            raise ConfigError(f"shape parameter s={self.s} outside [0, 1]")
        if self.resolution < 8:
            raise ConfigError(f"resolution {self.resolution} below minimum of 8")
        if self.resolution & (self.resolution - 1):
            raise ConfigError(f"resolution {self.resolution} is not a power of two")
        if not 0 <= self.axis < self.dimension:
            raise ConfigError(f"axis {self.axis} outside dimension {self.dimension}")
        if self.shape == "custom_mask":
            if self.mask is None:
                raise GeometryError("custom_mask requires mask entries")
            flat = np.asarray(self.mask, dtype=bool).ravel()
            if flat.size != self.resolution**self.dimension:
                raise GeometryError(
                    f"custom_mask has {flat.size} entries, expected "
                    f"{self.resolution ** self.dimension}"
                )

    def fingerprint(self) -> str:
        base = f"{self.shape}-d{self.dimension}-s{self.s}-N{self.resolution}-a{self.axis}"
        if self.shape == "custom_mask":
            flat = np.asarray(self.mask, dtype=bool).ravel()
            base += f"-m{int(flat.sum())}-{hash(flat.tobytes()) & 0xFFFFFFFF:08x}"
        return base


@dataclass(frozen=True)
class IndicatorField:
    """Boolean occupancy per grid voxel (True = fluid)."""

    mask: np.ndarray
    periodic: tuple

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "mask", m)
        if len(self.periodic) != m.ndim:
            raise ConfigError("periodicity flags must match dimension")

    @property
    def dimension(self) -> int:
        return self.mask.ndim

    @property
    def resolution(self) -> tuple:
        return self.mask.shape

    @property
    def spacing(self) -> float:
        return 1.0 / self.mask.shape[0]

    def porosity(self) -> float:
        return float(self.mask.mean())

    def fluid_count(self) -> int:
        return int(self.mask.sum())

    def inverted(self) -> "IndicatorField":
        return IndicatorField(~self.mask, self.periodic)


def _centers(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def build_cell(spec: CellSpec) -> IndicatorField:
    """Discretize a cell shape; a voxel is fluid iff its center is."""
    n, d = spec.resolution, spec.dimension
    if spec.shape == "custom_mask":
        mask = np.asarray(spec.mask, dtype=bool).reshape((n,) * d)
        return IndicatorField(mask, (True,) * d)
    axes = np.meshgrid(*[_centers(n)] * d, indexing="ij")
    if spec.shape == "full_fluid":
        mask = np.ones((n,) * d, dtype=bool)
    elif spec.shape == "centered_block":
        inside = np.ones((n,) * d, dtype=bool)
        for x in axes:
            inside &= np.abs(x - 0.5) < spec.s / 2.0
        mask = ~inside
    elif spec.shape == "centered_ball":
        r2 = sum((x - 0.5) ** 2 for x in axes)
        mask = r2 >= (spec.s / 2.0) ** 2
    elif spec.shape == "axis_channel":
        mask = np.ones((n,) * d, dtype=bool)
        for a, x in enumerate(axes):
            if a != spec.axis:
                mask &= np.abs(x - 0.5) < spec.s / 2.0
    else:  # pragma: no cover
        raise ConfigError(f"unhandled shape {spec.shape}")
    return IndicatorField(mask, (True,) * d)


def porosity(f: IndicatorField) -> float:
    return f.porosity()


def composite_porosity(m_c: float, m_p: float) -> float:
    """Total porosity of the crack-pore composite."""
    return m_c + (1.0 - m_c) * m_p


@dataclass(frozen=True)
class AlphaRule:
    """Scaling rule alpha(eps) = limit + coeff * eps**exponent."""

    limit: float
    coeff: float = 0.0
    exponent: float = 0.0

    def __call__(self, eps: float) -> float:
        return self.limit + self.coeff * eps**self.exponent


@dataclass(frozen=True)
class ScalingRegime:
    """Dimensionless parameter bundle for one microscale configuration.

    ``kind`` selects the physical limit: filtration (tau0 = 0, mu1 > 0,
    hence mu2 = inf) or acoustics (tau0 > 0).  The alpha rules give the
    concrete eps-dependence of the coefficients in the microscale system.
    """

    epsilon: float
    r: float
    kind: str
    tau0: float
    mu1: float
    mu2: float
    c_f: float
    alpha_tau: AlphaRule = field(default=None)
    alpha_mu: AlphaRule = field(default=None)
    alpha_q: AlphaRule = field(default=None)
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in REGIME_KINDS:
            raise ConfigError(f"unknown regime kind {self.kind!r}")
        if not 0.0 < self.c_f < math.inf:
            raise ConfigError(f"c_f={self.c_f} must be finite and positive")
        if self.r < 1.0:
            raise ConfigError(f"r={self.r} must be >= 1")
        if not 0.0 < self.epsilon <= 0.5:
            raise ConfigError(f"epsilon={self.epsilon} outside (0, 1/2]")
        if self.tau0 < 0.0:
            raise ConfigError("tau0 must be non-negative")
        if self.tau0 + self.mu1 <= 0.0:
            raise ConfigError("homogenization requires tau0 + mu1 > 0")
        if self.kind == "filtration":
            if self.tau0 != 0.0:
                raise ConfigError("filtration regime requires tau0 = 0")
            if self.mu1 <= 0.0:
                raise ConfigError("filtration regime requires mu1 > 0")
            if self.r > 1.0 and not math.isinf(self.mu2):
                raise ConfigError("mu1 > 0 with r > 1 forces mu2 = inf")
        else:
            if self.tau0 <= 0.0:
                raise ConfigError("acoustic regime requires tau0 > 0")
        if self.beta is not None and self.beta <= 0.0:
            raise ConfigError("beta must be positive")
        if self.alpha_tau is None:
            object.__setattr__(self, "alpha_tau", AlphaRule(self.tau0, 1.0, 2.0))
        if self.alpha_mu is None:
            object.__setattr__(self, "alpha_mu", AlphaRule(0.0, self.mu1, 2.0))
        if self.alpha_q is None:
            object.__setattr__(self, "alpha_q", AlphaRule(self.c_f**2))

    @property
    def delta(self) -> float:
        return self.epsilon**self.r

    def coefficients(self) -> tuple:
        """(alpha_tau, alpha_mu, alpha_q) evaluated at this epsilon."""
        e = self.epsilon
        return self.alpha_tau(e), self.alpha_mu(e), self.alpha_q(e)

    @classmethod
    def filtration(cls, epsilon, r, mu1, c_f, **kw):
        return cls(epsilon=epsilon, r=r, kind="filtration", tau0=0.0, mu1=mu1,
                   mu2=math.inf, c_f=c_f, **kw)

    @classmethod
    def acoustics(cls, epsilon, r, tau0, c_f, mu1=0.0, mu2=0.0, beta=None, **kw):
        if "alpha_tau" not in kw:
            kw["alpha_tau"] = AlphaRule(tau0)
        if "alpha_mu" not in kw:
            kw["alpha_mu"] = AlphaRule(0.0, 1.0, 3.0)
        return cls(epsilon=epsilon, r=r, kind="acoustics", tau0=tau0, mu1=mu1,
                   mu2=mu2, c_f=c_f, beta=beta, **kw)


def _check_inverse_power_of_two(x: float, name: str) -> int:
    k = round(math.log2(1.0 / x))
    if k < 0 or abs(1.0 / 2**k - x) > 1e-12:
        raise GeometryError(f"{name}={x} is not an inverse power of two")
    return k


def minimal_macro_resolution(regime: ScalingRegime, crack_cell: CellSpec,
                             pore_cell: CellSpec) -> int:
    """Smallest macro grid that nests both scaled cells exactly."""
    _check_inverse_power_of_two(regime.epsilon, "epsilon")
    inv_delta = 1.0 / regime.delta
    if abs(inv_delta - round(inv_delta)) > 1e-9:
        raise GeometryError(
            f"delta=eps**r={regime.delta} does not align with a binary grid")
    inv_delta = round(inv_delta)
    _check_inverse_power_of_two(1.0 / inv_delta, "delta")
    per_crack = round(crack_cell.resolution / regime.epsilon)
    per_pore = pore_cell.resolution * inv_delta
    return math.lcm(per_crack, per_pore)


def _tile_indices(macro_n: int, cells_per_period: int, cell_n: int) -> np.ndarray:
    # macro voxel i maps to cell voxel (i // block) % cell_n with
    # block = cells_per_period / cell_n macro voxels per cell voxel
    block = cells_per_period // cell_n
    return (np.arange(macro_n) // block) % cell_n


def build_phase_masks(regime: ScalingRegime, crack_cell: CellSpec,
                      pore_cell: CellSpec, macro_resolution: int):
    """Crack and pore indicator fields of the perforated unit cube.

    Returns (chi_c, chi_p) on the macro grid; their union is the fluid
    domain.  Raises GeometryError when the scales do not align, reporting
    the smallest admissible resolution.
    """
    if crack_cell.dimension != pore_cell.dimension:
        raise GeometryError("crack and pore cells must share the dimension")
    d = crack_cell.dimension
    m = macro_resolution
    n_min = minimal_macro_resolution(regime, crack_cell, pore_cell)
    if m % n_min:
        raise GeometryError(
            f"macro resolution {m} does not align with epsilon={regime.epsilon}, "
            f"delta={regime.delta}; smallest admissible resolution is {n_min}")
    crack = build_cell(crack_cell).mask
    pore = build_cell(pore_cell).mask
    # one eps-period (delta-period) spans m*eps (m*delta) macro voxels
    per_crack = round(m * regime.epsilon)
    per_pore = round(m * regime.delta)
    idx_c = _tile_indices(m, per_crack, crack_cell.resolution)
    idx_p = _tile_indices(m, per_pore, pore_cell.resolution)
    chi_c = crack[np.ix_(*[idx_c] * d)]
    chi_p = ~chi_c & pore[np.ix_(*[idx_p] * d)]
    flags = (False,) * d
    return IndicatorField(chi_c, flags), IndicatorField(chi_p, flags)


def build_perforated_domain(regime: ScalingRegime, crack_cell: CellSpec,
                            pore_cell: CellSpec, macro_resolution: int) -> IndicatorField:
    """Fluid indicator of the double-porosity domain (crack + pore fluid)."""
    chi_c, chi_p = build_phase_masks(regime, crack_cell, pore_cell, macro_resolution)
    return IndicatorField(chi_c.mask | chi_p.mask, chi_c.periodic)


def fluid_percolates(f: IndicatorField) -> bool:
    """True iff the fluid phase winds around the periodic cell in some axis.

    Face-adjacency flood fill with periodic wrap, implemented as a labeling
    pass plus a union-find over the wrap adjacencies that tracks winding
    displacements.  A component percolates along an axis when two copies of
    it meet across the wrap with inconsistent displacement there.
    """
    if not all(f.periodic):
        raise GeometryError("percolation is defined for periodic fields only")
    mask = f.mask
    d = mask.ndim
    labels, n_lab = ndimage.label(mask)
    if n_lab == 0:
        return False

    parent = np.arange(n_lab + 1)
    disp = np.zeros((n_lab + 1, d), dtype=np.int64)  # displacement to root, in periods

    def find(i):
        # root of i plus the displacement of i relative to that root,
        # with path compression keeping the displacements consistent
        if parent[i] == i:
            return i, np.zeros(d, dtype=np.int64)
        root, d_parent = find(parent[i])
        disp[i] = disp[i] + d_parent
        parent[i] = root
        return root, disp[i].copy()

    winding = False
    for axis in range(d):
        lo = labels[tuple(0 if a == axis else slice(None) for a in range(d))]
        hi = labels[tuple(-1 if a == axis else slice(None) for a in range(d))]
        both = (lo > 0) & (hi > 0)
        if not both.any():
            continue
        pairs = np.unique(np.stack([hi[both].ravel(), lo[both].ravel()]), axis=1)
        for la, lb in pairs.T:
            # crossing from the high face of la into the low face of lb adds
            # one period along this axis: pos(lb) = pos(la) + e_axis
            ra, da = find(int(la))
            rb, db = find(int(lb))
            step = np.zeros(d, dtype=np.int64)
            step[axis] = 1
            if ra == rb:
                if not np.array_equal(da + step, db):
                    winding = True
            else:
                parent[rb] = ra
                disp[rb] = da + step - db
    return winding
