"""Moments, bosonic entropy, Bose-Einstein equilibria and condensation diagnostics.

Temperature convention follows the exponent (|v - u|^2 - mu)/(2T), so T here
differs from the physics convention that carries a particle mass / 2. The
condensate is never a grid object: it appears only as the scalar m0 from the
mass-splitting fit and as the velocity-ball fraction diagnostic.
"""

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.optimize import brentq

from .geometry import KernelSpec
from .grids import (DistributionField, SphereQuadrature, TorusGrid,
                    VelocityGrid, field_from_function)

ZETA_3_2 = float(mpmath.zeta(1.5))
ZETA_5_2 = float(mpmath.zeta(2.5))


def _reduce(arr: np.ndarray, ordered: bool) -> float:
    """Deterministic ordered sum (math.fsum) or fast numpy sum."""
    if ordered:
        return math.fsum(arr.ravel().tolist())
    return float(np.sum(arr))


@dataclass
class Moments:
    time: float
    mass: float
    momentum: np.ndarray  # (3,)
    energy: float
    entropy: float
    linf: float


@dataclass
class EquilibriumParams:
    """Fitted equilibrium (u, T, mu, m0) with the complementarity mu * m0 = 0."""

    u: np.ndarray
    T: float
    mu: float
    m0: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.mu > 0:
            raise ValueError("mu must be <= 0")
        if self.m0 < 0:
            raise ValueError("m0 must be >= 0")
        if self.mu * self.m0 != 0.0:
            raise ValueError("complementarity mu * m0 = 0 violated")


def entropy_density(f: np.ndarray) -> np.ndarray:
    """Bosonic H-density (1 + f) ln(1 + f) - f ln f, with 0 ln 0 = 0."""
    f = np.asarray(f, dtype=np.float64)
    pos = f > 0
    out = np.log1p(f) * (1.0 + f)
    out -= np.where(pos, f * np.log(np.where(pos, f, 1.0)), 0.0)
    return out


def compute_moments(f: DistributionField, time: float = 0.0,
                    ordered: bool = True) -> Moments:
    """Midpoint-rule moments over x and v: mass, momentum, energy, entropy, L-inf."""
    vx, vy, vz = f.vgrid.mesh
    cell = f.vgrid.dv ** 3 / f.tgrid.n_x ** 3
    vals = f.values
    mass = _reduce(vals, ordered) * cell
    px = _reduce(vals * vx, ordered) * cell
    py = _reduce(vals * vy, ordered) * cell
    pz = _reduce(vals * vz, ordered) * cell
    energy = _reduce(vals * f.vgrid.speed_sq, ordered) * cell
    entropy = _reduce(entropy_density(vals), ordered) * cell
    return Moments(time=time, mass=mass, momentum=np.array([px, py, pz]),
                   energy=energy, entropy=entropy, linf=f.linf())


def bose_einstein_field(p: EquilibriumParams, vgrid: VelocityGrid,
                        tgrid: TorusGrid) -> DistributionField:
    """Regular part of the equilibrium, 1/(exp((|v - u|^2 - mu)/(2T)) - 1).

    Homogeneous in x; m0 is ignored here and reported separately. Raises if a
    cell center makes the exponent vanish (mu = 0 singularity at v = u).
    """
    def be(vx, vy, vz):
        esq = (vx - p.u[0]) ** 2 + (vy - p.u[1]) ** 2 + (vz - p.u[2]) ** 2
        arg = (esq - p.mu) / (2.0 * p.T)
        if np.any(arg <= 0):
            raise ValueError("Bose-Einstein singularity: exponent vanishes at "
                             "a grid node (mu = 0 with a cell center at u)")
        return 1.0 / np.expm1(arg)

    return field_from_function(be, vgrid, tgrid)


def _polylog(s: float, z: float) -> float:
    if z == 0.0:
        return 0.0
    return float(mpmath.polylog(s, z))


def _be_mass_energy(T: float, z: float):
    """Continuum (mass, centered energy) densities of the regular BE part."""
    m = (2.0 * np.pi * T) ** 1.5 * _polylog(1.5, z)
    e = 3.0 * T * (2.0 * np.pi * T) ** 1.5 * _polylog(2.5, z)
    return m, e


def critical_temperature(mass_density: float) -> float:
    """T_c = (rho / ((2 pi)^{3/2} zeta(3/2)))^{2/3}: the mu = 0 mass relation inverted."""
    if not mass_density > 0:
        raise ValueError("mass_density must be positive")
    return (mass_density / ((2.0 * np.pi) ** 1.5 * ZETA_3_2)) ** (2.0 / 3.0)


def fit_equilibrium(m: Moments, tol: float = 1e-12,
                    max_iter: int = 100) -> EquilibriumParams:
    """Equilibrium parameters with the same mass, momentum and kinetic energy.

    Solves the polylog mass/energy relations by bracketing plus Newton polish.
    When the requested fugacity would exceed 1 the chemical potential is
    clamped at 0 and the excess mass reported as condensate m0 (T < T_c).
    """
    if not m.mass > 0:
        raise ValueError("mass must be positive")
    u = m.momentum / m.mass
    e_c = m.energy - m.mass * float(u @ u)
    if e_c <= 0:
        raise ValueError("non-physical moments: centered energy <= 0")
    rho = m.mass
    # shape function G(z) = Li_{5/2}(z)/Li_{3/2}(z)^{5/3}, strictly decreasing
    target = 2.0 * np.pi * e_c / (3.0 * rho ** (5.0 / 3.0))
    g_crit = ZETA_5_2 / ZETA_3_2 ** (5.0 / 3.0)

    if target <= g_crit:
        # condensed regime: the Dirac part carries no centered energy
        T = (e_c / (3.0 * (2.0 * np.pi) ** 1.5 * ZETA_5_2)) ** 0.4
        m0 = max(rho - (2.0 * np.pi * T) ** 1.5 * ZETA_3_2, 0.0)
        return EquilibriumParams(u=u, T=T, mu=0.0, m0=m0)

    def gshape(z):
        return _polylog(2.5, z) / _polylog(1.5, z) ** (5.0 / 3.0) - target

    z = brentq(gshape, 1e-12, 1.0, xtol=1e-15, rtol=8.9e-16)
    T = (rho / _polylog(1.5, z)) ** (2.0 / 3.0) / (2.0 * np.pi)

    # Newton polish on (T, z) for the full mass/energy system
    for _ in range(max_iter):
        mm, ee = _be_mass_energy(T, z)
        r1 = mm / rho - 1.0
        r2 = ee / e_c - 1.0
        if abs(r1) < tol and abs(r2) < tol:
            break
        li12 = _polylog(0.5, z)
        li32 = _polylog(1.5, z)
        li52 = _polylog(2.5, z)
        pref = (2.0 * np.pi * T) ** 1.5
        # Jacobian of (mass, energy) wrt (T, z)
        j11 = 1.5 * pref * li32 / T / rho
        j12 = pref * li12 / z / rho
        j21 = 7.5 * T ** 1.5 * (2.0 * np.pi) ** 1.5 * li52 / e_c
        j22 = 3.0 * T * pref * li32 / z / e_c
        det = j11 * j22 - j12 * j21
        dT = (r1 * j22 - r2 * j12) / det
        dz = (r2 * j11 - r1 * j21) / det
        T -= dT
        z = min(max(z - dz, 1e-300), 1.0 - 1e-16)
        if T <= 0:
            raise ValueError("Newton iteration left the physical domain")
    mu = 2.0 * T * np.log(z)
    return EquilibriumParams(u=u, T=T, mu=mu, m0=0.0)


def detailed_balance_residual(p: EquilibriumParams, kernel: KernelSpec,
                              quad: SphereQuadrature, vgrid: VelocityGrid,
                              tgrid: TorusGrid) -> float:
    """max |R_0(BE field)| over cells: a grid-quality metric (0 in the continuum)."""
    if not p.mu < 0:
        raise ValueError("detailed-balance residual requires mu < 0")
    from .collision import apply_R_alpha
    f = bose_einstein_field(p, vgrid, tgrid)
    return apply_R_alpha(f, 0.0, kernel, quad).max_abs()


def condensate_fraction(f: DistributionField, radius_cells: int) -> float:
    """Mass fraction inside the velocity ball of given cell radius around the mean drift.

    Returns NaN for a zero-mass field.
    """
    if radius_cells < 1:
        raise ValueError("radius_cells must be >= 1")
    m = compute_moments(f, ordered=False)
    if m.mass <= 0:
        return float("nan")
    u = m.momentum / m.mass
    vx, vy, vz = f.vgrid.mesh
    dist_sq = (vx - u[0]) ** 2 + (vy - u[1]) ** 2 + (vz - u[2]) ** 2
    ball = dist_sq <= (radius_cells * f.vgrid.dv) ** 2
    inside = float(np.sum(f.values * ball)) * f.vgrid.dv ** 3 / f.tgrid.n_x ** 3
    return inside / m.mass
