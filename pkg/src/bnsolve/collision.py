"""Bosonic collision operator: regularized family, moments, conservation fix.

The regularized operator replaces every occupancy f by the saturated value
f/(1 + alpha f) and every stimulated factor 1 + f by
F_alpha(f) = (1 + f)/(1 + alpha f), and restricts pairs to the energy ball
|v|^2 + |v*|^2 <= 1/alpha^2. alpha = 0 recovers the bare bosonic operator
(cutoff disabled unless requested).
"""

from dataclasses import dataclass

import numpy as np

from . import _backend
from . import _collision_py
from .geometry import KernelSpec, kernel_eval, post_collision
from .grids import (DistributionField, SphereQuadrature, VelocityGrid,
                    trilinear_at)


def filling_factor_regularized(x, alpha: float):
    """(1 + x)/(1 + alpha x): the saturated bosonic stimulation factor.

    Equals 1 + x at alpha = 0 and is identically 1 at alpha = 1; always in
    [1, 1 + x] for x >= 0.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("x must be nonnegative")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    out = (1.0 + x) / (1.0 + alpha * x)
    return float(out) if out.ndim == 0 else out


def filling_factor_anyon(f, alpha: float):
    """Anyon interpolation (1 - alpha f)^alpha (1 + (1 - alpha) f)^(1 - alpha).

    Standalone diagnostic; reduces to 1 + f at alpha = 0 and 1 - f at
    alpha = 1. Requires alpha * f <= 1.
    """
    f = np.asarray(f, dtype=np.float64)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if np.any(alpha * f > 1.0):
        raise ValueError("alpha * f must not exceed 1")
    out = (1.0 - alpha * f) ** alpha * (1.0 + (1.0 - alpha) * f) ** (1.0 - alpha)
    return float(out) if out.ndim == 0 else out


def saturated_fields(fv: np.ndarray, alpha: float):
    """Return (g, h) = (f/(1 + alpha f), (1 + f)/(1 + alpha f))."""
    denom = 1.0 + alpha * fv
    return fv / denom, (1.0 + fv) / denom


@dataclass
class CollisionIncrement:
    """Collision rate of change, shaped like the parent field's values."""

    values: np.ndarray
    vgrid: VelocityGrid

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def _resolve_chi(alpha: float, chi_bound):
    if chi_bound is not None:
        return float(chi_bound)
    if alpha > 0.0:
        return 1.0 / alpha ** 2
    return np.inf


def apply_R_alpha(f: DistributionField, alpha: float, kernel: KernelSpec,
                  quad: SphereQuadrature, chi_bound=None) -> CollisionIncrement:
    """Evaluate R_alpha(f) = R_alpha^+(f) - f/(1 + alpha f) * nu_alpha(f) per cell.

    alpha = 0 evaluates the bare operator; pass chi_bound to keep the energy
    cutoff active in that mode.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    bound = _resolve_chi(alpha, chi_bound)
    nx = f.tgrid.n_x
    out = np.empty_like(f.values)
    backend = _collision_py if kernel.form == "table" else _backend
    for xc in np.ndindex(nx, nx, nx):
        fv = f.values[xc]
        g, h = saturated_fields(fv, alpha)
        gain, nu = backend.gain_loss(g, h, f.vgrid.v_max, bound, kernel.b0,
                                     kernel.gamma, quad.nodes, quad.weights,
                                     table=kernel.table)
        out[xc] = gain - g * nu
    return CollisionIncrement(out, f.vgrid)


def gain_loss_fields(f: DistributionField, alpha: float, kernel: KernelSpec,
                     quad: SphereQuadrature, chi_bound=None):
    """Gain and loss-frequency fields (R_alpha^+, nu_alpha), full shape."""
    bound = _resolve_chi(alpha, chi_bound)
    nx = f.tgrid.n_x
    gain_all = np.empty_like(f.values)
    nu_all = np.empty_like(f.values)
    backend = _collision_py if kernel.form == "table" else _backend
    for xc in np.ndindex(nx, nx, nx):
        g, h = saturated_fields(f.values[xc], alpha)
        gain, nu = backend.gain_loss(g, h, f.vgrid.v_max, bound, kernel.b0,
                                     kernel.gamma, quad.nodes, quad.weights,
                                     table=kernel.table)
        gain_all[xc] = gain
        nu_all[xc] = nu
    return gain_all, nu_all


def _pointwise(f, x_cell, v, alpha, kernel, quad, chi_bound, which):
    bound = _resolve_chi(alpha, chi_bound)
    fv = f.values[tuple(x_cell)]
    g, h = saturated_fields(fv, alpha)
    v = np.asarray(v, dtype=np.float64)
    V = f.vgrid.centers_flat
    vsq = np.sum(V * V, axis=1)
    mask = vsq + float(v @ v) <= bound
    mask &= np.any(V != v, axis=1)
    sel = np.nonzero(mask)[0]
    if sel.size == 0:
        return 0.0
    total = 0.0
    v_max = f.vgrid.v_max
    for k in range(len(quad)):
        nk = quad.nodes[k]
        vp, vps = post_collision(np.broadcast_to(v, (sel.size, 3)), V[sel],
                                 np.broadcast_to(nk, (sel.size, 3)))
        B = kernel_eval(kernel, np.broadcast_to(v, (sel.size, 3)), V[sel],
                        np.broadcast_to(nk, (sel.size, 3)))
        if which == "gain":
            vals = (trilinear_at(g, vp, v_max) * trilinear_at(g, vps, v_max)
                    * h.ravel()[sel])
        else:
            vals = (trilinear_at(h, vp, v_max) * trilinear_at(h, vps, v_max)
                    * g.ravel()[sel])
        total += quad.weights[k] * float(np.sum(B * vals))
    total *= f.vgrid.dv ** 3
    if which == "gain":
        hv = trilinear_at(h, v[None, :], v_max)[0] if np.all(np.abs(v) <= v_max) else 1.0
        total *= hv
    return total


def collision_gain(f: DistributionField, x_cell, v, alpha: float,
                   kernel: KernelSpec, quad: SphereQuadrature,
                   chi_bound=None) -> float:
    """Pointwise gain R_alpha^+(f)(x_cell, v); v may be off-grid."""
    return _pointwise(f, x_cell, v, alpha, kernel, quad, chi_bound, "gain")


def collision_loss_nu(f: DistributionField, x_cell, v, alpha: float,
                      kernel: KernelSpec, quad: SphereQuadrature,
                      chi_bound=None) -> float:
    """Pointwise loss frequency nu_alpha(f)(x_cell, v)."""
    return _pointwise(f, x_cell, v, alpha, kernel, quad, chi_bound, "nu")


def collision_moment(f: DistributionField, weight, kernel: KernelSpec,
                     quad: SphereQuadrature, alpha: float = 0.0,
                     chi_bound=None) -> float:
    """Weighted collision moment in the symmetrized (collisional) form.

    Computes (1/2) int chi B g g* h' h'* [w' + w'* - w - w*] over x, v, v*, n
    with g, h the saturated fields; exactly 0 for weight = 1 by construction
    of the bracket.
    """
    bound = _resolve_chi(alpha, chi_bound)
    vgrid = f.vgrid
    v_max = vgrid.v_max
    V = vgrid.centers_flat
    vsq = np.sum(V * V, axis=1)
    n3 = V.shape[0]
    wgrid = np.asarray(weight(V[:, 0], V[:, 1], V[:, 2]), dtype=np.float64)
    nx = f.tgrid.n_x
    total = 0.0
    for xc in np.ndindex(nx, nx, nx):
        g, h = saturated_fields(f.values[xc], alpha)
        gf = g.ravel()
        acc = 0.0
        for j in range(n3):
            mask = vsq + vsq[j] <= bound
            mask[j] = False
            sel = np.nonzero(mask)[0]
            if sel.size == 0:
                continue
            rel = V[sel] - V[j]
            rnorm = np.sqrt(np.sum(rel * rel, axis=1))
            for k in range(len(quad)):
                nk = quad.nodes[k]
                d = rel @ nk
                cos = d / rnorm
                band = (np.abs(cos) >= kernel.gamma) & (np.abs(1.0 - cos) >= kernel.gamma)
                if not np.any(band):
                    continue
                if kernel.form == "constant":
                    B = np.where(band, kernel.b0, 0.0)
                else:
                    B = np.where(band, np.clip(kernel.table(rnorm, cos), 0.0,
                                               kernel.b0), 0.0)
                vp = V[sel] - d[:, None] * nk
                vps = V[j] + d[:, None] * nk
                hp = trilinear_at(h, vp, v_max)
                hps = trilinear_at(h, vps, v_max)
                wp = np.asarray(weight(vp[:, 0], vp[:, 1], vp[:, 2]), dtype=np.float64)
                wps = np.asarray(weight(vps[:, 0], vps[:, 1], vps[:, 2]), dtype=np.float64)
                bracket = wp + wps - wgrid[sel] - wgrid[j]
                acc += quad.weights[k] * float(
                    np.sum(B * gf[sel] * gf[j] * hp * hps * bracket))
        total += acc
    return 0.5 * total * vgrid.dv ** 6 / f.tgrid.n_x ** 3


def conservative_projection(inc: CollisionIncrement, vgrid: VelocityGrid,
                            mask: np.ndarray | None = None) -> CollisionIncrement:
    """Closest increment (discrete L^2) with vanishing mass/momentum/energy sums.

    Five-constraint least-squares correction with Lagrange multipliers per
    x-cell. An optional boolean mask restricts where the correction may live;
    the constraints are still enforced over the whole grid.
    """
    V = vgrid.centers_flat
    phi = np.column_stack([np.ones(V.shape[0]), V[:, 0], V[:, 1], V[:, 2],
                           np.sum(V * V, axis=1)])
    if mask is not None:
        phi_m = phi * mask.ravel()[:, None]
    else:
        phi_m = phi
    gram = phi.T @ phi_m
    if abs(np.linalg.det(gram)) < 1e-300:
        raise ValueError("degenerate Gram matrix: conservation projection "
                         "needs a grid resolving all five invariants")
    vals = inc.values.copy()
    lead = vals.shape[:-3]
    flat = vals.reshape(lead + (-1,))
    for xc in np.ndindex(lead):
        r = flat[xc]
        m = phi.T @ r
        lam = np.linalg.solve(gram, m)
        flat[xc] = r - phi_m @ lam
    return CollisionIncrement(vals, vgrid)
