"""Phase-space discretization: velocity cube, periodic torus, sphere quadrature.

The torus has period 1 per axis. Velocity space is truncated to the cube
[-v_max, v_max]^3 with cell-centered nodes. With even n_v (the recommended
choice) no node sits exactly at v = 0 and condensate mass can only show up as
a growing low-velocity cluster; odd n_v is allowed for small diagnostic grids.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass
class VelocityGrid:
    """Uniform cell-centered grid on [-v_max, v_max]^3, n_v cells per axis."""

    v_max: float
    n_v: int

    def __post_init__(self):
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")
        if self.n_v < 2:
            raise ValueError("n_v must be >= 2")

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / self.n_v

    @cached_property
    def centers(self) -> np.ndarray:
        """1D array of cell-center coordinates, shape (n_v,)."""
        i = np.arange(self.n_v)
        return -self.v_max + (i + 0.5) * self.dv

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Component meshes (vx, vy, vz), each of shape (n_v, n_v, n_v)."""
        return np.meshgrid(self.centers, self.centers, self.centers,
                           indexing="ij")

    @cached_property
    def speed_sq(self) -> np.ndarray:
        vx, vy, vz = self.mesh
        return vx * vx + vy * vy + vz * vz

    @cached_property
    def centers_flat(self) -> np.ndarray:
        """All cell centers as one (n_v^3, 3) array, C order."""
        vx, vy, vz = self.mesh
        return np.stack([vx.ravel(), vy.ravel(), vz.ravel()], axis=1)


@dataclass
class TorusGrid:
    """Uniform grid on the unit torus T^3; n_x = 1 is the space-homogeneous mode."""

    n_x: int

    def __post_init__(self):
        if self.n_x < 1:
            raise ValueError("n_x must be >= 1")

    @property
    def dx(self) -> float:
        return 1.0 / self.n_x

    @cached_property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_x) + 0.5) * self.dx


@dataclass
class SphereQuadrature:
    """Angular nodes and weights on S^2; cutoff-free weights sum to 4*pi."""

    nodes: np.ndarray    # (K, 3) unit vectors
    weights: np.ndarray  # (K,)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 3:
            raise ValueError("nodes must have shape (K, 3)")
        if self.weights.shape != (self.nodes.shape[0],):
            raise ValueError("weights must have shape (K,)")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if self.weights.sum() > 4.0 * np.pi + 1e-9:
            raise ValueError("weight sum exceeds sphere area")

    def __len__(self) -> int:
        return self.nodes.shape[0]


def build_sphere_quadrature(order: int) -> SphereQuadrature:
    """Product rule: Gauss-Legendre in the polar cosine x uniform azimuth.

    `order` polar nodes and 2*order azimuthal nodes; the weight sum is 4*pi
    up to rounding. The angular cutoff is applied at kernel evaluation, never
    by renormalizing these weights.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    mu, wmu = np.polynomial.legendre.leggauss(order)
    n_az = 2 * order
    phi = (np.arange(n_az) + 0.5) * (2.0 * np.pi / n_az)
    s = np.sqrt(1.0 - mu ** 2)
    nodes = np.empty((order * n_az, 3))
    weights = np.empty(order * n_az)
    idx = 0
    for i in range(order):
        for j in range(n_az):
            nodes[idx] = (s[i] * np.cos(phi[j]), s[i] * np.sin(phi[j]), mu[i])
            weights[idx] = wmu[i] * (2.0 * np.pi / n_az)
            idx += 1
    return SphereQuadrature(nodes, weights)


def lebedev26() -> SphereQuadrature:
    """Classic 26-point octahedral rule (degree 7): vertices, edge and face points."""
    pts = []
    wts = []
    # 6 octahedron vertices
    for ax in range(3):
        for sgn in (1.0, -1.0):
            p = np.zeros(3)
            p[ax] = sgn
            pts.append(p)
            wts.append(1.0 / 21.0)
    # 12 edge midpoints
    r = 1.0 / np.sqrt(2.0)
    for a in range(3):
        for b in range(a + 1, 3):
            for sa in (1.0, -1.0):
                for sb in (1.0, -1.0):
                    p = np.zeros(3)
                    p[a] = sa * r
                    p[b] = sb * r
                    pts.append(p)
                    wts.append(4.0 / 105.0)
    # 8 cube/face diagonal points
    r = 1.0 / np.sqrt(3.0)
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            for sz in (1.0, -1.0):
                pts.append(np.array([sx * r, sy * r, sz * r]))
                wts.append(27.0 / 840.0)
    return SphereQuadrature(np.array(pts), 4.0 * np.pi * np.array(wts))


@dataclass
class DistributionField:
    """Nonnegative phase-space density on (torus cells) x (velocity cells).

    values has shape (n_x, n_x, n_x, n_v, n_v, n_v), x-major then v.
    Values are implicitly zero outside the velocity cube.
    """

    values: np.ndarray
    vgrid: VelocityGrid
    tgrid: TorusGrid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = (self.tgrid.n_x,) * 3 + (self.vgrid.n_v,) * 3
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape}, expected {expected}")

    def validate(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")
        if np.any(self.values < 0):
            raise ValueError("field contains negative values")

    def copy(self) -> "DistributionField":
        return DistributionField(self.values.copy(), self.vgrid, self.tgrid)

    def linf(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def zeros_like_field(vgrid: VelocityGrid, tgrid: TorusGrid) -> DistributionField:
    shape = (tgrid.n_x,) * 3 + (vgrid.n_v,) * 3
    return DistributionField(np.zeros(shape), vgrid, tgrid)


def field_from_function(func, vgrid: VelocityGrid, tgrid: TorusGrid) -> DistributionField:
    """Sample func(vx, vy, vz) at cell centers, homogeneous in x."""
    vx, vy, vz = vgrid.mesh
    slab = np.asarray(func(vx, vy, vz), dtype=np.float64)
    vals = np.broadcast_to(slab, (tgrid.n_x,) * 3 + slab.shape).copy()
    return DistributionField(vals, vgrid, tgrid)


def trilinear_at(values: np.ndarray, points: np.ndarray, v_max: float) -> np.ndarray:
    """Trilinear interpolation of a (n, n, n) velocity slice at points (m, 3).

    Cell-centered nodes; corner values outside the node hull count as zero,
    and points outside the cube return exactly zero.
    """
    n = values.shape[0]
    dv = 2.0 * v_max / n
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    t = (pts + v_max) / dv - 0.5
    i0 = np.floor(t).astype(np.int64)
    frac = t - i0
    out = np.zeros(pts.shape[0])
    for cx in (0, 1):
        wx = frac[:, 0] if cx else 1.0 - frac[:, 0]
        ix = i0[:, 0] + cx
        for cy in (0, 1):
            wy = frac[:, 1] if cy else 1.0 - frac[:, 1]
            iy = i0[:, 1] + cy
            for cz in (0, 1):
                wz = frac[:, 2] if cz else 1.0 - frac[:, 2]
                iz = i0[:, 2] + cz
                ok = ((ix >= 0) & (ix < n) & (iy >= 0) & (iy < n)
                      & (iz >= 0) & (iz < n))
                w = wx * wy * wz * ok
                vals = values[np.clip(ix, 0, n - 1),
                              np.clip(iy, 0, n - 1),
                              np.clip(iz, 0, n - 1)]
                out += w * vals
    inside = np.all(np.abs(pts) <= v_max, axis=1)
    out *= inside
    return out


def interpolate_velocity(f: DistributionField, x_cell, v) -> float:
    """Trilinear interpolation of the velocity slice at x_cell; 0 outside the cube."""
    slab = f.values[tuple(x_cell)]
    return float(trilinear_at(slab, np.asarray(v, dtype=np.float64)[None, :],
                              f.vgrid.v_max)[0])


def integrate_velocity(f: DistributionField, weight) -> np.ndarray:
    """Midpoint-rule velocity integral of f * weight(v), per x-cell.

    weight is a callable of the three component meshes; returns an array of
    shape (n_x, n_x, n_x).
    """
    vx, vy, vz = f.vgrid.mesh
    w = np.asarray(weight(vx, vy, vz), dtype=np.float64)
    w = np.broadcast_to(w, f.values.shape[3:])
    return np.einsum("abcijk,ijk->abc", f.values, w) * f.vgrid.dv ** 3


def transport_shift(f: DistributionField, dt: float) -> DistributionField:
    """Exact free transport on the torus: g(x, v) = f(x - dt*v, v).

    Spectral (trigonometric) interpolation in x per velocity cell; identity
    for n_x = 1 and for dt = 0.
    """
    if not np.isfinite(dt):
        raise ValueError("dt must be finite")
    nx = f.tgrid.n_x
    if nx == 1 or dt == 0.0:
        return f.copy()
    vals = f.values
    spec = np.fft.fftn(vals, axes=(0, 1, 2))
    k = np.fft.fftfreq(nx, d=1.0 / nx)  # integer wavenumbers
    c = f.vgrid.centers
    # phase exp(-2*pi*i * dt * (kx*vx + ky*vy + kz*vz)) with axes
    # (x0, x1, x2, v0, v1, v2)
    ph = (k[:, None, None, None, None, None] * c[None, None, None, :, None, None]
          + k[None, :, None, None, None, None] * c[None, None, None, None, :, None]
          + k[None, None, :, None, None, None] * c[None, None, None, None, None, :])
    spec = spec * np.exp(-2j * np.pi * dt * ph)
    out = np.fft.ifftn(spec, axes=(0, 1, 2)).real
    return DistributionField(out, f.vgrid, f.tgrid)
