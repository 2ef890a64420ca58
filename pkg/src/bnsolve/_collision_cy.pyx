# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernel for the collision gain/loss quadrature.

Constant-form kernels only; the pure-python fallback covers table kernels.

The post-collision points v' = v - ((v - v*) . n) n differ from the grid node
v by a shift that depends only on the integer cell offset i - j and the sphere
node, so the trilinear stencil (base index shift, fractional weights, cube
bounds) is precomputed once per (grid, quadrature, gamma) and the inner loop
reduces to table lookups and gathers. Tables are cached per configuration.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, ceil, fabs

cnp.import_array()

_TABLE_CACHE = {}


def _build_tables(int n, double v_max, double gamma, double[:, ::1] nodes,
                  double[::1] weights):
    """Per (cell offset, node): quadrature weight and both trilinear stencils."""
    cdef int m = 2 * n - 1
    cdef int K = nodes.shape[0]
    cdef double dv = 2.0 * v_max / n
    cdef long max_entries = <long>m * m * m * K

    start_arr = np.zeros(m * m * m + 1, dtype=np.int64)
    w_arr = np.empty(max_entries, dtype=np.float64)
    mi_arr = np.empty((max_entries, 3), dtype=np.int32)
    fri_arr = np.empty((max_entries, 3), dtype=np.float64)
    loi_arr = np.empty((max_entries, 3), dtype=np.int32)
    hii_arr = np.empty((max_entries, 3), dtype=np.int32)
    mj_arr = np.empty((max_entries, 3), dtype=np.int32)
    frj_arr = np.empty((max_entries, 3), dtype=np.float64)
    loj_arr = np.empty((max_entries, 3), dtype=np.int32)
    hij_arr = np.empty((max_entries, 3), dtype=np.int32)

    cdef long[::1] start = start_arr
    cdef double[::1] w = w_arr
    cdef int[:, ::1] mi = mi_arr
    cdef double[:, ::1] fri = fri_arr
    cdef int[:, ::1] loi = loi_arr
    cdef int[:, ::1] hii = hii_arr
    cdef int[:, ::1] mj = mj_arr
    cdef double[:, ::1] frj = frj_arr
    cdef int[:, ::1] loj = loj_arr
    cdef int[:, ::1] hij = hij_arr

    cdef long e = 0
    cdef long off = 0
    cdef int dx, dy, dz, k, a
    cdef double relx, rely, relz, rn2, rn, d, cosang, s, t, mfl

    with nogil:
        for dx in range(-(n - 1), n):
            relx = dx * dv
            for dy in range(-(n - 1), n):
                rely = dy * dv
                for dz in range(-(n - 1), n):
                    relz = dz * dv
                    rn2 = relx * relx + rely * rely + relz * relz
                    if rn2 > 0.0:
                        rn = sqrt(rn2)
                        for k in range(K):
                            d = (relx * nodes[k, 0] + rely * nodes[k, 1]
                                 + relz * nodes[k, 2])
                            cosang = d / rn
                            if fabs(cosang) < gamma or fabs(1.0 - cosang) < gamma:
                                continue
                            w[e] = weights[k]
                            for a in range(3):
                                # shift of v' relative to the i node, in cells
                                s = -d * nodes[k, a] / dv
                                mfl = floor(s)
                                mi[e, a] = <int>mfl
                                fri[e, a] = s - mfl
                                loi[e, a] = <int>ceil(-0.5 - s)
                                hii[e, a] = <int>floor(n - 0.5 - s)
                                # shift of v'* relative to the j node
                                t = d * nodes[k, a] / dv
                                mfl = floor(t)
                                mj[e, a] = <int>mfl
                                frj[e, a] = t - mfl
                                loj[e, a] = <int>ceil(-0.5 - t)
                                hij[e, a] = <int>floor(n - 0.5 - t)
                            e += 1
                    off += 1
                    start[off] = e

    sl = slice(0, e)
    return (start_arr, w_arr[sl].copy(), mi_arr[sl].copy(), fri_arr[sl].copy(),
            loi_arr[sl].copy(), hii_arr[sl].copy(), mj_arr[sl].copy(),
            frj_arr[sl].copy(), loj_arr[sl].copy(), hij_arr[sl].copy())


cdef inline int _imax(int a, int b) nogil:
    return a if a > b else b


cdef inline int _imin(int a, int b) nogil:
    return a if a < b else b




def gain_loss(g_in, h_in, double v_max, double chi_bound, double b0,
              double gamma, nodes_in, weights_in, table=None):
    """Same contract as bnsolve._collision_py.gain_loss (constant kernel only)."""
    if table is not None:
        raise NotImplementedError("compiled kernel handles constant-form kernels only")
    cdef double[:, :, ::1] g = np.ascontiguousarray(g_in, dtype=np.float64)
    cdef double[:, :, ::1] h = np.ascontiguousarray(h_in, dtype=np.float64)
    nodes_arr = np.ascontiguousarray(nodes_in, dtype=np.float64)
    weights_arr = np.ascontiguousarray(weights_in, dtype=np.float64)
    cdef double[:, ::1] nodes = nodes_arr
    cdef double[::1] weights = weights_arr
    cdef int n = g.shape[0]
    cdef int m = 2 * n - 1
    cdef double dv = 2.0 * v_max / n

    key = (n, float(v_max), float(gamma), nodes_arr.tobytes(),
           weights_arr.tobytes())
    tabs = _TABLE_CACHE.get(key)
    if tabs is None:
        tabs = _build_tables(n, v_max, gamma, nodes, weights)
        _TABLE_CACHE[key] = tabs

    cdef long[::1] start = tabs[0]
    cdef double[::1] w = tabs[1]
    cdef int[:, ::1] mi = tabs[2]
    cdef double[:, ::1] fri = tabs[3]
    cdef int[:, ::1] loi = tabs[4]
    cdef int[:, ::1] hii = tabs[5]
    cdef int[:, ::1] mj = tabs[6]
    cdef double[:, ::1] frj = tabs[7]
    cdef int[:, ::1] loj = tabs[8]
    cdef int[:, ::1] hij = tabs[9]

    cdef cnp.ndarray gain_arr = np.zeros((n, n, n), dtype=np.float64)
    cdef cnp.ndarray nu_arr = np.zeros((n, n, n), dtype=np.float64)
    cdef double* gain = <double*>cnp.PyArray_DATA(gain_arr)
    cdef double* nu = <double*>cnp.PyArray_DATA(nu_arr)

    csq_arr = (-v_max + (np.arange(n) + 0.5) * dv) ** 2
    vsq_arr = np.ascontiguousarray(csq_arr[:, None, None] + csq_arr[None, :, None]
                                   + csq_arr[None, None, :])
    cdef double* vsq = <double*>cnp.PyArray_DATA(vsq_arr)
    cdef double* gd = &g[0, 0, 0]
    cdef double* hd = &h[0, 0, 0]

    # Zero halo of one cell: trilinear corners that fall outside the node hull
    # read the halo and contribute nothing, so the sweep below is branch-free.
    gpad_arr = np.zeros((n + 2, n + 2, n + 2), dtype=np.float64)
    hpad_arr = np.zeros((n + 2, n + 2, n + 2), dtype=np.float64)
    gpad_arr[1:-1, 1:-1, 1:-1] = np.asarray(g)
    hpad_arr[1:-1, 1:-1, 1:-1] = np.asarray(h)
    cdef double* gpad = <double*>cnp.PyArray_DATA(gpad_arr)
    cdef double* hpad = <double*>cnp.PyArray_DATA(hpad_arr)
    cdef long ps1 = n + 2
    cdef long ps2 = ps1 * ps1
    cdef long s1 = n
    cdef long s2 = <long>n * n

    cdef int ix, iy, iz, jx, jy, jz, dx, dy, dz, bz, cz
    cdef int xlo, xhi, ylo, yhi, zlo, zhi
    cdef int mix, miy, miz, mjx, mjy, mjz
    cdef long off, e, e1, ibase, jbase
    cdef double we, gp, hp, gq, hq
    cdef double wx0, wx1, wy0, wy1, wz0, wz1, ux0, ux1, uy0, uy1, uz0, uz1
    cdef double wc00, wc01, wc10, wc11, uc00, uc01, uc10, uc11
    cdef double *pg00
    cdef double *pg01
    cdef double *pg10
    cdef double *pg11
    cdef double *ph00
    cdef double *ph01
    cdef double *ph10
    cdef double *ph11
    cdef double *qg00
    cdef double *qg01
    cdef double *qg10
    cdef double *qg11
    cdef double *qh00
    cdef double *qh01
    cdef double *qh10
    cdef double *qh11
    cdef double *grow
    cdef double *hrow
    cdef double *virow
    cdef double *vjrow
    cdef double *gout
    cdef double *nout
    cdef bint bounded = chi_bound < 1e300

    # Offsets outermost: each stencil entry is read once and swept over every
    # admissible cell pair (i, j = i - offset), so all reads in the innermost
    # loop walk the arrays sequentially with constant shifts.
    with nogil:
        off = 0
        for dx in range(-(n - 1), n):
            for dy in range(-(n - 1), n):
                for dz in range(-(n - 1), n):
                    e = start[off]
                    e1 = start[off + 1]
                    off += 1
                    while e < e1:
                        # cell range where both grid points and both
                        # post-collision points live inside the cube
                        xlo = _imax(_imax(0, dx), _imax(loi[e, 0], loj[e, 0] + dx))
                        xhi = _imin(_imin(n - 1, n - 1 + dx),
                                    _imin(hii[e, 0], hij[e, 0] + dx))
                        ylo = _imax(_imax(0, dy), _imax(loi[e, 1], loj[e, 1] + dy))
                        yhi = _imin(_imin(n - 1, n - 1 + dy),
                                    _imin(hii[e, 1], hij[e, 1] + dy))
                        zlo = _imax(_imax(0, dz), _imax(loi[e, 2], loj[e, 2] + dz))
                        zhi = _imin(_imin(n - 1, n - 1 + dz),
                                    _imin(hii[e, 2], hij[e, 2] + dz))
                        if xlo > xhi or ylo > yhi or zlo > zhi:
                            e += 1
                            continue
                        we = w[e]
                        mix = mi[e, 0]; miy = mi[e, 1]; miz = mi[e, 2]
                        mjx = mj[e, 0]; mjy = mj[e, 1]; mjz = mj[e, 2]
                        wx1 = fri[e, 0]; wy1 = fri[e, 1]; wz1 = fri[e, 2]
                        wx0 = 1.0 - wx1; wy0 = 1.0 - wy1; wz0 = 1.0 - wz1
                        ux1 = frj[e, 0]; uy1 = frj[e, 1]; uz1 = frj[e, 2]
                        ux0 = 1.0 - ux1; uy0 = 1.0 - uy1; uz0 = 1.0 - uz1
                        wc00 = wx0 * wy0; wc01 = wx0 * wy1
                        wc10 = wx1 * wy0; wc11 = wx1 * wy1
                        uc00 = ux0 * uy0; uc01 = ux0 * uy1
                        uc10 = ux1 * uy0; uc11 = ux1 * uy1
                        for ix in range(xlo, xhi + 1):
                            jx = ix - dx
                            for iy in range(ylo, yhi + 1):
                                jy = iy - dy
                                ibase = <long>(ix + mix + 1) * ps2 \
                                    + <long>(iy + miy + 1) * ps1
                                pg00 = gpad + ibase
                                pg01 = pg00 + ps1
                                pg10 = pg00 + ps2
                                pg11 = pg10 + ps1
                                ph00 = hpad + ibase
                                ph01 = ph00 + ps1
                                ph10 = ph00 + ps2
                                ph11 = ph10 + ps1
                                jbase = <long>(jx + mjx + 1) * ps2 \
                                    + <long>(jy + mjy + 1) * ps1
                                qg00 = gpad + jbase
                                qg01 = qg00 + ps1
                                qg10 = qg00 + ps2
                                qg11 = qg10 + ps1
                                qh00 = hpad + jbase
                                qh01 = qh00 + ps1
                                qh10 = qh00 + ps2
                                qh11 = qh10 + ps1
                                grow = gd + jx * s2 + jy * s1
                                hrow = hd + jx * s2 + jy * s1
                                virow = vsq + ix * s2 + iy * s1
                                vjrow = vsq + jx * s2 + jy * s1
                                gout = gain + ix * s2 + iy * s1
                                nout = nu + ix * s2 + iy * s1
                                for iz in range(zlo, zhi + 1):
                                    jz = iz - dz
                                    if bounded and (virow[iz] + vjrow[jz]
                                                    > chi_bound):
                                        continue
                                    bz = iz + miz + 1
                                    cz = jz + mjz + 1
                                    gp = (wc00 * (wz0 * pg00[bz] + wz1 * pg00[bz + 1])
                                          + wc01 * (wz0 * pg01[bz] + wz1 * pg01[bz + 1])
                                          + wc10 * (wz0 * pg10[bz] + wz1 * pg10[bz + 1])
                                          + wc11 * (wz0 * pg11[bz] + wz1 * pg11[bz + 1]))
                                    hp = (wc00 * (wz0 * ph00[bz] + wz1 * ph00[bz + 1])
                                          + wc01 * (wz0 * ph01[bz] + wz1 * ph01[bz + 1])
                                          + wc10 * (wz0 * ph10[bz] + wz1 * ph10[bz + 1])
                                          + wc11 * (wz0 * ph11[bz] + wz1 * ph11[bz + 1]))
                                    gq = (uc00 * (uz0 * qg00[cz] + uz1 * qg00[cz + 1])
                                          + uc01 * (uz0 * qg01[cz] + uz1 * qg01[cz + 1])
                                          + uc10 * (uz0 * qg10[cz] + uz1 * qg10[cz + 1])
                                          + uc11 * (uz0 * qg11[cz] + uz1 * qg11[cz + 1]))
                                    hq = (uc00 * (uz0 * qh00[cz] + uz1 * qh00[cz + 1])
                                          + uc01 * (uz0 * qh01[cz] + uz1 * qh01[cz + 1])
                                          + uc10 * (uz0 * qh10[cz] + uz1 * qh10[cz + 1])
                                          + uc11 * (uz0 * qh11[cz] + uz1 * qh11[cz + 1]))
                                    gout[iz] += we * hrow[jz] * gp * gq
                                    nout[iz] += we * grow[jz] * hp * hq
                        e += 1
    gain_arr *= np.asarray(h) * (dv * dv * dv * b0)
    nu_arr *= dv * dv * dv * b0
    return gain_arr, nu_arr
