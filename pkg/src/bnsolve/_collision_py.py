"""Pure-numpy fallback for the collision gain/loss quadrature.

Same contract as the compiled kernel in _collision_cy: given the saturated
fields g = f/(1 + alpha f) and h = (1 + f)/(1 + alpha f) on one velocity
slice, return the gain R_alpha^+ and the loss frequency nu_alpha. This path
also handles table-form kernels, which the compiled kernel does not.
"""

import numpy as np

from .grids import trilinear_at


def gain_loss(g, h, v_max, chi_bound, b0, gamma, nodes, weights, table=None):
    """Quadrature of the gain and loss integrals over (v* cells) x (sphere nodes).

    Returns (gain, nu), both shaped like g:
      gain(v)  = h(v) dv^3 sum_j chi h_j sum_k w_k B g(v') g(v'*)
      nu(v)    =      dv^3 sum_j chi g_j sum_k w_k B h(v') h(v'*)
    with v', v'* the elastic post-collision velocities and off-grid values by
    trilinear interpolation.
    """
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    n = g.shape[0]
    dv = 2.0 * v_max / n
    c = -v_max + (np.arange(n) + 0.5) * dv
    vx, vy, vz = np.meshgrid(c, c, c, indexing="ij")
    V = np.stack([vx.ravel(), vy.ravel(), vz.ravel()], axis=1)
    vsq = np.sum(V * V, axis=1)
    n3 = V.shape[0]

    gf = g.ravel()
    hf = h.ravel()
    gain_acc = np.zeros(n3)
    nu_acc = np.zeros(n3)

    for j in range(n3):
        mask = vsq + vsq[j] <= chi_bound
        mask[j] = False  # coincident velocities: B defined as 0
        sel = np.nonzero(mask)[0]
        if sel.size == 0:
            continue
        rel = V[sel] - V[j]
        rnorm = np.sqrt(np.sum(rel * rel, axis=1))
        sub_gain = np.zeros(sel.size)
        sub_nu = np.zeros(sel.size)
        for k in range(nodes.shape[0]):
            nk = nodes[k]
            d = rel @ nk
            cos = d / rnorm
            band = (np.abs(cos) >= gamma) & (np.abs(1.0 - cos) >= gamma)
            if not np.any(band):
                continue
            if table is None:
                B = np.where(band, b0, 0.0)
            else:
                B = np.where(band,
                             np.clip(np.asarray(table(rnorm, cos),
                                                dtype=np.float64), 0.0, b0),
                             0.0)
            vp = V[sel] - d[:, None] * nk
            vps = V[j] + d[:, None] * nk
            gp = trilinear_at(g, vp, v_max)
            gps = trilinear_at(g, vps, v_max)
            hp = trilinear_at(h, vp, v_max)
            hps = trilinear_at(h, vps, v_max)
            wB = weights[k] * B
            sub_gain += wB * gp * gps
            sub_nu += wB * hp * hps
        gain_acc[sel] += hf[j] * sub_gain
        nu_acc[sel] += gf[j] * sub_nu

    gain = (hf * gain_acc * dv ** 3).reshape(g.shape)
    nu = (nu_acc * dv ** 3).reshape(g.shape)
    return gain, nu
