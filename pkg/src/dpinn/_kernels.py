"""Compiled kernels for stacks of narrow networks.

Same mathematics as :func:`dpinn.net.propagate` / :func:`dpinn.net.backpropagate`,
looping cell by cell with the point axis innermost so the small dense
products vectorise.  This beats batched BLAS calls when layers are only a
few neurons wide.

Array layouts: ``x`` is ``(Cx, P, D)`` with ``Cx`` either 1 (shared points)
or ``C``; value ``(C, P, out)``; jac and hess ``(C, P, out, D)``.  The tape
keeps, per cell and hidden layer, the activation ``s`` and the first and
second directional derivatives of the pre-activation, all with points last.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _tanh(z):
    # exp-based: several times cheaper than libm tanh here; absolute error ~2e-16
    e = math.exp(-2.0 * abs(z))
    r = (1.0 - e) / (1.0 + e)
    return r if z >= 0.0 else -r


@njit(cache=True)
def _offsets(sizes):
    n_layers = sizes.shape[0] - 1
    w_off = np.empty(n_layers, np.int64)
    b_off = np.empty(n_layers, np.int64)
    pos = 0
    for k in range(n_layers):
        w_off[k] = pos
        pos += sizes[k] * sizes[k + 1]
        b_off[k] = pos
        pos += sizes[k + 1]
    return w_off, b_off, pos


@njit(cache=True)
def cells_forward(flat, sizes, x, order, n_cells):
    """Values and input derivatives, plus the tape needed by :func:`cells_backward`."""
    w_off, b_off, per = _offsets(sizes)
    n_layers = sizes.shape[0] - 1
    n_hidden = n_layers - 1
    n_dir = sizes[0]
    n_out = sizes[n_layers]
    maxw = sizes.max()
    n_pts = x.shape[1]
    hh = max(n_hidden, 1)
    value = np.empty((n_cells, n_pts, n_out))
    jac = np.zeros((n_cells, n_pts, n_out, n_dir))
    hess = np.zeros((n_cells, n_pts, n_out, n_dir))
    tS = np.empty((n_cells, hh, maxw, n_pts))
    nd1 = n_dir if order >= 1 else 0
    nd2 = n_dir if order >= 2 else 0
    tDZ = np.empty((n_cells, hh, nd1, maxw, n_pts))
    tD2Z = np.empty((n_cells, hh, nd2, maxw, n_pts))
    X = np.empty((n_dir, n_pts))
    dA = np.empty((n_layers, n_dir, maxw, n_pts))
    d2A = np.empty((n_layers, n_dir, maxw, n_pts))
    z = np.empty(n_pts)
    dz = np.empty((n_dir, n_pts))
    d2z = np.empty((n_dir, n_pts))
    shared = x.shape[0] == 1
    for c in range(n_cells):
        base = c * per
        if c == 0 or not shared:
            xc = 0 if shared else c
            for i in range(n_dir):
                for p in range(n_pts):
                    X[i, p] = x[xc, p, i]
        for k in range(n_layers):
            nin = sizes[k]
            nout = sizes[k + 1]
            last = k == n_hidden
            for o in range(nout):
                row = base + w_off[k] + o * nin
                bias = flat[base + b_off[k] + o]
                for p in range(n_pts):
                    z[p] = bias
                for i in range(nin):
                    w = flat[row + i]
                    if k == 0:
                        for p in range(n_pts):
                            z[p] += w * X[i, p]
                    else:
                        for p in range(n_pts):
                            z[p] += w * tS[c, k - 1, i, p]
                for d in range(nd1):
                    if k == 0:
                        w = flat[row + d]
                        for p in range(n_pts):
                            dz[d, p] = w
                    else:
                        for p in range(n_pts):
                            dz[d, p] = 0.0
                        for i in range(nin):
                            w = flat[row + i]
                            for p in range(n_pts):
                                dz[d, p] += w * dA[k, d, i, p]
                for d in range(nd2):
                    for p in range(n_pts):
                        d2z[d, p] = 0.0
                    if k > 0:
                        for i in range(nin):
                            w = flat[row + i]
                            for p in range(n_pts):
                                d2z[d, p] += w * d2A[k, d, i, p]
                if last:
                    for p in range(n_pts):
                        value[c, p, o] = z[p]
                    for d in range(nd1):
                        for p in range(n_pts):
                            jac[c, p, o, d] = dz[d, p]
                    for d in range(nd2):
                        for p in range(n_pts):
                            hess[c, p, o, d] = d2z[d, p]
                else:
                    for p in range(n_pts):
                        tS[c, k, o, p] = _tanh(z[p])
                    for d in range(nd1):
                        for p in range(n_pts):
                            s = tS[c, k, o, p]
                            tDZ[c, k, d, o, p] = dz[d, p]
                            dA[k + 1, d, o, p] = (1.0 - s * s) * dz[d, p]
                    for d in range(nd2):
                        for p in range(n_pts):
                            s = tS[c, k, o, p]
                            s1 = 1.0 - s * s
                            s2 = -2.0 * s * s1
                            tD2Z[c, k, d, o, p] = d2z[d, p]
                            d2A[k + 1, d, o, p] = s2 * dz[d, p] * dz[d, p] + s1 * d2z[d, p]
    return value, jac, hess, tS, tDZ, tD2Z


@njit(cache=True)
def cells_backward(flat, sizes, x, order, n_cells, tS, tDZ, tD2Z, g_value, g_jac, g_hess):
    """Flat, cell-major parameter gradient of a loss with the given adjoints."""
    w_off, b_off, per = _offsets(sizes)
    n_layers = sizes.shape[0] - 1
    n_dir = sizes[0]
    n_out = sizes[n_layers]
    maxw = sizes.max()
    n_pts = x.shape[1]
    nd1 = n_dir if order >= 1 else 0
    nd2 = n_dir if order >= 2 else 0
    grad = np.zeros(n_cells * per)
    A = np.empty((maxw, n_pts))
    dA = np.empty((n_dir, maxw, n_pts))
    d2A = np.empty((n_dir, maxw, n_pts))
    GZ = np.empty((maxw, n_pts))
    GDZ = np.empty((n_dir, maxw, n_pts))
    GD2Z = np.empty((n_dir, maxw, n_pts))
    GA = np.empty((maxw, n_pts))
    GDA = np.empty((n_dir, maxw, n_pts))
    GD2A = np.empty((n_dir, maxw, n_pts))
    shared = x.shape[0] == 1
    for c in range(n_cells):
        base = c * per
        xc = 0 if shared else c
        for o in range(n_out):
            for p in range(n_pts):
                GZ[o, p] = g_value[c, p, o]
            for d in range(nd1):
                for p in range(n_pts):
                    GDZ[d, o, p] = g_jac[c, p, o, d]
            for d in range(nd2):
                for p in range(n_pts):
                    GD2Z[d, o, p] = g_hess[c, p, o, d]
        for k in range(n_layers - 1, -1, -1):
            nin = sizes[k]
            nout = sizes[k + 1]
            wo = base + w_off[k]
            bo = base + b_off[k]
            # inputs of layer k, rebuilt from the tape of layer k-1
            if k == 0:
                for i in range(nin):
                    for p in range(n_pts):
                        A[i, p] = x[xc, p, i]
            else:
                for i in range(nin):
                    for p in range(n_pts):
                        A[i, p] = tS[c, k - 1, i, p]
                    for d in range(nd1):
                        for p in range(n_pts):
                            s = A[i, p]
                            dA[d, i, p] = (1.0 - s * s) * tDZ[c, k - 1, d, i, p]
                    for d in range(nd2):
                        for p in range(n_pts):
                            s = A[i, p]
                            s1 = 1.0 - s * s
                            dzv = tDZ[c, k - 1, d, i, p]
                            d2A[d, i, p] = -2.0 * s * s1 * dzv * dzv + s1 * tD2Z[c, k - 1, d, i, p]
            for o in range(nout):
                row = wo + o * nin
                acc = 0.0
                for p in range(n_pts):
                    acc += GZ[o, p]
                grad[bo + o] += acc
                for i in range(nin):
                    acc = 0.0
                    for p in range(n_pts):
                        acc += GZ[o, p] * A[i, p]
                    if k == 0:
                        if nd1 > 0:
                            for p in range(n_pts):
                                acc += GDZ[i, o, p]
                    else:
                        for d in range(nd1):
                            for p in range(n_pts):
                                acc += GDZ[d, o, p] * dA[d, i, p]
                        for d in range(nd2):
                            for p in range(n_pts):
                                acc += GD2Z[d, o, p] * d2A[d, i, p]
                    grad[row + i] += acc
            if k == 0:
                break
            for i in range(nin):
                for p in range(n_pts):
                    GA[i, p] = 0.0
                for d in range(nd1):
                    for p in range(n_pts):
                        GDA[d, i, p] = 0.0
                for d in range(nd2):
                    for p in range(n_pts):
                        GD2A[d, i, p] = 0.0
                for o in range(nout):
                    w = flat[wo + o * nin + i]
                    for p in range(n_pts):
                        GA[i, p] += w * GZ[o, p]
                    for d in range(nd1):
                        for p in range(n_pts):
                            GDA[d, i, p] += w * GDZ[d, o, p]
                    for d in range(nd2):
                        for p in range(n_pts):
                            GD2A[d, i, p] += w * GD2Z[d, o, p]
            # through the activation of layer k-1
            for i in range(nin):
                for p in range(n_pts):
                    s = A[i, p]
                    GZ[i, p] = GA[i, p] * (1.0 - s * s)
                for d in range(nd1):
                    for p in range(n_pts):
                        s = A[i, p]
                        s1 = 1.0 - s * s
                        s2 = -2.0 * s * s1
                        dzv = tDZ[c, k - 1, d, i, p]
                        GZ[i, p] += GDA[d, i, p] * s2 * dzv
                        GDZ[d, i, p] = GDA[d, i, p] * s1
                for d in range(nd2):
                    for p in range(n_pts):
                        s = A[i, p]
                        s1 = 1.0 - s * s
                        s2 = -2.0 * s * s1
                        s3 = -2.0 * s1 * s1 - 2.0 * s * s2
                        dzv = tDZ[c, k - 1, d, i, p]
                        g2 = GD2A[d, i, p]
                        GZ[i, p] += g2 * (s3 * dzv * dzv + s2 * tD2Z[c, k - 1, d, i, p])
                        GDZ[d, i, p] += 2.0 * g2 * s2 * dzv
                        GD2Z[d, i, p] = g2 * s1
    return grad
