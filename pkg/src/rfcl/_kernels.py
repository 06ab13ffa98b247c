"""Fused numerical kernels for the per-update hot path.

Plain numpy spends most of an ensemble update in memory-bound elementwise
passes (layer norm, Adam, Polyak). These JIT kernels fuse each of those into
one or two passes. Accumulations run in double precision regardless of the
storage dtype.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def ln_forward(z, g, beta, eps):
    """y = g * (z - mean) / sqrt(var + eps) + beta over the last axis.

    Returns (y, xhat, inv_std); xhat and inv_std feed the backward pass.
    """
    E, B, H = z.shape
    y = np.empty_like(z)
    xhat = np.empty_like(z)
    inv_std = np.empty((E, B), dtype=z.dtype)
    for e in range(E):
        for b in range(B):
            s = 0.0
            s2 = 0.0
            for h in range(H):
                v = float(z[e, b, h])
                s += v
                s2 += v * v
            mu = s / H
            var = s2 / H - mu * mu
            if var < 0.0:
                var = 0.0
            iv = 1.0 / np.sqrt(var + eps)
            inv_std[e, b] = iv
            for h in range(H):
                xh = (float(z[e, b, h]) - mu) * iv
                xhat[e, b, h] = xh
                y[e, b, h] = g[e, 0, h] * xh + beta[e, 0, h]
    return y, xhat, inv_std


@njit(cache=True)
def ln_backward(dy, xhat, inv_std, g):
    """Gradients of the layer-norm transform: returns (dz, dg, dbeta)."""
    E, B, H = dy.shape
    dz = np.empty_like(dy)
    dg = np.zeros((E, 1, H), dtype=dy.dtype)
    dbeta = np.zeros((E, 1, H), dtype=dy.dtype)
    for e in range(E):
        for b in range(B):
            m1 = 0.0
            m2 = 0.0
            for h in range(H):
                dxh = float(dy[e, b, h]) * float(g[e, 0, h])
                m1 += dxh
                m2 += dxh * float(xhat[e, b, h])
            m1 /= H
            m2 /= H
            iv = inv_std[e, b]
            for h in range(H):
                dxh = float(dy[e, b, h]) * float(g[e, 0, h])
                dz[e, b, h] = iv * (dxh - m1 - float(xhat[e, b, h]) * m2)
                dg[e, 0, h] += dy[e, b, h] * xhat[e, b, h]
                dbeta[e, 0, h] += dy[e, b, h]
    return dz, dg, dbeta


@njit(cache=True)
def adam_step(p, grad, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """One fused Adam update on a 3-D parameter array, in place."""
    E, A, B = p.shape
    for e in range(E):
        for a in range(A):
            for b in range(B):
                gi = grad[e, a, b]
                m[e, a, b] += (1.0 - beta1) * (gi - m[e, a, b])
                v[e, a, b] += (1.0 - beta2) * (gi * gi - v[e, a, b])
                p[e, a, b] -= lr * (m[e, a, b] / bc1) / (np.sqrt(v[e, a, b] / bc2) + eps)


@njit(cache=True)
def polyak_step(target, online, tau):
    """target <- (1 - tau) * target + tau * online on a 3-D array, in place."""
    E, A, B = target.shape
    for e in range(E):
        for a in range(A):
            for b in range(B):
                target[e, a, b] += tau * (online[e, a, b] - target[e, a, b])
