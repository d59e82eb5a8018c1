"""Pure numpy implementations of the hot per-mode and per-point loops.

Same signatures as the compiled ``_ckernels`` module; see ``dnse.kernels``.
Arrays follow the half-spectrum layout ``(3, N, N, N//2 + 1)``.
"""

import numpy as np

NAME = "python"


def _kdot(w, kx, ky, kz):
    return kx[:, None, None] * w[0] + ky[None, :, None] * w[1] + kz[None, None, :] * w[2]


def leray(w, kx, ky, kz, inv_k2, mask, out):
    """out = mask * (w - k (k.w) / |k|^2)."""
    s = _kdot(w, kx, ky, kz) * inv_k2
    out[0] = mask * (w[0] - kx[:, None, None] * s)
    out[1] = mask * (w[1] - ky[None, :, None] * s)
    out[2] = mask * (w[2] - kz[None, None, :] * s)
    return out


def affine_project(u, rhs, a, b, kx, ky, kz, inv_k2, out):
    """out = a * u + b * P(rhs), P the per-mode Leray projector."""
    s = _kdot(rhs, kx, ky, kz) * inv_k2
    out[0] = a * u[0] + b * (rhs[0] - kx[:, None, None] * s)
    out[1] = a * u[1] + b * (rhs[1] - ky[None, :, None] * s)
    out[2] = a * u[2] + b * (rhs[2] - kz[None, None, :] * s)
    return out


def advect(u, g, out):
    """out_i = sum_j u_j g_ij on a physical grid; g[i, j] holds d v_i / d x_j."""
    for i in range(3):
        np.multiply(u[0], g[i, 0], out=out[i])
        out[i] += u[1] * g[i, 1]
        out[i] += u[2] * g[i, 2]
    return out


def weighted_sq_norms(c, w):
    """Per leading index k: sum over components and modes of w * |c|^2."""
    k = c.shape[0]
    sq = c.real**2 + c.imag**2
    return (sq.reshape(k, 3, -1) * w.reshape(1, 1, -1)).sum(axis=(1, 2))
