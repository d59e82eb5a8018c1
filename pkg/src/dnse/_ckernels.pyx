# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_kernels_py``."""

import numpy as np

NAME = "compiled"


def leray(const double complex[:, :, :, ::1] w, const double[::1] kx, const double[::1] ky, const double[::1] kz,
          const double[:, :, ::1] inv_k2, const double[:, :, ::1] mask, double complex[:, :, :, ::1] out):
    cdef Py_ssize_t i, j, l
    cdef Py_ssize_t n0 = w.shape[1], n1 = w.shape[2], n2 = w.shape[3]
    cdef double k0, k1, k2, sr, si, m
    cdef double complex w0, w1, w2
    with nogil:
        for i in range(n0):
            k0 = kx[i]
            for j in range(n1):
                k1 = ky[j]
                for l in range(n2):
                    m = mask[i, j, l]
                    if m == 0.0:
                        out[0, i, j, l] = 0
                        out[1, i, j, l] = 0
                        out[2, i, j, l] = 0
                        continue
                    k2 = kz[l]
                    w0 = w[0, i, j, l]
                    w1 = w[1, i, j, l]
                    w2 = w[2, i, j, l]
                    # real and imaginary parts kept apart: real*complex products
                    # otherwise go through the checked complex multiply
                    sr = (k0 * w0.real + k1 * w1.real + k2 * w2.real) * inv_k2[i, j, l]
                    si = (k0 * w0.imag + k1 * w1.imag + k2 * w2.imag) * inv_k2[i, j, l]
                    out[0, i, j, l].real = m * (w0.real - k0 * sr)
                    out[0, i, j, l].imag = m * (w0.imag - k0 * si)
                    out[1, i, j, l].real = m * (w1.real - k1 * sr)
                    out[1, i, j, l].imag = m * (w1.imag - k1 * si)
                    out[2, i, j, l].real = m * (w2.real - k2 * sr)
                    out[2, i, j, l].imag = m * (w2.imag - k2 * si)
    return np.asarray(out)


def affine_project(const double complex[:, :, :, ::1] u, const double complex[:, :, :, ::1] rhs,
                   const double[:, :, ::1] a, const double[:, :, ::1] b,
                   const double[::1] kx, const double[::1] ky, const double[::1] kz,
                   const double[:, :, ::1] inv_k2, double complex[:, :, :, ::1] out):
    cdef Py_ssize_t i, j, l
    cdef Py_ssize_t n0 = u.shape[1], n1 = u.shape[2], n2 = u.shape[3]
    cdef double k0, k1, k2, sr, si, aa, bb
    cdef double complex r0, r1, r2, u0, u1, u2
    with nogil:
        for i in range(n0):
            k0 = kx[i]
            for j in range(n1):
                k1 = ky[j]
                for l in range(n2):
                    k2 = kz[l]
                    aa = a[i, j, l]
                    bb = b[i, j, l]
                    r0 = rhs[0, i, j, l]
                    r1 = rhs[1, i, j, l]
                    r2 = rhs[2, i, j, l]
                    u0 = u[0, i, j, l]
                    u1 = u[1, i, j, l]
                    u2 = u[2, i, j, l]
                    sr = (k0 * r0.real + k1 * r1.real + k2 * r2.real) * inv_k2[i, j, l]
                    si = (k0 * r0.imag + k1 * r1.imag + k2 * r2.imag) * inv_k2[i, j, l]
                    out[0, i, j, l].real = aa * u0.real + bb * (r0.real - k0 * sr)
                    out[0, i, j, l].imag = aa * u0.imag + bb * (r0.imag - k0 * si)
                    out[1, i, j, l].real = aa * u1.real + bb * (r1.real - k1 * sr)
                    out[1, i, j, l].imag = aa * u1.imag + bb * (r1.imag - k1 * si)
                    out[2, i, j, l].real = aa * u2.real + bb * (r2.real - k2 * sr)
                    out[2, i, j, l].imag = aa * u2.imag + bb * (r2.imag - k2 * si)
    return np.asarray(out)


def advect(const double[:, :, :, ::1] u, const double[:, :, :, :, ::1] g, double[:, :, :, ::1] out):
    cdef Py_ssize_t c, i, j, l
    cdef Py_ssize_t n0 = u.shape[1], n1 = u.shape[2], n2 = u.shape[3]
    cdef double u0, u1, u2
    with nogil:
        for i in range(n0):
            for j in range(n1):
                for l in range(n2):
                    u0 = u[0, i, j, l]
                    u1 = u[1, i, j, l]
                    u2 = u[2, i, j, l]
                    for c in range(3):
                        out[c, i, j, l] = u0 * g[c, 0, i, j, l] + u1 * g[c, 1, i, j, l] + u2 * g[c, 2, i, j, l]
    return np.asarray(out)


def weighted_sq_norms(c, w):
    cdef Py_ssize_t k = c.shape[0]
    cdef const double complex[:, ::1] cv = np.ascontiguousarray(c).reshape(k, -1)
    cdef const double[::1] wv = np.ascontiguousarray(w).reshape(-1)
    cdef Py_ssize_t m = wv.shape[0]
    cdef Py_ssize_t q, p, comp
    cdef double acc, re, im, ww
    res = np.empty(k, dtype=np.float64)
    cdef double[::1] rv = res
    with nogil:
        for q in range(k):
            acc = 0.0
            for p in range(m):
                ww = wv[p]
                if ww == 0.0:
                    continue
                for comp in range(3):
                    re = cv[q, comp * m + p].real
                    im = cv[q, comp * m + p].imag
                    acc = acc + ww * (re * re + im * im)
            rv[q] = acc
    return res
