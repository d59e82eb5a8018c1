"""Convective term: trilinear form, projected bilinear operator, constant estimates.

Products are formed on a ``3N/2`` physical grid and truncated back, which
removes all aliasing from quadratic terms on the retained modes. The
trilinear form uses the same normalization as the Fourier pairing,
``b(u, v, w) = L^-3 int (u.grad) v . w dx``, so ``b(u, v, w) = (B(u, v), w)_0``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np
import scipy.fft

from . import kernels
from .errors import DomainError, GridMismatchError
from .parallel import fft_workers
from .spectral import (
    SpectralField,
    TorusGrid,
    hermitianize,
    leray_project,
    random_field,
    sobolev_norm,
    stokes_apply,
    to_physical,
    truncate,
)


def _gradient(c: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Spectral gradient ``g[i, j] = i zeta_j c_i`` of a coefficient array."""
    kx, ky, kz = grid.kvec
    g = np.empty((3, 3) + c.shape[1:], dtype=np.complex128)
    g[:, 0] = 1j * kx[:, None, None] * c
    g[:, 1] = 1j * ky[None, :, None] * c
    g[:, 2] = 1j * kz[None, None, :] * c
    return g


def _to_spectral(phys: np.ndarray, grid: TorusGrid) -> np.ndarray:
    n = phys.shape[-1]
    C = scipy.fft.rfftn(phys, axes=(-3, -2, -1), norm="forward", workers=fft_workers())
    raw = truncate(C, grid, n)
    raw *= grid.mask
    return hermitianize(raw, grid)


def advection_raw(a: np.ndarray, b: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Unprojected, dealiased coefficients of ``(a . grad) b`` for coefficient arrays ``a``, ``b``."""
    n = grid.padded
    stack = np.concatenate([a[None], _gradient(b, grid)], axis=0).reshape((12,) + grid.shape[1:])
    phys = to_physical(stack, grid, n)
    out = np.empty((3, n, n, n))
    kernels.active().advect(
        np.ascontiguousarray(phys[:3]), np.ascontiguousarray(phys[3:].reshape(3, 3, n, n, n)), out
    )
    return _to_spectral(out, grid)


def _check_grid(*fields: SpectralField) -> TorusGrid:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError(f"grid mismatch: {g} vs {f.grid}")
    return g


def convect(u: SpectralField, v: SpectralField) -> SpectralField:
    """``B(u, v)``: Leray projection of ``(u . grad) v``."""
    g = _check_grid(u, v)
    if u.is_zero() or v.is_zero():
        return SpectralField.zeros(g)
    return leray_project(advection_raw(u.coeffs, v.coeffs, g), g)


def convect_unprojected(u: SpectralField, v: SpectralField) -> np.ndarray:
    """Raw coefficient array of ``(u . grad) v`` (not divergence-free in general)."""
    g = _check_grid(u, v)
    return advection_raw(u.coeffs, v.coeffs, g)


def trilinear(u: SpectralField, v: SpectralField, w: SpectralField, projected: bool = False) -> float:
    """``b(u, v, w)``, paired in the Fourier ``s = 0`` inner product.

    ``projected=True`` pairs ``B(u, v)`` instead of the raw product; both agree
    because ``w`` is divergence-free.
    """
    g = _check_grid(u, v, w)
    raw = advection_raw(u.coeffs, v.coeffs, g)
    if projected:
        raw = leray_project(raw, g).coeffs
    return float(np.sum(g.multiplicity * np.real(raw * np.conj(w.coeffs))))


def _dual_in_u(v: SpectralField, w: SpectralField) -> SpectralField:
    """``G`` with ``b(u, v, w) = (u, G)_0`` for every divergence-free ``u``: ``G_j = P sum_i w_i d_j v_i``."""
    g = v.grid
    n = g.padded
    stack = np.concatenate([w.coeffs[None], _gradient(v.coeffs, g)], axis=0).reshape((12,) + g.shape[1:])
    phys = to_physical(stack, g, n)
    grad_t = np.ascontiguousarray(phys[3:].reshape(3, 3, n, n, n).transpose(1, 0, 2, 3, 4))
    out = np.empty((3, n, n, n))
    kernels.active().advect(np.ascontiguousarray(phys[:3]), grad_t, out)
    return leray_project(_to_spectral(out, g), g)


def _unit(u: SpectralField, s: float) -> SpectralField:
    n = sobolev_norm(u, s)
    return u if n == 0.0 else u * (1.0 / n)


@dataclass(frozen=True)
class ExponentTriple:
    """Sobolev exponents ``(s1, s2, s3)`` for ``|b| <= c |u|_s1 |v|_(s2+1) |w|_s3``."""

    s1: float
    s2: float
    s3: float

    @property
    def admissible(self) -> bool:
        s = (self.s1, self.s2, self.s3)
        pairs = [s[0] + s[1], s[0] + s[2], s[1] + s[2]]
        total = sum(s)
        eps = 1e-12
        weak = all(p >= -eps for p in pairs) and total > 1.5 + eps
        strict = all(p > eps for p in pairs) and total >= 1.5 - eps
        return weak or strict

    def ratio(self, u: SpectralField, v: SpectralField, w: SpectralField, b: float | None = None) -> float:
        if b is None:
            b = trilinear(u, v, w)
        den = sobolev_norm(u, self.s1) * sobolev_norm(v, self.s2 + 1) * sobolev_norm(w, self.s3)
        return 0.0 if den == 0.0 else abs(b) / den

    @classmethod
    def ball(cls, alpha: float) -> ExponentTriple:
        """Triple used for the invariant-ball energy estimate."""
        return cls(1 + alpha, alpha, -alpha)

    @classmethod
    def contraction(cls, alpha: float) -> ExponentTriple:
        """Triple used for the difference (contraction) estimate."""
        return cls(1 + alpha, alpha - 1, 1 - alpha)


@dataclass
class TrilinearConstant:
    triple: ExponentTriple
    c: float
    samples: int = 0
    history: list[float] = field(default_factory=list, repr=False)


def estimate_trilinear_constant(
    triple: ExponentTriple,
    budget: int,
    seed: int,
    grid: TorusGrid | None = None,
    refine_top: int = 3,
    refine_sweeps: int = 60,
    refine_rtol: float = 1e-4,
    log: TextIO | None = None,
) -> TrilinearConstant:
    """Lower bound on the sharp constant for ``triple`` on ``grid``.

    ``budget`` random triples with power-law spectra (decay exponents drawn in
    ``[0, 5]``) are probed; the ``refine_top`` best are then improved by
    block-coordinate ascent, replacing one argument at a time by the exact
    maximizer of the ratio with the other two fixed, until a sweep gains less
    than ``refine_rtol`` relatively. The returned ``c`` is the largest ratio
    seen. ``log`` receives CSV rows ``sample,ratio,running_max``.
    """
    if not triple.admissible:
        raise DomainError(f"exponent triple {triple} is outside the admissible region")
    if budget < 0:
        raise DomainError("budget must be nonnegative")
    grid = TorusGrid(16) if grid is None else grid
    rng = np.random.default_rng(seed)
    writer = csv.writer(log) if log is not None else None
    if writer is not None:
        writer.writerow(["sample", "ratio", "running_max"])
    history: list[float] = []
    best = 0.0

    def record(r: float) -> None:
        nonlocal best
        best = max(best, r)
        history.append(r)
        if writer is not None:
            writer.writerow([len(history) - 1, repr(r), repr(best)])

    if budget == 0:
        return TrilinearConstant(triple, 0.0, 0, history)

    probes = []
    for _ in range(budget):
        gam = rng.uniform(0.0, 5.0, size=3)
        u, v, w = (random_field(grid, rng, decay=gm) for gm in gam)
        r = triple.ratio(u, v, w)
        record(r)
        probes.append((r, u, v, w))

    probes.sort(key=lambda p: -p[0])
    for _, u, v, w in probes[:refine_top]:
        prev = 0.0
        for _ in range(refine_sweeps):
            bw = convect(u, v)
            if bw.is_zero():
                break
            w = _unit(stokes_apply(bw, -triple.s3), triple.s3)
            record(triple.ratio(u, v, w))
            gu = _dual_in_u(v, w)
            if gu.is_zero():
                break
            u = _unit(stokes_apply(gu, -triple.s1), triple.s1)
            record(triple.ratio(u, v, w))
            gv = convect(u, w)
            if gv.is_zero():
                break
            v = _unit(stokes_apply(-gv, -(triple.s2 + 1)), triple.s2 + 1)
            r = triple.ratio(u, v, w)
            record(r)
            if r <= prev * (1.0 + refine_rtol):
                break
            prev = r
    return TrilinearConstant(triple, best, len(history), history)
