"""Divergence-free Fourier fields on the periodic cube.

Storage is the half spectrum produced by ``rfftn``: coefficient arrays have
shape ``(3, N, N, N//2 + 1)`` and the conjugate partner of every mode with
``k3 > 0`` is implicit. The ``k3 = 0`` plane holds both partners explicitly
and is re-symmetrized after every nonlinear operation (:func:`hermitianize`).

Retained wavenumbers are ``zeta = 2*pi*k/L`` with ``0 < max|k_i| <= N/2 - 1``;
the zero mode and the Nyquist planes carry no degrees of freedom.
Coefficients are Fourier coefficients, ``u(x) = sum_zeta u_hat(zeta) e^{i zeta.x}``.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import BinaryIO, Mapping, Sequence

import numpy as np
import scipy.fft

from . import kernels
from .errors import DomainError, GridMismatchError
from .parallel import fft_workers

TWO_PI = 2.0 * np.pi
_DEBUG = os.environ.get("DNSE_DEBUG", "") not in ("", "0")


@dataclass(frozen=True)
class TorusGrid:
    """Fourier truncation of the torus of side ``L`` with ``N`` modes per axis."""

    N: int
    L: float = TWO_PI

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 4 or self.N % 2:
            raise DomainError(f"N must be an even integer >= 4, got {self.N}")
        if not (self.L > 0 and np.isfinite(self.L)):
            raise DomainError(f"L must be positive and finite, got {self.L}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "L", float(self.L))

    @property
    def nh(self) -> int:
        return self.N // 2 + 1

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (3, self.N, self.N, self.nh)

    @property
    def padded(self) -> int:
        """Physical grid size used for dealiased products (3/2 rule)."""
        return 3 * self.N // 2

    @property
    def lambda1(self) -> float:
        return (TWO_PI / self.L) ** 2

    @cached_property
    def kint(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = np.fft.fftfreq(self.N, 1.0 / self.N).astype(np.int64)
        return k, k.copy(), np.arange(self.nh, dtype=np.int64)

    @cached_property
    def kvec(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        scale = TWO_PI / self.L
        return tuple(np.ascontiguousarray(scale * k.astype(np.float64)) for k in self.kint)

    @cached_property
    def mask(self) -> np.ndarray:
        k0, k1, k2 = self.kint
        h = self.N // 2
        keep = (
            (np.abs(k0)[:, None, None] < h)
            & (np.abs(k1)[None, :, None] < h)
            & (k2[None, None, :] < h)
        )
        keep[0, 0, 0] = False
        return _readonly(keep.astype(np.float64))

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky, kz = self.kvec
        return _readonly(kx[:, None, None] ** 2 + ky[None, :, None] ** 2 + kz[None, None, :] ** 2)

    @cached_property
    def inv_k2(self) -> np.ndarray:
        out = np.zeros_like(self.k2)
        m = self.mask > 0
        out[m] = 1.0 / self.k2[m]
        return _readonly(out)

    @cached_property
    def multiplicity(self) -> np.ndarray:
        """How many full-spectrum modes each stored entry stands for (0, 1 or 2)."""
        mult = np.where(self.kint[2][None, None, :] == 0, 1.0, 2.0) * self.mask
        return _readonly(mult)

    @cached_property
    def _weights(self) -> dict:
        return {}

    def sobolev_weight(self, s: float) -> np.ndarray:
        """``multiplicity * |zeta|^(2s)``, zero off the retained set."""
        s = float(s)
        w = self._weights.get(s)
        if w is None:
            m = self.mask > 0
            w = np.zeros_like(self.k2)
            w[m] = self.k2[m] ** s
            w *= self.multiplicity
            w = _readonly(w)
            self._weights[s] = w
        return w

    def stokes_symbol(self, p: float) -> np.ndarray:
        """``|zeta|^(2p)`` on retained modes, zero elsewhere."""
        m = self.mask > 0
        out = np.zeros_like(self.k2)
        out[m] = self.k2[m] ** float(p)
        return out

    @cached_property
    def n_retained(self) -> int:
        """Number of retained full-spectrum wavenumbers."""
        return (self.N - 1) ** 3 - 1

    @cached_property
    def _neg(self) -> np.ndarray:
        return (-np.arange(self.N)) % self.N

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=np.complex128)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def hermitianize(c: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Enforce ``c(-zeta) = conj c(zeta)`` on the explicitly stored ``k3 = 0`` plane, in place.

    Works on any array whose last three axes are the half spectrum.
    """
    neg = grid._neg
    plane = c[..., 0]
    mirrored = np.conj(plane[..., neg, :][..., neg])
    c[..., 0] = 0.5 * (plane + mirrored)
    return c


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Divergence-free, zero-mean, real vector field given by its Fourier coefficients.

    Takes ownership of ``coeffs``: the array is made read-only on construction.
    """

    grid: TorusGrid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = self.coeffs
        if c.shape != self.grid.shape:
            raise GridMismatchError(f"coefficient shape {c.shape} does not match grid shape {self.grid.shape}")
        c = np.ascontiguousarray(c, dtype=np.complex128)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        if _DEBUG:
            check_invariants(self)

    @classmethod
    def zeros(cls, grid: TorusGrid) -> SpectralField:
        return cls(grid, grid.zeros())

    @classmethod
    def from_modes(cls, grid: TorusGrid, modes: Mapping[Sequence[int], Sequence[complex]]) -> SpectralField:
        """Build a field from ``{k: amplitude 3-vector}``; conjugate partners are added.

        Modes are Leray projected; pass divergence-free amplitudes to keep them as given.
        """
        c = grid.zeros()
        h = grid.N // 2
        for k, amp in modes.items():
            k = tuple(int(x) for x in k)
            if k == (0, 0, 0) or max(abs(x) for x in k) >= h:
                raise DomainError(f"wavenumber {k} is not retained on a grid with N={grid.N}")
            amp = np.asarray(amp, dtype=np.complex128)
            if k[2] < 0 or (k[2] == 0 and (k[1] < 0 or (k[1] == 0 and k[0] < 0))):
                k = (-k[0], -k[1], -k[2])
                amp = np.conj(amp)
            i, j, l = k[0] % grid.N, k[1] % grid.N, k[2]
            c[:, i, j, l] += amp
            if l == 0:
                c[:, (-k[0]) % grid.N, (-k[1]) % grid.N, 0] += np.conj(amp)
        return leray_project(c, grid)

    @classmethod
    def from_physical(cls, grid: TorusGrid, u: np.ndarray) -> SpectralField:
        """Project a real ``(3, n, n, n)`` sampled field (n >= N) onto the retained modes."""
        n = u.shape[-1]
        if u.shape != (3, n, n, n) or n < grid.N:
            raise GridMismatchError(f"physical field must have shape (3, n, n, n) with n >= {grid.N}")
        C = scipy.fft.rfftn(u, axes=(1, 2, 3), norm="forward", workers=fft_workers())
        return leray_project(truncate(C, grid, n), grid)

    def to_physical(self, n: int | None = None) -> np.ndarray:
        n = self.grid.N if n is None else n
        return to_physical(self.coeffs, self.grid, n)

    def __add__(self, other: SpectralField) -> SpectralField:
        _same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: SpectralField) -> SpectralField:
        _same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> SpectralField:
        return SpectralField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> SpectralField:
        return SpectralField(self.grid, -self.coeffs)

    def is_zero(self) -> bool:
        return not self.coeffs.any()


def _same_grid(*fields) -> TorusGrid:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError(f"grid mismatch: {g} vs {f.grid}")
    return g


def pad(c: np.ndarray, grid: TorusGrid, n: int) -> np.ndarray:
    """Zero-pad half-spectrum coefficients (leading axes preserved) to an ``n``-point grid."""
    h = grid.N // 2
    out = np.zeros(c.shape[:-3] + (n, n, n // 2 + 1), dtype=np.complex128)
    lo, hi = slice(0, h), slice(h + 1, grid.N)
    nhi = slice(n - h + 1, n)
    out[..., lo, lo, lo] = c[..., lo, lo, lo]
    out[..., lo, nhi, lo] = c[..., lo, hi, lo]
    out[..., nhi, lo, lo] = c[..., hi, lo, lo]
    out[..., nhi, nhi, lo] = c[..., hi, hi, lo]
    return out


def truncate(C: np.ndarray, grid: TorusGrid, n: int) -> np.ndarray:
    """Inverse of :func:`pad`: keep the retained wavenumbers of an ``n``-grid half spectrum."""
    h = grid.N // 2
    out = np.zeros(C.shape[:-3] + (grid.N, grid.N, grid.nh), dtype=np.complex128)
    lo, hi = slice(0, h), slice(h + 1, grid.N)
    nhi = slice(n - h + 1, n)
    out[..., lo, lo, lo] = C[..., lo, lo, lo]
    out[..., lo, hi, lo] = C[..., lo, nhi, lo]
    out[..., hi, lo, lo] = C[..., nhi, lo, lo]
    out[..., hi, hi, lo] = C[..., nhi, nhi, lo]
    return out


def to_physical(c: np.ndarray, grid: TorusGrid, n: int) -> np.ndarray:
    """Real samples at ``x_j = j L / n`` of half-spectrum coefficients (leading axes preserved)."""
    if n < grid.N:
        raise DomainError(f"physical grid n={n} must be >= N={grid.N}")
    P = pad(c, grid, n)
    return scipy.fft.irfftn(P, s=(n, n, n), axes=(-3, -2, -1), norm="forward", workers=fft_workers())


def sobolev_norm(u: SpectralField, s: float) -> float:
    """Homogeneous norm ``(sum_zeta |zeta|^(2s) |u_hat(zeta)|^2)^(1/2)`` over the full spectrum."""
    w = u.grid.sobolev_weight(s)
    return float(np.sqrt(kernels.active().weighted_sq_norms(u.coeffs[None], w)[0]))


def sobolev_norms_sq(coeffs: np.ndarray, grid: TorusGrid, s: float) -> np.ndarray:
    """Squared norms of a stack ``(K, 3, N, N, nh)`` of coefficient arrays."""
    return kernels.active().weighted_sq_norms(coeffs, grid.sobolev_weight(s))


def inner_product(u: SpectralField, v: SpectralField, s: float) -> float:
    """``(u, v)_s = sum_zeta |zeta|^(2s) u_hat(zeta) conj(v_hat(zeta))``; real by conjugate symmetry."""
    g = _same_grid(u, v)
    w = g.sobolev_weight(s)
    return float(np.sum(w * np.real(u.coeffs * np.conj(v.coeffs))))


def stokes_apply(u: SpectralField, p: float) -> SpectralField:
    """``A^p u``: each coefficient times ``|zeta|^(2p)``."""
    return SpectralField(u.grid, u.coeffs * u.grid.stokes_symbol(p))


def leray_project(w: np.ndarray | SpectralField, grid: TorusGrid | None = None) -> SpectralField:
    """Remove the component of each mode parallel to its wavenumber."""
    if isinstance(w, SpectralField):
        grid, w = w.grid, w.coeffs
    if grid is None:
        raise GridMismatchError("a grid is required to project a raw coefficient array")
    if w.shape != grid.shape:
        raise GridMismatchError(f"raw field shape {w.shape} does not match grid shape {grid.shape}")
    kx, ky, kz = grid.kvec
    out = np.empty(grid.shape, dtype=np.complex128)
    kernels.active().leray(np.ascontiguousarray(w, dtype=np.complex128), kx, ky, kz, grid.inv_k2, grid.mask, out)
    return SpectralField(grid, out)


def divergence_defect(u: SpectralField) -> float:
    """``max |zeta . u_hat| / max |zeta| |u_hat|``; 0 for the zero field."""
    kx, ky, kz = u.grid.kvec
    c = u.coeffs
    div = kx[:, None, None] * c[0] + ky[None, :, None] * c[1] + kz[None, None, :] * c[2]
    scale = np.max(np.sqrt(u.grid.k2) * np.sqrt(np.sum(np.abs(c) ** 2, axis=0)))
    return 0.0 if scale == 0 else float(np.max(np.abs(div)) / scale)


def reality_defect(u: SpectralField) -> float:
    """Largest ``|c(-zeta) - conj c(zeta)|`` on the stored ``k3 = 0`` plane, relative to ``max |c|``."""
    neg = u.grid._neg
    plane = u.coeffs[..., 0]
    mirrored = np.conj(plane[:, neg][:, :, neg])
    scale = np.max(np.abs(u.coeffs))
    return 0.0 if scale == 0 else float(np.max(np.abs(plane - mirrored)) / scale)


def support_defect(u: SpectralField) -> float:
    """Largest coefficient magnitude on non-retained modes (zero mode, Nyquist planes)."""
    off = u.coeffs * (1.0 - u.grid.mask)
    return float(np.max(np.abs(off)))


def check_invariants(u: SpectralField, tol: float = 1e-12) -> None:
    """Raise ``AssertionError`` when a field breaks reality, incompressibility or zero mean."""
    d, r, z = divergence_defect(u), reality_defect(u), support_defect(u)
    if d > tol or r > tol or z != 0.0:
        raise AssertionError(f"field invariants violated: divergence {d:.3e}, reality {r:.3e}, support {z:.3e}")


def random_field(
    grid: TorusGrid,
    rng: np.random.Generator,
    decay: float = 3.0,
    norm: float | None = None,
    s: float = 0.0,
) -> SpectralField:
    """Random field with amplitudes ``~ |zeta|^(-decay)`` and uniform random phases.

    When ``norm`` is given the field is rescaled so that ``sobolev_norm(., s) == norm``.
    """
    amp = np.zeros_like(grid.k2)
    m = grid.mask > 0
    amp[m] = grid.k2[m] ** (-0.5 * decay)
    c = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * amp
    hermitianize(c, grid)
    u = leray_project(c, grid)
    if norm is not None:
        u = rescale(u, norm, s)
    return u


def rescale(u: SpectralField, norm: float, s: float) -> SpectralField:
    cur = sobolev_norm(u, s)
    if cur == 0.0:
        if norm == 0.0:
            return u
        raise DomainError("cannot rescale the zero field to a nonzero norm")
    return SpectralField(u.grid, u.coeffs * (norm / cur))


# --- snapshot files -----------------------------------------------------------

SNAPSHOT_MAGIC = b"DNS1"
SNAPSHOT_VERSION = 1


def _lexicographic_index(grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
    """Retained k in lexicographic order and, per k, whether it is stored conjugated."""
    h = grid.N // 2
    r = np.arange(-h + 1, h)
    k = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    k = k[np.any(k != 0, axis=1)]
    return k, k[:, 2] < 0


def _full_spectrum(u: SpectralField) -> np.ndarray:
    k, conj = _lexicographic_index(u.grid)
    ks = np.where(conj[:, None], -k, k)
    vals = u.coeffs[:, ks[:, 0] % u.grid.N, ks[:, 1] % u.grid.N, ks[:, 2]].T
    return np.where(conj[:, None], np.conj(vals), vals)


def save_snapshot(u: SpectralField, fh: BinaryIO) -> None:
    """Write ``u`` in the little-endian ``DNS1`` snapshot layout."""
    fh.write(SNAPSHOT_MAGIC)
    fh.write(struct.pack("<IId", SNAPSHOT_VERSION, u.grid.N, u.grid.L))
    vals = _full_spectrum(u)
    fh.write(np.ascontiguousarray(vals).view(np.float64).astype("<f8").tobytes())


def load_snapshot(fh: BinaryIO) -> SpectralField:
    head = fh.read(4)
    if head != SNAPSHOT_MAGIC:
        raise DomainError(f"not a DNS1 snapshot (magic {head!r})")
    version, N, L = struct.unpack("<IId", fh.read(16))
    if version != SNAPSHOT_VERSION:
        raise DomainError(f"unsupported snapshot version {version}")
    grid = TorusGrid(N, L)
    k, conj = _lexicographic_index(grid)
    raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != 6 * len(k):
        raise DomainError(f"snapshot payload has {raw.size} doubles, expected {6 * len(k)}")
    vals = raw.astype(np.float64).view(np.complex128).reshape(-1, 3)
    c = grid.zeros()
    keep = ~conj
    kk = k[keep]
    c[:, kk[:, 0] % N, kk[:, 1] % N, kk[:, 2]] = vals[keep].T
    return SpectralField(grid, c)
