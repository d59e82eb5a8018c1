"""Linearized solve on one delay interval.

Integrates ``du/dt + nu A u + B(psi(t), u) = f`` on ``[0, mu]`` with the
diffusive part treated exactly (``etd1``) or implicitly (``imex_euler``) and
the convective part frozen at the left end of each substep. The substep grid
coincides with the sample grid of the convecting segment, so ``psi(t_j)`` is
always a stored sample.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from . import kernels
from .errors import DomainError, GridMismatchError, IntegrationError
from .nonlinear import advection_raw
from .spectral import SpectralField, TorusGrid, sobolev_norm, sobolev_norms_sq

SCHEMES = ("etd1", "imex_euler")


@dataclass(frozen=True)
class StepScheme:
    kind: str = "etd1"
    substeps: int = 64

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise DomainError(f"unknown scheme {self.kind!r}; expected one of {SCHEMES}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise DomainError(f"substeps must be a positive integer, got {self.substeps}")


@dataclass(frozen=True, eq=False)
class Segment:
    """Trajectory sampled at ``t0 + j mu / M``, ``j = 0..M``.

    ``samples`` has shape ``(M + 1, 3, N, N, N//2 + 1)`` and is made read-only.
    """

    grid: TorusGrid
    mu: float
    samples: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        s = self.samples
        if s.ndim != 5 or s.shape[1:] != self.grid.shape or s.shape[0] < 2:
            raise GridMismatchError(
                f"segment samples must have shape (M+1, *{self.grid.shape}) with M >= 1, got {s.shape}"
            )
        if not self.mu > 0:
            raise DomainError(f"segment length mu must be positive, got {self.mu}")
        s = np.ascontiguousarray(s, dtype=np.complex128)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def M(self) -> int:
        return self.samples.shape[0] - 1

    @property
    def dt(self) -> float:
        return self.mu / self.M

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.M + 1)

    def __getitem__(self, j: int) -> SpectralField:
        return SpectralField(self.grid, self.samples[j])

    @classmethod
    def zeros(cls, grid: TorusGrid, mu: float, M: int, t0: float = 0.0) -> Segment:
        return cls(grid, mu, np.zeros((M + 1,) + grid.shape, dtype=np.complex128), t0)

    @classmethod
    def constant(cls, v: SpectralField, mu: float, M: int, t0: float = 0.0) -> Segment:
        return cls(v.grid, mu, np.broadcast_to(v.coeffs, (M + 1,) + v.grid.shape).copy(), t0)

    def sample_norms_sq(self, s: float) -> np.ndarray:
        return sobolev_norms_sq(self.samples, self.grid, s)

    def l2_norm_sq(self, s: float) -> float:
        """Composite trapezoid approximation of ``int ||seg(t)||_s^2 dt``."""
        return trapezoid(self.sample_norms_sq(s), self.dt)

    def relabel(self, t0: float) -> Segment:
        """Same samples on a shifted time axis (shares the coefficient buffer)."""
        return Segment(self.grid, self.mu, self.samples, t0)


def trapezoid(values: np.ndarray, dt: float) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(dt * (v.sum() - 0.5 * (v[0] + v[-1])))


def propagators(grid: TorusGrid, nu: float, dt: float, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode ``(a, b)`` with ``u_next = a u + b P(rhs)``; both vanish off the retained set."""
    lam = nu * grid.k2
    m = grid.mask > 0
    a = np.zeros_like(lam)
    b = np.zeros_like(lam)
    if kind == "etd1":
        a[m] = np.exp(-dt * lam[m])
        b[m] = -np.expm1(-dt * lam[m]) / lam[m]
    elif kind == "imex_euler":
        a[m] = 1.0 / (1.0 + dt * lam[m])
        b[m] = dt * a[m]
    else:
        raise DomainError(f"unknown scheme {kind!r}")
    return a, b


def solve_interval(
    psi: Segment,
    u0: SpectralField,
    f: SpectralField,
    nu: float,
    scheme: StepScheme,
    trace: TextIO | None = None,
    alpha: float = 1.0,
) -> Segment:
    """Solve the linearized equation on ``[0, mu]`` with convecting segment ``psi``.

    Returns the ``M + 1`` samples of ``u`` (``u(0) = u0``) on the time axis
    ``[0, mu]``. ``trace`` receives CSV rows ``t,norm_alpha,norm_1+alpha`` per sample.
    """
    grid = psi.grid
    if u0.grid != grid or f.grid != grid:
        raise GridMismatchError("psi, u0 and f must share one grid")
    if psi.M != scheme.substeps:
        raise DomainError(f"segment has {psi.M} substeps but the scheme uses {scheme.substeps}")
    if not nu > 0:
        raise DomainError(f"viscosity must be positive, got {nu}")

    M, dt = psi.M, psi.dt
    a, b = propagators(grid, nu, dt, scheme.kind)
    kx, ky, kz = grid.kvec
    inv_k2 = grid.inv_k2
    k = kernels.active()
    fc = f.coeffs
    out = np.empty((M + 1,) + grid.shape, dtype=np.complex128)
    out[0] = u0.coeffs
    for j in range(M):
        pj = psi.samples[j]
        if pj.any():
            rhs = fc - advection_raw(pj, out[j], grid)
        else:
            rhs = fc
        k.affine_project(out[j], rhs, a, b, kx, ky, kz, inv_k2, out[j + 1])
        if not np.isfinite(out[j + 1]).all():
            raise IntegrationError("non-finite coefficients in linearized solve", substep=j)
    seg = Segment(grid, psi.mu, out, 0.0)
    if trace is not None:
        _write_trace(trace, seg, alpha)
    return seg


def _write_trace(fh: TextIO, seg: Segment, alpha: float) -> None:
    w = csv.writer(fh)
    w.writerow(["t", "norm_alpha", "norm_1+alpha"])
    na = np.sqrt(seg.sample_norms_sq(alpha))
    nb = np.sqrt(seg.sample_norms_sq(1 + alpha))
    for t, x, y in zip(seg.times, na, nb):
        w.writerow([repr(float(t)), repr(float(x)), repr(float(y))])


# --- energy inequality surrogate ---------------------------------------------


def energy_bound(
    psi: Segment,
    u0: SpectralField,
    f: SpectralField,
    nu: float,
    alpha: float,
    c: float,
) -> np.ndarray:
    """Gronwall bound on ``||u(t_j)||_alpha^2`` at each lattice time of ``psi``.

    ``||u0||^2 exp(-nu lam t/2 + c^2/nu Q(0,t))
    + 2/nu ||f||_(alpha-1)^2 int_0^t exp(-nu lam (t-s)/2 + c^2/nu Q(s,t)) ds``
    with ``Q(s,t) = int_s^t ||psi||_(1+alpha)^2``, all integrals by the trapezoid rule.
    """
    lam = psi.grid.lambda1
    dt = psi.dt
    t = dt * np.arange(psi.M + 1)
    p = psi.sample_norms_sq(1 + alpha)
    Q = np.concatenate([[0.0], np.cumsum(0.5 * dt * (p[1:] + p[:-1]))])
    u0n = sobolev_norm(u0, alpha) ** 2
    fn = sobolev_norm(f, alpha - 1) ** 2
    out = u0n * np.exp(-0.5 * nu * lam * t + (c * c / nu) * Q)
    for j in range(1, psi.M + 1):
        integrand = np.exp(-0.5 * nu * lam * (t[j] - t[: j + 1]) + (c * c / nu) * (Q[j] - Q[: j + 1]))
        out[j] += (2.0 / nu) * fn * trapezoid(integrand, dt)
    return out


def check_energy_inequality(
    u: Segment,
    psi: Segment,
    f: SpectralField,
    nu: float,
    alpha: float,
    c: float,
    allowance: float = 0.05,
) -> float:
    """Largest ratio ``||u(t)||_alpha^2 / bound(t)``; warns when it exceeds ``1 + allowance``."""
    bound = energy_bound(psi, u[0], f, nu, alpha, c)
    got = u.sample_norms_sq(alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, got / bound, np.where(got > 0, np.inf, 0.0))
    worst = float(ratio.max())
    if worst > 1.0 + allowance:
        warnings.warn(
            f"energy inequality exceeded: ||u||_alpha^2 reaches {worst:.4f} x the Gronwall bound "
            f"(c={c:.4g} is an estimate)",
            RuntimeWarning,
            stacklevel=2,
        )
    return worst


# --- convergence study -----------------------------------------------------------


def _heat_problem(grid: TorusGrid):
    u0 = SpectralField.from_modes(grid, {(1, 0, 0): (0, 1.0, 0.5j), (0, 1, 1): (0.3, 0.2, -0.2)})
    f = SpectralField.from_modes(grid, {(0, 1, 0): (0.7, 0, 0.1), (1, 1, 0): (0.2, -0.2, 0.4j)})
    return u0, f


def _exact_heat(u0: SpectralField, f: SpectralField, nu: float, t: float) -> SpectralField:
    g = u0.grid
    lam = nu * g.k2
    m = g.mask > 0
    e = np.zeros_like(lam)
    w = np.zeros_like(lam)
    e[m] = np.exp(-lam[m] * t)
    w[m] = -np.expm1(-lam[m] * t) / lam[m]
    return SpectralField(g, e * u0.coeffs + w * f.coeffs)


def _convecting_segment(grid: TorusGrid, mu: float, M: int) -> Segment:
    p0 = SpectralField.from_modes(grid, {(1, 0, 0): (0, 0.8, 0), (0, 0, 1): (0.5, 0, 0)})
    p1 = SpectralField.from_modes(grid, {(0, 1, 0): (0, 0, 0.6j), (1, 1, 0): (0.3, -0.3, 0.2)})
    t = np.linspace(0.0, mu, M + 1)
    w0 = np.cos(2 * np.pi * t / mu)[:, None, None, None, None]
    w1 = np.sin(2 * np.pi * t / mu)[:, None, None, None, None]
    return Segment(grid, mu, w0 * p0.coeffs + w1 * p1.coeffs)


def observed_orders(
    scheme: StepScheme,
    refinements: int,
    problem: str = "auto",
    nu: float = 1.0,
    mu: float = 1.0,
) -> list[float]:
    """Observed temporal orders between successive doublings ``M, 2M, 4M, ...`` from ``scheme.substeps``.

    ``problem="heat"`` (no convection, forced) measures errors against the exact
    solution; ``"convective"`` (smooth time-periodic ``psi``) uses three-level
    Richardson ratios. ``"auto"`` picks ``heat`` for ``imex_euler`` and
    ``convective`` for ``etd1``, which is exact on the heat problem.
    """
    if refinements < 3:
        raise DomainError("refinements must be at least 3")
    if problem == "auto":
        problem = "heat" if scheme.kind == "imex_euler" else "convective"
    grid = TorusGrid(8)
    u0, f = _heat_problem(grid)
    Ms = [scheme.substeps * 2**i for i in range(refinements)]
    ends = []
    for M in Ms:
        if problem == "heat":
            psi = Segment.zeros(grid, mu, M)
        elif problem == "convective":
            psi = _convecting_segment(grid, mu, M)
        else:
            raise DomainError(f"unknown test problem {problem!r}")
        seg = solve_interval(psi, u0, f, nu, StepScheme(scheme.kind, M))
        ends.append(seg[M])
    if problem == "heat":
        exact = _exact_heat(u0, f, nu, mu)
        errs = [sobolev_norm(e - exact, 0.0) for e in ends]
        return [float(np.log2(errs[i] / errs[i + 1])) for i in range(len(errs) - 1)]
    diffs = [sobolev_norm(ends[i] - ends[i + 1], 0.0) for i in range(len(ends) - 1)]
    return [float(np.log2(diffs[i] / diffs[i + 1])) for i in range(len(diffs) - 1)]


def convergence_order(scheme: StepScheme, refinements: int, problem: str = "auto") -> float:
    """Observed order at the finest refinement (see :func:`observed_orders`)."""
    return observed_orders(scheme, refinements, problem)[-1]
