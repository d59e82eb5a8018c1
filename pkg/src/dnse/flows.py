"""Discrete flow U on (segment on [0, mu], endpoint) and continuous flow S on
(history on [-mu, 0], endpoint), built by the method of steps.

Continuous time is restricted to the sample lattice ``{j mu / M}``. Both flows
call :func:`dnse.stepper.solve_interval` with identical arguments on every
interval, so ``S(n mu, y)`` and ``U(n, x)`` agree bit for bit when ``x``
corresponds to ``y``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator, TextIO

import numpy as np

from .errors import DomainError, GridMismatchError
from .spectral import SpectralField, TorusGrid, sobolev_norm, sobolev_norms_sq
from .stepper import Segment, StepScheme, solve_interval, trapezoid

FORWARD = "forward"
HISTORY = "history"


@dataclass(frozen=True, eq=False)
class FlowState:
    """``(segment, endpoint)``; ``forward`` segments live on ``[0, mu]``, ``history`` ones on ``[-mu, 0]``."""

    segment: Segment
    endpoint: SpectralField
    orientation: str = FORWARD

    def __post_init__(self):
        if self.orientation not in (FORWARD, HISTORY):
            raise DomainError(f"orientation must be {FORWARD!r} or {HISTORY!r}")
        if self.segment.grid != self.endpoint.grid:
            raise GridMismatchError("segment and endpoint live on different grids")
        t0 = 0.0 if self.orientation == FORWARD else -self.segment.mu
        if self.segment.t0 != t0:
            object.__setattr__(self, "segment", self.segment.relabel(t0))

    @property
    def grid(self) -> TorusGrid:
        return self.segment.grid

    @property
    def mu(self) -> float:
        return self.segment.mu

    @property
    def M(self) -> int:
        return self.segment.M

    @classmethod
    def zeros(cls, grid: TorusGrid, mu: float, M: int, orientation: str = FORWARD) -> FlowState:
        return cls(Segment.zeros(grid, mu, M), SpectralField.zeros(grid), orientation)

    def __sub__(self, other: FlowState) -> FlowState:
        if other.orientation != self.orientation:
            raise DomainError("cannot subtract states of different orientation")
        if other.segment.samples.shape != self.segment.samples.shape or other.mu != self.mu:
            raise GridMismatchError("states have different segment layouts")
        seg = Segment(self.grid, self.mu, self.segment.samples - other.segment.samples)
        return FlowState(seg, self.endpoint - other.endpoint, self.orientation)

    def identical(self, other: FlowState) -> bool:
        """Bitwise equality of all coefficients (time labels ignored)."""
        return (
            self.segment.samples.shape == other.segment.samples.shape
            and self.segment.samples.tobytes() == other.segment.samples.tobytes()
            and self.endpoint.coeffs.tobytes() == other.endpoint.coeffs.tobytes()
        )


@dataclass(frozen=True, eq=False)
class FlowParams:
    nu: float
    mu: float
    alpha: float
    f: SpectralField
    scheme: StepScheme = field(default_factory=StepScheme)

    def __post_init__(self):
        if not self.alpha > 0.5:
            raise DomainError(f"alpha must exceed 1/2, got {self.alpha}")
        if not self.nu > 0:
            raise DomainError(f"viscosity must be positive, got {self.nu}")
        if not self.mu > 0:
            raise DomainError(f"delay must be positive, got {self.mu}")

    @property
    def grid(self) -> TorusGrid:
        return self.f.grid

    @property
    def M(self) -> int:
        return self.scheme.substeps

    def with_nu(self, nu: float) -> FlowParams:
        return FlowParams(nu, self.mu, self.alpha, self.f, self.scheme)


def _check(x: FlowState, p: FlowParams, orientation: str) -> None:
    if x.orientation != orientation:
        raise DomainError(f"expected a {orientation} state, got {x.orientation}")
    if x.grid != p.grid:
        raise GridMismatchError("state and forcing live on different grids")
    if x.M != p.M:
        raise DomainError(f"state segment has {x.M} substeps, parameters use {p.M}")
    if not math.isclose(x.mu, p.mu, rel_tol=1e-12):
        raise DomainError(f"state segment length {x.mu} differs from the delay {p.mu}")


def correspond(y: FlowState) -> FlowState:
    """History state ``(phi, u0)`` to the forward state ``(psi, u0)`` with ``psi(t) = phi(t - mu)``."""
    if y.orientation != HISTORY:
        raise DomainError("correspond expects a history state")
    return FlowState(y.segment.relabel(0.0), y.endpoint, FORWARD)


def correspond_inverse(x: FlowState) -> FlowState:
    if x.orientation != FORWARD:
        raise DomainError("correspond_inverse expects a forward state")
    return FlowState(x.segment.relabel(-x.mu), x.endpoint, HISTORY)


def state_norm(x: FlowState, alpha: float) -> float:
    """``sqrt(int ||segment||_(1+alpha)^2 dt + ||endpoint||_alpha^2)`` with the trapezoid rule in time."""
    return math.sqrt(x.segment.l2_norm_sq(1 + alpha) + sobolev_norm(x.endpoint, alpha) ** 2)


def state_distance(x1: FlowState, x2: FlowState, alpha: float) -> float:
    return state_norm(x1 - x2, alpha)


class TrajectoryRecorder:
    """Collects the concatenated solution and per-interval norms.

    Pass to :func:`discrete_flow` or :func:`continuous_flow`. Samples are kept
    only with ``keep_samples=True``.
    """

    def __init__(self, alpha: float, keep_samples: bool = True):
        self.alpha = alpha
        self.keep_samples = keep_samples
        self.history: Segment | None = None
        self.rows: list[tuple[int, float, float, float, float]] = []
        self._times: list[np.ndarray] = []
        self._samples: list[np.ndarray] = []

    def begin(self, x: FlowState) -> None:
        self.history = x.segment
        self.rows = []
        self._times, self._samples = [np.zeros(1)], [x.endpoint.coeffs[None]]
        self._row(0, x)

    def interval(self, n: int, seg: Segment, state: FlowState) -> None:
        if self.keep_samples:
            self._times.append((n - 1) * seg.mu + seg.times[1:])
            self._samples.append(seg.samples[1:])
        self._row(n, state)

    def _row(self, n: int, x: FlowState) -> None:
        a = self.alpha
        seg_sq = x.segment.l2_norm_sq(1 + a)
        end = sobolev_norm(x.endpoint, a)
        self.rows.append((n, n * x.mu, end, math.sqrt(seg_sq), math.sqrt(seg_sq + end * end)))

    def trajectory(self) -> Trajectory:
        if self.history is None:
            raise DomainError("nothing recorded")
        return Trajectory(self.history, np.concatenate(self._times), np.concatenate(self._samples))

    def write_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh)
        w.writerow(["n", "t", "endpoint_norm_alpha", "segment_l2_norm", "state_norm"])
        for n, t, e, s, x in self.rows:
            w.writerow([n, repr(t), repr(e), repr(s), repr(x)])


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Initial segment plus the concatenated solution at lattice times ``t >= 0``."""

    history: Segment
    times: np.ndarray
    samples: np.ndarray

    @property
    def grid(self) -> TorusGrid:
        return self.history.grid

    def norms_sq(self, s: float) -> np.ndarray:
        return sobolev_norms_sq(self.samples, self.grid, s)


def discrete_step(x: FlowState, p: FlowParams) -> FlowState:
    """``U(1, x)``: solve on ``[0, mu]`` convected by ``x.segment`` from ``x.endpoint``."""
    _check(x, p, FORWARD)
    seg = solve_interval(x.segment, x.endpoint, p.f, p.nu, p.scheme)
    return FlowState(seg, seg[seg.M], FORWARD)


def discrete_flow(n: int, x: FlowState, p: FlowParams, recorder: TrajectoryRecorder | None = None) -> FlowState:
    """``U(n, x)``, the ``n``-fold composition of :func:`discrete_step`."""
    if n < 0 or int(n) != n:
        raise DomainError(f"n must be a nonnegative integer, got {n}")
    _check(x, p, FORWARD)
    if recorder is not None:
        recorder.begin(x)
    for k in range(1, int(n) + 1):
        x = discrete_step(x, p)
        if recorder is not None:
            recorder.interval(k, x.segment, x)
    return x


def lattice_index(t: float, mu: float, M: int) -> int:
    """Index ``m`` with ``t = m mu / M``; raises when ``t`` is off the lattice."""
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    m_real = t * M / mu
    m = int(round(m_real))
    if abs(m_real - m) > 1e-9 * max(1.0, abs(m_real)):
        lo = math.floor(m_real)
        raise DomainError(
            f"t={t!r} is not on the sample lattice mu/M={mu / M!r}; "
            f"nearest representable times are {lo * mu / M!r} and {(lo + 1) * mu / M!r}"
        )
    return m


def _window(prev: Segment, cur: Segment, j: int) -> np.ndarray:
    """Samples of the solution on ``(t - mu, t]`` where ``t`` is ``j`` substeps into ``cur``."""
    M = prev.M
    return np.concatenate([prev.samples[j:M], cur.samples[: j + 1]], axis=0)


def continuous_orbit(
    y: FlowState, p: FlowParams, m_max: int, recorder: TrajectoryRecorder | None = None
) -> Iterator[tuple[int, FlowState]]:
    """Yield ``(m, S(m mu / M, y))`` for ``m = 0 .. m_max``, one interval solve per ``M`` steps."""
    _check(y, p, HISTORY)
    M = p.M
    if recorder is not None:
        recorder.begin(y)
    yield 0, y
    prev, end = y.segment, y.endpoint
    m = 0
    n = 0
    while m < m_max:
        cur = solve_interval(prev, end, p.f, p.nu, p.scheme)
        n += 1
        for j in range(1, M + 1):
            m += 1
            if m > m_max:
                return
            if j == M:
                state = FlowState(cur.relabel(-p.mu), cur[M], HISTORY)
            else:
                state = FlowState(Segment(p.grid, p.mu, _window(prev, cur, j), -p.mu), cur[j], HISTORY)
            yield m, state
        if recorder is not None:
            recorder.interval(n, cur, FlowState(cur.relabel(-p.mu), cur[M], HISTORY))
        prev, end = cur, cur[M]


def continuous_flow(
    t: float, y: FlowState, p: FlowParams, recorder: TrajectoryRecorder | None = None
) -> FlowState:
    """``S(t, y)`` for ``t`` on the lattice ``{j mu / M}``.

    Returns the history window ``(u(t - mu + s))_{s in [0, mu]}`` and ``u(t)``.
    """
    _check(y, p, HISTORY)
    m = lattice_index(t, p.mu, p.M)
    M = p.M
    n, j = divmod(m, M)
    if recorder is not None:
        recorder.begin(y)
    prev, end = y.segment, y.endpoint
    for k in range(1, n + 1):
        cur = solve_interval(prev, end, p.f, p.nu, p.scheme)
        prev, end = cur, cur[M]
        if recorder is not None:
            recorder.interval(k, cur, FlowState(cur.relabel(-p.mu), end, HISTORY))
    if j == 0:
        if n == 0:
            return y
        return FlowState(prev.relabel(-p.mu), end, HISTORY)
    cur = solve_interval(prev, end, p.f, p.nu, p.scheme)
    return FlowState(Segment(p.grid, p.mu, _window(prev, cur, j), -p.mu), cur[j], HISTORY)


def segment_l2_norm(x: FlowState, alpha: float) -> float:
    return math.sqrt(x.segment.l2_norm_sq(1 + alpha))


def window_norms_sq(y: FlowState, p: FlowParams) -> tuple[np.ndarray, np.ndarray]:
    """Squared segment and endpoint norms of ``S(t, y)`` at every lattice ``t`` in ``[0, mu]``.

    Uses one interval solve and per-sample norms; equivalent to calling
    :func:`continuous_flow` at each lattice time.
    """
    _check(y, p, HISTORY)
    M, dt, a = p.M, y.segment.dt, p.alpha
    cur = solve_interval(y.segment, y.endpoint, p.f, p.nu, p.scheme)
    pn = y.segment.sample_norms_sq(1 + a)
    cn = cur.sample_norms_sq(1 + a)
    en = cur.sample_norms_sq(a)
    seg = np.empty(M + 1)
    end = np.empty(M + 1)
    seg[0] = trapezoid(pn, dt)
    end[0] = sobolev_norm(y.endpoint, a) ** 2
    for j in range(1, M + 1):
        seg[j] = trapezoid(np.concatenate([pn[j:M], cn[: j + 1]]), dt)
        end[j] = en[j]
    return seg, end
