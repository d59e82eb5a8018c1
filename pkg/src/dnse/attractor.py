"""Invariant balls, contraction and fixed points of the delayed flow.

The viscosity conditions are evaluated literally from their closed forms;
the experiments then check numerically that the flows respect them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .flows import (
    FORWARD,
    HISTORY,
    FlowParams,
    FlowState,
    Trajectory,
    correspond_inverse,
    continuous_flow,
    discrete_step,
    segment_l2_norm,
    state_distance,
    window_norms_sq,
)
from .parallel import map_ordered
from .spectral import SpectralField, TorusGrid, random_field, rescale, sobolev_norm, sobolev_norms_sq
from .stepper import Segment, trapezoid

LN2 = math.log(2.0)
# states are rescaled onto the ball boundary exactly, so containment checks allow roundoff
BOUNDARY_RTOL = 1e-12


def _positive(**kw: float) -> None:
    for k, v in kw.items():
        if not v > 0:
            raise DomainError(f"{k} must be positive, got {v}")


def rho_radius(nu: float, lam: float, mu: float, f_norm: float) -> float:
    """Endpoint-ball radius: ``rho^2 = 8 / (nu^2 lam) ||f||_(alpha-1)^2 exp(nu lam mu / 2)``."""
    _positive(nu=nu, lam=lam, mu=mu)
    if f_norm < 0:
        raise DomainError(f"f_norm must be nonnegative, got {f_norm}")
    return math.sqrt(8.0 / (nu * nu * lam) * f_norm * f_norm * math.exp(0.5 * nu * lam * mu))


def check_cond1(nu: float, lam: float, mu: float, c: float, R: float) -> bool:
    """``-nu lam mu / 2 + c^2 R^2 / nu < -ln 2``."""
    return -0.5 * nu * lam * mu + c * c * R * R / nu < -LN2


def cond2_lhs(nu: float, lam: float, mu: float, c: float, R: float, f_norm: float) -> float:
    rho2 = 8.0 / (nu * nu * lam) * f_norm * f_norm * math.exp(0.5 * nu * lam * mu)
    q = c * c * R * R
    bracket = 2.0 / nu + 2.0 * q / (nu * nu) * (math.exp(q / nu) + 0.5) + 0.5 * lam * mu * math.exp(-0.5 * nu * lam * mu)
    return rho2 * bracket


def check_cond2(nu: float, lam: float, mu: float, c: float, R: float, f_norm: float) -> bool:
    """``rho^2 (2/nu + 2 c^2 R^2/nu^2 (e^(c^2 R^2/nu) + 1/2) + lam mu e^(-nu lam mu/2) / 2) <= R^2 / 2``."""
    try:
        return cond2_lhs(nu, lam, mu, c, R, f_norm) <= 0.5 * R * R
    except OverflowError:
        return False


def radius_grid(search_budget: int, r_min: float = 1e-8, r_max: float = 1e8) -> np.ndarray:
    return np.geomspace(r_min, r_max, search_budget)


def find_radius(
    nu: float, lam: float, mu: float, c: float, f_norm: float, search_budget: int = 1601
) -> float | None:
    """Smallest ``R`` on a logarithmic grid over ``[1e-8, 1e8]`` satisfying both ball conditions."""
    _positive(nu=nu, lam=lam, mu=mu)
    for R in radius_grid(search_budget):
        R = float(R)
        if check_cond1(nu, lam, mu, c, R) and check_cond2(nu, lam, mu, c, R, f_norm):
            return R
    return None


def contraction_terms(
    nu: float, lam: float, mu: float, c: float, R: float, rho: float, reading: str = "e_nu"
) -> tuple[float, float]:
    """Left sides of the two smallness conditions for the one-step contraction by 1/2.

    ``reading="e_nu"`` uses ``exp(-lam nu mu + 2 c^2 R^2 / nu)`` in the first
    term; ``"literal"`` uses the exponent ``-lam nu mu + 2 c^2 R^2 / nu^2``.
    Overflowing terms are returned as ``inf``.
    """
    q = 2.0 * c * c * R * R
    if reading == "e_nu":
        expo = -lam * nu * mu + q / nu
    elif reading == "literal":
        expo = -lam * nu * mu + q / (nu * nu)
    else:
        raise DomainError(f"unknown reading {reading!r}")
    first = (q / (nu * nu) + 1.0) * _exp(expo) + 1.0 / nu
    second = 0.0 if rho == 0.0 else (
        (1.0 / lam) * (q / (nu * nu) + 1.0) * (-math.expm1(-lam * nu * mu)) * _exp(q / nu) + 1.0
    ) * (2.0 * c * c * rho * rho / (nu * nu))
    return first, second


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def check_contraction(
    nu: float, lam: float, mu: float, c: float, R: float, rho: float, reading: str = "e_nu"
) -> bool:
    first, second = contraction_terms(nu, lam, mu, c, R, rho, reading)
    return first < 0.5 and second < 0.5


@dataclass(frozen=True)
class BallSpec:
    """Product ball: segments with ``L2(V^(1+alpha))`` norm ``<= R``, endpoints with ``V^alpha`` norm ``<= rho``."""

    R: float
    rho: float
    c: float
    lam: float


@dataclass(frozen=True)
class ViscosityChoice:
    nu: float
    spec: BallSpec
    c_ball: float
    c_contraction: float
    contraction_terms: tuple[float, float]
    doublings: int


def scan_viscosity(
    lam: float,
    mu: float,
    c_ball: float,
    c_contraction: float,
    f_norm: float,
    nu0: float = 1.0,
    max_doublings: int = 40,
    search_budget: int = 1601,
    reading: str = "e_nu",
) -> ViscosityChoice | None:
    """Double ``nu`` from ``nu0`` until a ball radius exists and the contraction conditions hold.

    The ball conditions use ``c_ball``; the contraction conditions use
    ``max(c_ball, c_contraction)`` because their ``R`` and ``rho`` come from the ball.
    """
    c_con = max(c_ball, c_contraction)
    nu = nu0
    for k in range(max_doublings + 1):
        R = find_radius(nu, lam, mu, c_ball, f_norm, search_budget)
        if R is not None:
            rho = rho_radius(nu, lam, mu, f_norm)
            if check_contraction(nu, lam, mu, c_con, R, rho, reading):
                terms = contraction_terms(nu, lam, mu, c_con, R, rho, reading)
                return ViscosityChoice(nu, BallSpec(R, rho, c_ball, lam), c_ball, c_contraction, terms, k)
        nu *= 2.0
    return None


# --- random states --------------------------------------------------------------


def random_segment(
    grid: TorusGrid, mu: float, M: int, rng: np.random.Generator, l2_norm: float, s: float, decay: float, modes: int = 3
) -> Segment:
    """Smooth-in-time random segment rescaled so its trapezoid ``L2(0, mu; V^s)`` norm is ``l2_norm``."""
    t = np.linspace(0.0, 1.0, M + 1)
    samples = np.zeros((M + 1,) + grid.shape, dtype=np.complex128)
    for _ in range(modes):
        fld = random_field(grid, rng, decay=decay)
        freq = rng.uniform(0.0, 3.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        samples += np.cos(2 * np.pi * freq * t + phase)[:, None, None, None, None] * fld.coeffs
    seg = Segment(grid, mu, samples)
    cur = math.sqrt(seg.l2_norm_sq(s))
    if cur == 0.0:
        return seg
    return Segment(grid, mu, samples * (l2_norm / cur))


def random_state(
    grid: TorusGrid,
    p: FlowParams,
    rng: np.random.Generator,
    seg_norm: float,
    end_norm: float,
    orientation: str = FORWARD,
    decay: float | None = None,
) -> FlowState:
    """State with segment norm ``seg_norm`` in ``L2(V^(1+alpha))`` and endpoint norm ``end_norm`` in ``V^alpha``.

    Spatial spectra decay like ``|zeta|^-decay`` (default ``alpha + 2``) with random phases.
    """
    decay = p.alpha + 2.0 if decay is None else decay
    seg = random_segment(grid, p.mu, p.M, rng, seg_norm, 1 + p.alpha, decay)
    end = random_field(grid, rng, decay=decay)
    end = rescale(end, end_norm, p.alpha) if end_norm > 0 else SpectralField.zeros(grid)
    return FlowState(seg, end, orientation)


def _rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


# --- ball invariance ------------------------------------------------------------------


@dataclass
class BallReport:
    trials: int
    escapes: int
    max_segment_ratio: float
    max_endpoint_ratio: float
    segment_limit: float
    segment_ratios: list[float] = field(default_factory=list)
    endpoint_ratios: list[float] = field(default_factory=list)

    @property
    def inside(self) -> bool:
        return self.escapes == 0


def ball_invariance_trial(spec: BallSpec, p: FlowParams, trials: int, seed: int) -> BallReport:
    """Map random states on the boundary of ``B(R; rho)`` by ``U(1, .)``.

    A trial escapes when the image has segment norm above ``R / sqrt(2)`` or
    endpoint norm above ``rho``. Ratios are relative to ``R`` and ``rho``.
    """
    grid = p.grid

    def one(rng: np.random.Generator) -> tuple[float, float]:
        x = random_state(grid, p, rng, spec.R, spec.rho, FORWARD)
        y = discrete_step(x, p)
        return segment_l2_norm(y, p.alpha), sobolev_norm(y.endpoint, p.alpha)

    res = map_ordered(one, _rngs(seed, trials))
    return _ball_report(spec, res, 1.0 / math.sqrt(2.0))


def _ball_report(spec: BallSpec, res: list[tuple[float, float]], seg_limit: float) -> BallReport:
    seg_r = [s / spec.R if spec.R > 0 else (0.0 if s == 0 else math.inf) for s, _ in res]
    end_r = [e / spec.rho if spec.rho > 0 else (0.0 if e == 0 else math.inf) for _, e in res]
    slack = 1.0 + BOUNDARY_RTOL
    escapes = sum(1 for a, b in zip(seg_r, end_r) if a > seg_limit * slack or b > slack)
    return BallReport(
        trials=len(res),
        escapes=escapes,
        max_segment_ratio=max(seg_r, default=0.0),
        max_endpoint_ratio=max(end_r, default=0.0),
        segment_limit=seg_limit,
        segment_ratios=seg_r,
        endpoint_ratios=end_r,
    )


def continuous_ball_trial(spec: BallSpec, p: FlowParams, trials: int, seed: int) -> BallReport:
    """Histories on the boundary of ``B(R / sqrt 2; rho)`` followed by ``S(t, .)`` at every lattice ``t`` in ``[0, mu]``.

    A trial escapes when any window leaves ``B(R; rho)``; ratios are maxima over ``t``.
    """
    grid = p.grid

    def one(rng: np.random.Generator) -> tuple[float, float]:
        y = random_state(grid, p, rng, spec.R / math.sqrt(2.0), spec.rho, HISTORY)
        seg, end = window_norms_sq(y, p)
        return math.sqrt(seg.max()), math.sqrt(end.max())

    res = map_ordered(one, _rngs(seed, trials))
    return _ball_report(spec, res, 1.0)


# --- contraction ---------------------------------------------------------------------


@dataclass
class ContractionReport:
    distances: list[float]
    fitted_factor: float
    passes_half: bool
    ratios: list[float]
    window: tuple[int, int]


def contraction_experiment(
    x1: FlowState,
    x2: FlowState,
    n: int,
    p: FlowParams,
    burn_in: int = 2,
    floor: float = 1e-14,
) -> ContractionReport:
    """Iterate ``U`` on two states and fit the per-step factor of the squared distance.

    ``ratios[k] = (d_(k+1) / d_k)^2``. The fit window starts after ``burn_in``
    steps and stops before the first distance below ``floor``; ``passes_half``
    requires every ratio inside the window to be at most 1/2.
    """
    d = [state_distance(x1, x2, p.alpha)]
    for _ in range(n):
        x1 = discrete_step(x1, p)
        x2 = discrete_step(x2, p)
        d.append(state_distance(x1, x2, p.alpha))
    stop = next((k for k, v in enumerate(d) if v < floor), len(d))
    ratios = [(d[k + 1] / d[k]) ** 2 if d[k] > 0 else 0.0 for k in range(len(d) - 1)]
    start = burn_in if stop - burn_in >= 2 else 0
    if stop - start < 2:
        return ContractionReport(d, 0.0, True, ratios, (start, stop))
    ks = np.arange(start, stop)
    logs = np.log(np.asarray(d[start:stop]) ** 2)
    slope = float(np.polyfit(ks, logs, 1)[0])
    win = ratios[start : stop - 1]
    return ContractionReport(d, math.exp(slope), all(r <= 0.5 for r in win), ratios, (start, stop))


# --- fixed point -----------------------------------------------------------------------


@dataclass
class AttractorResult:
    state: FlowState
    residual: float
    iterations: int
    converged: bool
    increments: list[float]

    def continuous(self) -> FlowState:
        """The corresponding history state, the fixed point of ``S(mu, .)``."""
        return correspond_inverse(self.state)


def find_attractor(x0: FlowState, p: FlowParams, tol: float = 1e-10, max_iter: int = 500) -> AttractorResult:
    """Iterate ``U(1, .)`` until successive states are within ``tol`` in the state norm.

    ``residual`` is ``state_norm(U(x*) - x*)`` at the returned state.
    """
    x = x0
    incs: list[float] = []
    converged = False
    it = 0
    while it < max_iter:
        nxt = discrete_step(x, p)
        it += 1
        incs.append(state_distance(nxt, x, p.alpha))
        x = nxt
        if incs[-1] < tol:
            converged = True
            break
    residual = state_distance(discrete_step(x, p), x, p.alpha)
    return AttractorResult(x, residual, it, converged, incs)


def continuous_residual(y: FlowState, p: FlowParams) -> float:
    """``state_norm(S(mu, y) - y)`` for a history state."""
    return state_distance(continuous_flow(p.mu, y, p), y, p.alpha)


def stokes_steady_state(f: SpectralField, nu: float) -> SpectralField:
    """Per-mode ``f_hat / (nu |zeta|^2)``."""
    return SpectralField(f.grid, f.coeffs * f.grid.inv_k2 / nu)


# --- regularity diagnostics ------------------------------------------------------------------


@dataclass
class RegularityReport:
    weighted_sup: float
    weighted_bound_ratio: float
    weighted_bound_ok: bool
    sup_norm_1a: float
    l2_norm_2a: float
    holder_max: float
    finite: bool


def weighted_bound(
    traj: Trajectory, p: FlowParams, c: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``t ||u(t)||_(1+alpha)^2`` on lattice ``t`` in ``(0, mu]`` and its a-priori bound.

    Bound: ``(||u||_(L2(0,mu;V^(1+alpha)))^2 + t ||f||_alpha^2 / nu) exp(c^2 ||phi||^2 / nu)``.
    """
    a = p.alpha
    mu = p.mu
    dt = mu / p.M
    sel = (traj.times > 0) & (traj.times <= mu * (1 + 1e-12))
    first = traj.times <= mu * (1 + 1e-12)
    if not sel.any():
        raise DomainError("trajectory does not cover (0, mu]")
    n1 = traj.norms_sq(1 + a)
    u_l2 = trapezoid(n1[first], dt)
    phi_l2 = traj.history.l2_norm_sq(1 + a)
    fa = sobolev_norm(p.f, a) ** 2
    t = traj.times[sel]
    lhs = t * n1[sel]
    bound = (u_l2 + t * fa / p.nu) * math.exp(c * c * phi_l2 / p.nu)
    return t, lhs, bound


def holder_quotients(traj: Trajectory, alpha: float, epsilon: float) -> float:
    """Largest ``||u(t) - u(s)||_alpha / (t - s)^(1/2)`` over lattice pairs ``epsilon <= s < t``."""
    sel = np.nonzero(traj.times >= epsilon * (1 - 1e-12))[0]
    if len(sel) < 2:
        raise DomainError("Hoelder window holds fewer than two samples")
    t = traj.times[sel]
    x = traj.samples[sel]
    best = 0.0
    for i in range(len(sel) - 1):
        diff = x[i + 1 :] - x[i]
        n = np.sqrt(sobolev_norms_sq(diff, traj.grid, alpha))
        q = n / np.sqrt(t[i + 1 :] - t[i])
        best = max(best, float(q.max()))
    return best


def regularity_diagnostics(traj: Trajectory, p: FlowParams, epsilon: float, c: float = 0.0) -> RegularityReport:
    """Weighted short-time bound, higher-norm bounds on ``[epsilon, T]`` and the Hoelder-1/2 quotient."""
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    a = p.alpha
    dt = p.mu / p.M
    if traj.times[-1] < epsilon + dt * (1 - 1e-9):
        raise DomainError("empty diagnostic window: trajectory ends before epsilon + one sample")
    t, lhs, bound = weighted_bound(traj, p, c)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, lhs / bound, np.where(lhs > 0, np.inf, 0.0))
    win = traj.times >= epsilon * (1 - 1e-12)
    sup1 = float(traj.norms_sq(1 + a)[win].max())
    l2 = trapezoid(traj.norms_sq(2 + a)[win], dt)
    hq = holder_quotients(traj, a, epsilon)
    vals = [float(lhs.max()), sup1, l2, hq]
    if not ratio.max() <= 1.0:
        warnings.warn(
            f"weighted short-time bound exceeded by factor {float(ratio.max()):.4g} (c={c})",
            RuntimeWarning,
            stacklevel=2,
        )
    return RegularityReport(
        weighted_sup=float(lhs.max()),
        weighted_bound_ratio=float(ratio.max()),
        weighted_bound_ok=bool(ratio.max() <= 1.0),
        sup_norm_1a=sup1,
        l2_norm_2a=l2,
        holder_max=hq,
        finite=all(math.isfinite(v) for v in vals),
    )
