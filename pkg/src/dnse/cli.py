"""Command-line front end: ``dnse --config FILE [--experiment NAME] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Sequence

import numpy as np

from .attractor import (
    BallSpec,
    ball_invariance_trial,
    check_cond1,
    check_cond2,
    check_contraction,
    contraction_experiment,
    contraction_terms,
    continuous_ball_trial,
    continuous_residual,
    find_attractor,
    find_radius,
    random_segment,
    random_state,
    regularity_diagnostics,
    rho_radius,
    scan_viscosity,
    stokes_steady_state,
)
from .config import ExperimentConfig, as_dict, emit_config, help_text, parse_config
from .errors import DNSEError
from .flows import FlowParams, FlowState, TrajectoryRecorder, discrete_flow, state_distance, state_norm
from .nonlinear import ExponentTriple, estimate_trilinear_constant
from .spectral import SpectralField, save_snapshot, sobolev_norm
from .stepper import Segment, StepScheme

CSV_HELP = """\
CSV outputs (written to --out):
  simulate, regularity:
    trajectory.csv  n,t,endpoint_norm_alpha,segment_l2_norm,state_norm   (one row per delay interval)
    series.csv      t,norm_alpha,norm_1+alpha                             (one row per lattice time)
  check:
    balls.csv       flow,trial,segment_ratio,endpoint_ratio   (ratios to R and rho)
  contract:
    distances.csv   pair,nu,n,distance                        (state-norm distance after n steps)
  fixpoint:
    increments.csv  run,k,increment                           (state-norm step size)
  estimate-c (and any experiment with c = auto):
    c_ball.csv, c_contraction.csv   sample,ratio,running_max
Every run writes manifest.json before computing and rewrites it when done.
The exit status is 1 when an asserted criterion fails and 2 on errors."""


class Manifest:
    """``manifest.json`` with parameters, results and per-criterion verdicts."""

    def __init__(self, path: str, cfg: ExperimentConfig):
        self.path = path
        self.data: dict[str, Any] = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "status": "running",
            "experiment": cfg.experiment.name,
            "config": as_dict(cfg),
            "results": {},
            "criteria": {},
        }
        self.write()

    def write(self) -> None:
        tmp = self.path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
        os.replace(tmp, self.path)

    def result(self, **kw: Any) -> None:
        self.data["results"].update(kw)
        self.write()

    def criterion(self, name: str, passed: bool, asserted: bool = True) -> None:
        self.data["criteria"][name] = {"pass": bool(passed), "asserted": bool(asserted)}

    @property
    def failed(self) -> bool:
        return any(c["asserted"] and not c["pass"] for c in self.data["criteria"].values())


@dataclass
class Setup:
    cfg: ExperimentConfig
    out: str
    manifest: Manifest
    f: SpectralField
    seeds: list[int]

    @property
    def grid(self):
        return self.f.grid

    @property
    def alpha(self) -> float:
        return self.cfg.params.alpha

    @property
    def f_norm(self) -> float:
        """Norm of the forcing in ``V^(alpha-1)``, the one entering the ball radius."""
        return sobolev_norm(self.f, self.alpha - 1)

    def params(self, nu: float) -> FlowParams:
        p = self.cfg.params
        return FlowParams(nu, p.mu, p.alpha, self.f, StepScheme(p.scheme, p.M))

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)


def _csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def initial_state(cfg: ExperimentConfig, p: FlowParams) -> FlowState:
    """Forward state from the ``[initial.*]`` specs.

    Non-random segments are constant in time; a random segment varies smoothly
    in time and has ``norm`` as its ``L2(0, mu; V^(1+alpha))`` norm.
    """
    grid = p.grid
    seg_spec = cfg.segment
    if seg_spec.kind == "random":
        rng = np.random.default_rng(seg_spec.seed)
        seg = random_segment(grid, p.mu, p.M, rng, seg_spec.norm, 1 + p.alpha, seg_spec.decay)
    else:
        seg = Segment.constant(seg_spec.build(grid, 1 + p.alpha), p.mu, p.M)
    return FlowState(seg, cfg.endpoint.build(grid, p.alpha))


# --- shared steps -------------------------------------------------------------------------


def resolve_constants(s: Setup) -> tuple[float, float]:
    """Constants for the ball and difference estimates, estimated times ``safety`` when ``auto``."""
    e = s.cfg.experiment
    out = {}
    for key, given, triple in (
        ("c_ball", e.c, ExponentTriple.ball(s.alpha)),
        ("c_contraction", e.c_contraction, ExponentTriple.contraction(s.alpha)),
    ):
        if given is not None:
            out[key] = given
            s.manifest.result(**{key: {"source": "config", "value": given}})
            continue
        with open(s.path(f"{key}.csv"), "w", newline="") as log:
            est = estimate_trilinear_constant(triple, e.budget, e.seed, grid=s.grid, log=log)
        out[key] = est.c * e.safety
        s.manifest.result(
            **{
                key: {
                    "source": "estimate",
                    "triple": [triple.s1, triple.s2, triple.s3],
                    "estimate": est.c,
                    "safety": e.safety,
                    "value": out[key],
                    "samples": est.samples,
                }
            }
        )
    return out["c_ball"], out["c_contraction"]


def resolve_ball(s: Setup, c_ball: float, c_con: float) -> tuple[float, BallSpec | None, bool]:
    """Viscosity, ball and whether the contraction conditions hold.

    With ``nu = auto`` the viscosity is doubled from ``nu_start`` until both
    ball conditions and both contraction conditions hold.
    """
    cp, e = s.cfg.params, s.cfg.experiment
    lam = s.grid.lambda1
    fn = s.f_norm
    c_max = max(c_ball, c_con)
    if cp.nu is None:
        choice = scan_viscosity(lam, cp.mu, c_ball, c_con, fn, cp.nu_start, search_budget=e.search_budget, reading=e.reading)
        if choice is None:
            s.manifest.result(viscosity={"source": "scan", "found": False})
            s.manifest.criterion("viscosity_found", False)
            return math.nan, None, False
        nu, spec = choice.nu, choice.spec
        source = "scan"
    else:
        nu = cp.nu
        R = find_radius(nu, lam, cp.mu, c_ball, fn, e.search_budget)
        spec = None if R is None else BallSpec(R, rho_radius(nu, lam, cp.mu, fn), c_ball, lam)
        source = "config"
    info: dict[str, Any] = {"source": source, "nu": nu, "lambda1": lam, "f_norm_alpha_minus_1": fn, "found": spec is not None}
    ok = False
    if spec is not None:
        t1, t2 = contraction_terms(nu, lam, cp.mu, c_max, spec.R, spec.rho, e.reading)
        ok = check_contraction(nu, lam, cp.mu, c_max, spec.R, spec.rho, e.reading)
        info.update(
            R=spec.R,
            rho=spec.rho,
            cond1=check_cond1(nu, lam, cp.mu, c_ball, spec.R),
            cond2=check_cond2(nu, lam, cp.mu, c_ball, spec.R, fn),
            contraction_terms=[t1, t2],
            contraction_conditions=ok,
            reading=e.reading,
        )
    s.manifest.result(viscosity=info)
    s.manifest.criterion("radius_found", spec is not None)
    return nu, spec, ok


def _trajectory_outputs(s: Setup, rec: TrajectoryRecorder) -> None:
    with open(s.path("trajectory.csv"), "w", newline="") as fh:
        rec.write_csv(fh)
    tr = rec.trajectory()
    na = np.sqrt(tr.norms_sq(s.alpha))
    n1 = np.sqrt(tr.norms_sq(1 + s.alpha))
    _csv(s.path("series.csv"), ["t", "norm_alpha", "norm_1+alpha"], zip(tr.times.tolist(), na.tolist(), n1.tolist()))


def _snapshot(s: Setup, name: str, u: SpectralField) -> None:
    if s.cfg.experiment.snapshots:
        with open(s.path(name), "wb") as fh:
            save_snapshot(u, fh)


def _nu_for_run(s: Setup) -> float:
    if s.cfg.params.nu is not None:
        return s.cfg.params.nu
    c_ball, c_con = resolve_constants(s)
    nu, _, _ = resolve_ball(s, c_ball, c_con)
    return nu


# --- experiments ------------------------------------------------------------------------


def exp_simulate(s: Setup) -> None:
    nu = _nu_for_run(s)
    if math.isnan(nu):
        return
    p = s.params(nu)
    x0 = initial_state(s.cfg, p)
    rec = TrajectoryRecorder(s.alpha)
    x = discrete_flow(s.cfg.experiment.steps, x0, p, rec)
    _trajectory_outputs(s, rec)
    _snapshot(s, "final_endpoint.dns1", x.endpoint)
    final = state_norm(x, s.alpha)
    s.manifest.result(nu=nu, steps=s.cfg.experiment.steps, final_state_norm=final)
    s.manifest.criterion("finite", math.isfinite(final))


def exp_check(s: Setup) -> None:
    e = s.cfg.experiment
    c_ball, c_con = resolve_constants(s)
    nu, spec, _ = resolve_ball(s, c_ball, c_con)
    if spec is None:
        return
    p = s.params(nu)
    rows = []
    res = {}
    for flow, fn, n, seed in (
        ("discrete", ball_invariance_trial, e.trials, s.seeds[0]),
        ("continuous", continuous_ball_trial, e.continuous_trials, s.seeds[1]),
    ):
        rep = fn(spec, p, n, int(seed))
        rows += [(flow, i, a, b) for i, (a, b) in enumerate(zip(rep.segment_ratios, rep.endpoint_ratios))]
        res[flow] = {
            "trials": rep.trials,
            "escapes": rep.escapes,
            "max_segment_ratio": rep.max_segment_ratio,
            "max_endpoint_ratio": rep.max_endpoint_ratio,
            "segment_limit": rep.segment_limit,
        }
        s.manifest.criterion(f"ball_{flow}", rep.inside)
    _csv(s.path("balls.csv"), ["flow", "trial", "segment_ratio", "endpoint_ratio"], rows)
    s.manifest.result(ball_trials=res)


def exp_contract(s: Setup) -> None:
    e = s.cfg.experiment
    c_ball, c_con = resolve_constants(s)
    nu, spec, ok = resolve_ball(s, c_ball, c_con)
    if spec is None:
        return
    p = s.params(nu)
    rng = np.random.default_rng(s.seeds[2])
    pairs = [
        (random_state(s.grid, p, rng, spec.R, spec.rho), random_state(s.grid, p, rng, spec.R, spec.rho))
        for _ in range(e.pairs)
    ]
    nus = [nu, 2 * nu, 4 * nu]
    rows = []
    factors = []
    passes = []
    for i, (x1, x2) in enumerate(pairs):
        fs = []
        for v in nus:
            rep = contraction_experiment(x1, x2, e.steps, p.with_nu(v))
            rows += [(i, v, n, d) for n, d in enumerate(rep.distances)]
            fs.append(rep.fitted_factor)
            if v == nu:
                passes.append(rep.passes_half)
        factors.append(fs)
    _csv(s.path("distances.csv"), ["pair", "nu", "n", "distance"], rows)
    monotone = all(f[0] >= f[1] >= f[2] for f in factors)
    s.manifest.result(contraction={"nus": nus, "fitted_factors": factors, "passes_half": passes})
    s.manifest.criterion("contraction_half", all(passes), asserted=ok)
    s.manifest.criterion("factor_nonincreasing", monotone, asserted=ok)


def exp_fixpoint(s: Setup) -> None:
    e = s.cfg.experiment
    c_ball, c_con = resolve_constants(s)
    nu, spec, _ = resolve_ball(s, c_ball, c_con)
    if math.isnan(nu):
        return
    p = s.params(nu)
    x0 = initial_state(s.cfg, p)
    rng = np.random.default_rng(s.seeds[3])
    if spec is not None:
        seg_n, end_n = spec.R, spec.rho
    else:
        seg_n = math.sqrt(x0.segment.l2_norm_sq(1 + s.alpha)) or 1.0
        end_n = sobolev_norm(x0.endpoint, s.alpha) or 1.0
    x1 = random_state(s.grid, p, rng, seg_n, end_n)
    runs = [find_attractor(x, p, e.tol, e.max_iter) for x in (x0, x1)]
    _csv(
        s.path("increments.csv"),
        ["run", "k", "increment"],
        [(r, k + 1, d) for r, res in enumerate(runs) for k, d in enumerate(res.increments)],
    )
    a, b = runs
    gap = state_distance(a.state, b.state, s.alpha)
    cres = continuous_residual(a.continuous(), p)
    stokes = stokes_steady_state(s.f, nu)
    sn = sobolev_norm(stokes, s.alpha)
    stokes_err = sobolev_norm(a.state.endpoint - stokes, s.alpha) / sn if sn > 0 else sobolev_norm(a.state.endpoint, s.alpha)
    _snapshot(s, "attractor_endpoint.dns1", a.state.endpoint)
    s.manifest.result(
        fixpoint={
            "nu": nu,
            "iterations": [r.iterations for r in runs],
            "residuals": [r.residual for r in runs],
            "converged": [r.converged for r in runs],
            "limit_distance": gap,
            "continuous_residual": cres,
            "endpoint_norm_alpha": sobolev_norm(a.state.endpoint, s.alpha),
            "stokes_relative_error": stokes_err,
        }
    )
    s.manifest.criterion("converged", all(r.converged for r in runs))
    s.manifest.criterion("residual", all(r.residual <= 2 * e.tol for r in runs))
    s.manifest.criterion("unique_limit", gap <= 10 * e.tol)
    s.manifest.criterion("continuous_fixed", cres <= 2 * e.tol)


def exp_estimate_c(s: Setup) -> None:
    resolve_constants(s)


def exp_regularity(s: Setup) -> None:
    e = s.cfg.experiment
    c_ball, c_con = resolve_constants(s)
    if s.cfg.params.nu is None:
        nu, _, _ = resolve_ball(s, c_ball, c_con)
        if math.isnan(nu):
            return
    else:
        nu = s.cfg.params.nu
    p = s.params(nu)
    eps = p.mu / 4 if e.epsilon is None else e.epsilon
    rec = TrajectoryRecorder(s.alpha)
    discrete_flow(e.steps, initial_state(s.cfg, p), p, rec)
    _trajectory_outputs(s, rec)
    rep = regularity_diagnostics(rec.trajectory(), p, eps, c_ball)
    s.manifest.result(
        regularity={
            "nu": nu,
            "epsilon": eps,
            "c": c_ball,
            "weighted_sup": rep.weighted_sup,
            "weighted_bound_ratio": rep.weighted_bound_ratio,
            "sup_norm_1+alpha_sq": rep.sup_norm_1a,
            "l2_norm_2+alpha_sq": rep.l2_norm_2a,
            "holder_max": rep.holder_max,
        }
    )
    s.manifest.criterion("finite", rep.finite)
    s.manifest.criterion("weighted_bound", rep.weighted_bound_ok, asserted=False)


EXPERIMENT_FUNCS = {
    "simulate": exp_simulate,
    "check": exp_check,
    "contract": exp_contract,
    "fixpoint": exp_fixpoint,
    "estimate-c": exp_estimate_c,
    "regularity": exp_regularity,
}


def run(cfg: ExperimentConfig, out: str | None = None) -> int:
    """Run the configured experiment; returns the process exit status."""
    out = cfg.output.dir if out is None else out
    os.makedirs(out, exist_ok=True)
    manifest = Manifest(os.path.join(out, "manifest.json"), cfg)
    grid = cfg.torus()
    f = cfg.forcing.build(grid, cfg.params.alpha - 1)
    seeds = [int(x) for x in np.random.SeedSequence(cfg.experiment.seed).generate_state(4)]
    setup = Setup(cfg, out, manifest, f, seeds)
    try:
        EXPERIMENT_FUNCS[cfg.experiment.name](setup)
    except DNSEError as exc:
        manifest.data["status"] = "error"
        manifest.data["error"] = f"{type(exc).__name__}: {exc}"
        manifest.write()
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    manifest.data["status"] = "failed" if manifest.failed else "passed"
    manifest.write()
    return 1 if manifest.failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dnse",
        description="Delayed Navier-Stokes experiments on the periodic torus.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Configuration keys:\n" + help_text() + "\n\n" + CSV_HELP
        + "\n\nEnvironment: DNSE_THREADS caps worker threads; DNSE_KERNELS selects python or compiled kernels.",
    )
    ap.add_argument("--config", metavar="PATH", help="experiment configuration file")
    ap.add_argument("--experiment", metavar="NAME", help="override experiment.name")
    ap.add_argument("--seed", metavar="U64", type=int, help="override experiment.seed")
    ap.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    ap.add_argument("--emit-config", action="store_true", help="print the canonical configuration and exit")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    text = ""
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
    overrides = {}
    if args.experiment is not None:
        overrides["experiment.name"] = args.experiment
    if args.seed is not None:
        overrides["experiment.seed"] = str(args.seed)
    try:
        cfg = parse_config(text, overrides)
    except DNSEError as exc:
        where = f"{args.config}: " if args.config else ""
        print(f"config error: {where}{exc}", file=sys.stderr)
        return 2
    if args.emit_config:
        sys.stdout.write(emit_config(cfg))
        return 0
    return run(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
