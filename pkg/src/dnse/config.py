"""Experiment configuration: strict sectioned ``key = value`` text.

Example::

    [params]
    nu = auto
    alpha = 1.0

    [forcing]
    kind = single_mode
    k = 1, 0, 0
    polarization = 0, 1, 0

    [experiment]
    name = fixpoint

Keys may also be written flat as ``section.key = value`` before any section
header. ``#`` starts a comment. Unknown sections or keys, duplicates and
malformed values are errors carrying the line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Mapping

import numpy as np

from .errors import ConfigError
from .spectral import SpectralField, TorusGrid, random_field
from .stepper import SCHEMES

EXPERIMENTS = ("simulate", "check", "contract", "fixpoint", "estimate-c", "regularity")
FIELD_KINDS = ("zero", "single_mode", "random")
READINGS = ("e_nu", "literal")
AUTO = "auto"


# --- value converters ------------------------------------------------------------


def _float(v: str) -> float:
    t = v.replace(" ", "").lower()
    if t in ("2pi", "2*pi"):
        return 2.0 * math.pi
    x = float(t)
    if not math.isfinite(x):
        raise ValueError("must be finite")
    return x


def _int(v: str) -> int:
    return int(v)


def _bool(v: str) -> bool:
    t = v.lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _float_or_auto(v: str) -> float | None:
    return None if v.lower() == AUTO else _float(v)


def _choice(options: tuple[str, ...]) -> Callable[[str], str]:
    def conv(v: str) -> str:
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v

    return conv


def _vec(conv: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(v: str) -> tuple:
        parts = [p.strip() for p in v.split(",")]
        if len(parts) != 3:
            raise ValueError("expected three comma-separated components")
        return tuple(conv(p) for p in parts)

    return parse


def _fmt(v: Any) -> str:
    if v is None:
        return AUTO
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


# --- sections ---------------------------------------------------------------------


@dataclass(frozen=True)
class GridConfig:
    N: int = 16
    L: float = 2.0 * math.pi


@dataclass(frozen=True)
class ParamConfig:
    nu: float | None = None
    nu_start: float = 1.0
    mu: float = 0.1
    alpha: float = 1.0
    M: int = 64
    scheme: str = "etd1"


@dataclass(frozen=True)
class FieldSpec:
    """``zero``, ``single_mode`` (``k``, ``amplitude``, ``polarization``) or ``random`` (``seed``, ``decay``, ``norm``)."""

    kind: str = "zero"
    k: tuple[int, int, int] = (1, 0, 0)
    amplitude: float = 1.0
    polarization: tuple[float, float, float] = (0.0, 1.0, 0.0)
    seed: int = 0
    decay: float = 3.0
    norm: float = 1.0

    def build(self, grid: TorusGrid, s: float) -> SpectralField:
        """The field; ``random`` fields are rescaled to ``norm`` in ``V^s``."""
        if self.kind == "zero":
            return SpectralField.zeros(grid)
        if self.kind == "single_mode":
            pol = np.asarray(self.polarization, dtype=float)
            pol = pol / np.linalg.norm(pol)
            return SpectralField.from_modes(grid, {self.k: self.amplitude * pol})
        rng = np.random.default_rng(self.seed)
        return random_field(grid, rng, decay=self.decay, norm=self.norm, s=s)


@dataclass(frozen=True)
class ExperimentSection:
    name: str | None = None
    seed: int = 0
    steps: int = 8
    trials: int = 20
    continuous_trials: int = 10
    pairs: int = 5
    tol: float = 1e-10
    max_iter: int = 500
    budget: int = 50
    safety: float = 2.0
    c: float | None = None
    c_contraction: float | None = None
    epsilon: float | None = None
    reading: str = "e_nu"
    search_budget: int = 1601
    snapshots: bool = False


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    params: ParamConfig = field(default_factory=ParamConfig)
    forcing: FieldSpec = field(default_factory=FieldSpec)
    segment: FieldSpec = field(default_factory=FieldSpec)
    endpoint: FieldSpec = field(default_factory=FieldSpec)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    output: OutputConfig = field(default_factory=OutputConfig)

    def torus(self) -> TorusGrid:
        return TorusGrid(self.grid.N, self.grid.L)


_FIELD_KEYS: dict[str, tuple[Callable[[str], Any], str]] = {
    "kind": (_choice(FIELD_KINDS), "zero | single_mode | random"),
    "k": (_vec(int), "integer wavenumber of a single mode"),
    "amplitude": (_float, "single-mode amplitude"),
    "polarization": (_vec(_float), "single-mode direction, must be orthogonal to k"),
    "seed": (_int, "seed of a random field"),
    "decay": (_float, "random spectra decay like |zeta|^-decay"),
    "norm": (_float, "norm a random field is rescaled to"),
}

# section header -> (attribute on ExperimentConfig, {key: (converter, help)})
SCHEMA: dict[str, tuple[str, dict[str, tuple[Callable[[str], Any], str]]]] = {
    "grid": (
        "grid",
        {
            "N": (_int, "modes per dimension, even, >= 4"),
            "L": (_float, "torus side length (2pi gives lambda1 = 1)"),
        },
    ),
    "params": (
        "params",
        {
            "nu": (_float_or_auto, "viscosity, or auto to scan upward by doubling (required)"),
            "nu_start": (_float, "first viscosity of the auto scan"),
            "mu": (_float, "delay"),
            "alpha": (_float, "regularity exponent, must exceed 1/2"),
            "M": (_int, "substeps per delay interval"),
            "scheme": (_choice(SCHEMES), " | ".join(SCHEMES)),
        },
    ),
    "forcing": ("forcing", _FIELD_KEYS),
    "initial.segment": ("segment", _FIELD_KEYS),
    "initial.endpoint": ("endpoint", _FIELD_KEYS),
    "experiment": (
        "experiment",
        {
            "name": (_choice(EXPERIMENTS), " | ".join(EXPERIMENTS) + " (required)"),
            "seed": (_int, "seed for random states and constant estimates"),
            "steps": (_int, "delay intervals to simulate or iterate"),
            "trials": (_int, "ball-boundary trials for the discrete flow"),
            "continuous_trials": (_int, "history trials for the continuous flow"),
            "pairs": (_int, "random pairs in the contraction experiment"),
            "tol": (_float, "fixed-point tolerance in the state norm"),
            "max_iter": (_int, "fixed-point iteration cap"),
            "budget": (_int, "random probes per trilinear-constant estimate"),
            "safety": (_float, "factor applied to estimated constants"),
            "c": (_float_or_auto, "constant for the ball conditions, auto to estimate"),
            "c_contraction": (_float_or_auto, "constant of the difference estimate, auto to estimate"),
            "epsilon": (_float_or_auto, "start of the regularity window, auto for mu/4"),
            "reading": (_choice(READINGS), "exponent reading of the contraction conditions"),
            "search_budget": (_int, "points of the logarithmic radius grid"),
            "snapshots": (_bool, "write DNS1 field snapshots"),
        },
    ),
    "output": ("output", {"dir": (str, "output directory")}),
}

REQUIRED = (("params", "nu"), ("experiment", "name"))


def _default_text(section: str, key: str) -> str:
    attr = SCHEMA[section][0]
    return _fmt(getattr(getattr(ExperimentConfig(), attr), key))


def help_text() -> str:
    """Every section and key with its default, for ``--help``."""
    lines = []
    for section, (_, keys) in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (_, doc) in keys.items():
            required = (section, key) in REQUIRED
            default = "" if required else f" (default {_default_text(section, key)})"
            lines.append(f"  {key}: {doc}{default}")
    return "\n".join(lines)


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return (line if i < 0 else line[:i]).strip()


def parse_config(text: str, overrides: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Parse and validate a configuration.

    ``overrides`` maps ``section.key`` to raw values applied after the text,
    as the command line does for ``--experiment`` and ``--seed``.
    """
    raw: dict[tuple[str, str], tuple[str, int | None]] = {}
    section: str | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line)
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ConfigError(f"malformed section header {body!r}", line=lineno)
            section = body[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]; expected one of {', '.join(SCHEMA)}", line=lineno)
            continue
        if "=" not in body:
            raise ConfigError(f"expected key = value, got {body!r}", line=lineno)
        key, value = (p.strip() for p in body.split("=", 1))
        sec = section
        if sec is None:
            sec, _, key = key.rpartition(".")
            if not sec:
                raise ConfigError(f"key {key!r} outside a section; write [section] or section.key", line=lineno, key=key)
            if sec not in SCHEMA:
                raise ConfigError(f"unknown section {sec!r}", line=lineno, key=key)
        if key not in SCHEMA[sec][1]:
            raise ConfigError(f"unknown key {key!r} in [{sec}]", line=lineno, key=key)
        if (sec, key) in raw:
            raise ConfigError(f"duplicate key {sec}.{key} (first set on line {raw[sec, key][1]})", line=lineno, key=key)
        raw[sec, key] = (value, lineno)
    for dotted, value in (overrides or {}).items():
        sec, _, key = dotted.rpartition(".")
        if sec not in SCHEMA or key not in SCHEMA[sec][1]:
            raise ConfigError(f"unknown override {dotted!r}", key=dotted)
        raw[sec, key] = (value, None)

    parts: dict[str, dict[str, Any]] = {attr: {} for attr, _ in SCHEMA.values()}
    for (sec, key), (value, lineno) in raw.items():
        conv = SCHEMA[sec][1][key][0]
        try:
            parts[SCHEMA[sec][0]][key] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"{sec}.{key}: invalid value {value!r}: {exc}", line=lineno, key=key) from None
    missing = [f"{s}.{k}" for s, k in REQUIRED if (s, k) not in raw]
    if missing:
        raise ConfigError("missing required keys: " + ", ".join(missing))
    base = ExperimentConfig()
    cfg = ExperimentConfig(**{attr: replace(getattr(base, attr), **vals) for attr, vals in parts.items()})
    _validate(cfg, {k: ln for k, (_, ln) in raw.items()})
    return cfg


def _validate(cfg: ExperimentConfig, lines: Mapping[tuple[str, str], int | None]) -> None:
    def fail(sec: str, key: str, msg: str) -> None:
        raise ConfigError(msg, line=lines.get((sec, key)), key=key)

    g, p, e = cfg.grid, cfg.params, cfg.experiment
    if g.N < 4 or g.N % 2:
        fail("grid", "N", f"N must be an even integer >= 4, got {g.N}")
    if not g.L > 0:
        fail("grid", "L", "L must be positive")
    if not p.alpha > 0.5:
        fail("params", "alpha", f"alpha must exceed 1/2, got {p.alpha}")
    if p.nu is not None and not p.nu > 0:
        fail("params", "nu", "nu must be positive or auto")
    if not p.nu_start > 0:
        fail("params", "nu_start", "nu_start must be positive")
    if not p.mu > 0:
        fail("params", "mu", "mu must be positive")
    if p.M < 1:
        fail("params", "M", "M must be at least 1")
    for sec, spec in (("forcing", cfg.forcing), ("initial.segment", cfg.segment), ("initial.endpoint", cfg.endpoint)):
        if spec.kind == "single_mode":
            k = np.asarray(spec.k, dtype=float)
            pol = np.asarray(spec.polarization, dtype=float)
            if not k.any():
                fail(sec, "k", "k must be nonzero")
            if max(abs(x) for x in spec.k) >= g.N // 2:
                fail(sec, "k", f"k={spec.k} is not retained on a grid with N={g.N}")
            if not pol.any():
                fail(sec, "polarization", "polarization must be nonzero")
            if abs(k @ pol) > 1e-12 * np.linalg.norm(k) * np.linalg.norm(pol):
                fail(sec, "polarization", "polarization must be orthogonal to k")
        if spec.kind == "random" and spec.norm < 0:
            fail(sec, "norm", "norm must be nonnegative")
    for key in ("steps", "trials", "continuous_trials", "pairs", "max_iter", "budget"):
        if getattr(e, key) < 0:
            fail("experiment", key, f"{key} must be nonnegative")
    if e.search_budget < 2:
        fail("experiment", "search_budget", "search_budget must be at least 2")
    if not e.tol > 0:
        fail("experiment", "tol", "tol must be positive")
    if not e.safety > 0:
        fail("experiment", "safety", "safety must be positive")
    if e.epsilon is not None and not e.epsilon > 0:
        fail("experiment", "epsilon", "epsilon must be positive or auto")


def emit_config(cfg: ExperimentConfig) -> str:
    """Canonical text listing every key; ``parse_config(emit_config(c)) == c``."""
    out = []
    for section, (attr, keys) in SCHEMA.items():
        out.append(f"[{section}]")
        obj = getattr(cfg, attr)
        for key in keys:
            out.append(f"{key} = {_fmt(getattr(obj, key))}")
        out.append("")
    return "\n".join(out)


def as_dict(cfg: ExperimentConfig) -> dict[str, dict[str, Any]]:
    """Plain nested mapping, for manifests."""
    d = {}
    for section, (attr, _) in SCHEMA.items():
        obj = getattr(cfg, attr)
        d[section] = {f.name: _jsonable(getattr(obj, f.name)) for f in fields(obj)}
    return d


def _jsonable(v: Any) -> Any:
    return list(v) if isinstance(v, tuple) else v
