"""Run configuration: schema, parsing (INI or JSON), validation and hashing.

A configuration is a two-level mapping ``section -> key -> value``.  Every
key has a declared type and default; unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigError

KINDS = ("geodesic", "jacobi", "curvature-probe", "calabi-distance", "otto-flow",
         "toric-check", "selftest")

SCHEMA_VERSION = "1.0"

# section -> key -> (type, default, allowed values or None, help)
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "kind": (str, "geodesic", KINDS, "experiment kind"),
        "seed": (int, 0, None, "seed for random ensembles and band-limited data"),
        "output_stride": (int, 10, None, "write every k-th time step to the data files"),
        "snapshots": (bool, False, None, "also write field snapshots (npz)"),
    },
    "grid": {
        "n_complex": (int, 1, (1, 2), "complex dimension of the torus"),
        "points": (int, 0, None, "points per real axis; 0 selects 32 (n=1) or 16 (n=2)"),
        "dealias": (bool, False, None, "apply the 2/3 rule to nonlinear products"),
        "background_amplitude": (float, 0.0, None,
                                 "curved background psi0 = a/(2 pi^2) cos(2 pi x); 0 is flat"),
    },
    "metric": {
        "alpha": (float, 0.0, None, "weight of the L2 (Mabuchi) part"),
        "beta": (float, 1.0, None, "weight of the gradient (Dirichlet) part"),
        "gamma": (float, 1.0, None, "weight of the Calabi part"),
        "mode": (str, "solvability_corrected", ("solvability_corrected", "paper_printed"),
                 "sign convention of the geodesic right-hand side"),
    },
    "initial": {
        "family": (str, "two-mode",
                   ("single-mode", "two-mode", "band-limited", "calabi-oracle", "file"),
                   "initial-data recipe"),
        "amplitude": (float, 1.0, None, "scale factor for the potential phi0"),
        "velocity": (float, 1.0, None, "scale factor for the velocity psi0"),
        "mode_x": (int, 1, None, "x wave number (single-mode)"),
        "mode_y": (int, 0, None, "y wave number (single-mode)"),
        "max_mode": (int, 2, None, "largest wave number (band-limited)"),
        "path": (str, "", None, "npz file with arrays phi and psi (file family)"),
    },
    "solver": {
        "dt": (float, 1e-3, None, "time step"),
        "T": (float, 0.1, None, "final time"),
        "integrator": (str, "rk4", ("rk4", "picard"), "time integrator"),
        "tol": (float, 1e-12, None, "relative tolerance of the elliptic solves"),
        "delta_floor": (float, 1e-6, None, "positivity floor for the metric eigenvalues"),
    },
    "jacobi": {
        "w_mode_y": (int, 1, None, "wave number of the initial Jacobi velocity cos(2 pi k y)"),
        "probes": (int, 4, None, "curvature probes per probe time in the Rauch table"),
    },
    "curvature": {
        "metric": (str, "gradient", ("mabuchi", "gradient", "calabi"), "curvature to probe"),
        "ensemble": (int, 100, None, "number of random planes"),
        "max_mode": (int, 2, None, "largest wave number of the random plane generators"),
    },
    "otto": {
        "rho_a": (float, 0.3, None, "amplitude of sin(2 pi (x + y)) in the initial density"),
        "rho_b": (float, 0.2, None, "amplitude of cos(2 pi (3x - y)) in the initial density"),
        "monitor_energy": (bool, True, None, "evaluate the K-energy at recorded steps"),
    },
    "toric": {
        "M": (int, 64, None, "grid size of the symplectic potential"),
        "amplitude": (float, 1.0, None, "scale of the periodic part of F"),
        "time_stride": (int, 10, None, "sub-sampling of the geodesic before time differencing"),
    },
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(section: str, key: str, raw: Any, problems: list[str]):
    typ, _, allowed, _ = SCHEMA[section][key]
    where = f"{section}.{key}"
    try:
        if typ is bool:
            if isinstance(raw, bool):
                val = raw
            elif str(raw).strip().lower() in _TRUE:
                val = True
            elif str(raw).strip().lower() in _FALSE:
                val = False
            else:
                raise ValueError(raw)
        elif typ is int:
            if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
                raise ValueError(raw)
            val = int(str(raw).strip()) if isinstance(raw, str) else int(raw)
        elif typ is float:
            if isinstance(raw, bool):
                raise ValueError(raw)
            val = float(raw)
        else:
            val = str(raw).strip()
    except (TypeError, ValueError):
        problems.append(f"{where}: expected {typ.__name__}, got {raw!r}")
        return None
    if allowed is not None and val not in allowed:
        problems.append(f"{where}: {val!r} not in {list(allowed)}")
        return None
    return val


def defaults() -> dict[str, dict[str, Any]]:
    return {s: {k: spec[1] for k, spec in keys.items()} for s, keys in SCHEMA.items()}


def _check_ranges(cfg: dict, problems: list[str]) -> None:
    positive = [("solver", "dt"), ("solver", "T"), ("solver", "tol"), ("solver", "delta_floor")]
    for s, k in positive:
        if cfg[s][k] <= 0:
            problems.append(f"{s}.{k}: must be positive")
    for s, k in [("run", "output_stride"), ("curvature", "ensemble"), ("toric", "time_stride"),
                 ("initial", "max_mode"), ("curvature", "max_mode")]:
        if cfg[s][k] < 1:
            problems.append(f"{s}.{k}: must be at least 1")
    for k in ("alpha", "beta", "gamma"):
        if cfg["metric"][k] < 0:
            problems.append(f"metric.{k}: must be non-negative")
    if cfg["grid"]["points"] and (cfg["grid"]["points"] < 8 or cfg["grid"]["points"] % 2):
        problems.append("grid.points: must be an even number >= 8 (or 0 for the default)")
    if cfg["toric"]["M"] < 8:
        problems.append("toric.M: must be at least 8")
    if cfg["initial"]["family"] == "file" and not cfg["initial"]["path"]:
        problems.append("initial.path: required for the file family")
    if cfg["run"]["seed"] < 0:
        problems.append("run.seed: must be non-negative")


def validate(raw: dict) -> dict[str, dict[str, Any]]:
    """Merge ``raw`` over the defaults; raise ``ConfigError`` listing every problem."""
    problems: list[str] = []
    cfg = defaults()
    if not isinstance(raw, dict):
        raise ConfigError(["top level: expected a mapping of sections"])
    for section, items in raw.items():
        if section not in SCHEMA:
            problems.append(f"{section}: unknown section")
            continue
        if not isinstance(items, dict):
            problems.append(f"{section}: expected a mapping of keys")
            continue
        for key, value in items.items():
            if key not in SCHEMA[section]:
                problems.append(f"{section}.{key}: unknown key")
                continue
            val = _coerce(section, key, value, problems)
            if val is not None:
                cfg[section][key] = val
    if not problems:
        _check_ranges(cfg, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_text(text: str, fmt: str) -> dict:
    if fmt == "json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"json: {exc}"]) from exc
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (T, M)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"ini: {exc}"]) from exc
    return {s: dict(parser.items(s)) for s in parser.sections()}


def load(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from exc
    fmt = "json" if path.suffix.lower() == ".json" else "ini"
    return parse_text(text, fmt)


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``values`` is the complete section mapping."""

    values: dict

    @classmethod
    def from_mapping(cls, raw: dict | None = None, **overrides) -> "RunConfig":
        raw = copy.deepcopy(raw or {})
        for dotted, value in overrides.items():
            section, key = dotted.split(".", 1)
            raw.setdefault(section, {})[key] = value
        return cls(validate(raw))

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        return cls.from_mapping(load(path), **overrides)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def kind(self) -> str:
        return self.values["run"]["kind"]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def canonical(self) -> str:
        return json.dumps(self.values, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_overrides(self, **overrides) -> "RunConfig":
        return RunConfig.from_mapping(self.values, **overrides)

    def to_ini(self) -> str:
        lines = []
        for section, items in self.values.items():
            lines.append(f"[{section}]")
            for key, value in items.items():
                lines.append(f"{key} = {str(value).lower() if isinstance(value, bool) else value}")
            lines.append("")
        return "\n".join(lines)


def schema_markdown() -> str:
    """Human-readable table of every section and key."""
    out = [f"# Run configuration schema (version {SCHEMA_VERSION})", "",
           "INI files use `[section]` headers and `key = value` lines. JSON files use",
           "an object of sections holding objects of keys. Unknown keys are rejected.", ""]
    for section, keys in SCHEMA.items():
        out += [f"## [{section}]", "", "| key | type | default | allowed | meaning |",
                "|---|---|---|---|---|"]
        for key, (typ, default, allowed, help_) in keys.items():
            allowed_s = ", ".join(map(str, allowed)) if allowed else ""
            out.append(f"| {key} | {typ.__name__} | {default!r} | {allowed_s} | {help_} |")
        out.append("")
    return "\n".join(out)
