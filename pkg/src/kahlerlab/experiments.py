"""Experiment kinds behind the command line, and run-directory persistence.

Every run writes into its own directory:

* ``manifest.json``: config hash, full config, conventions, tool version, status
* ``<table>.csv`` and ``<table>.dat``: diagnostics (the ``.dat`` copy is
  whitespace separated with a ``#`` header, ready for gnuplot)
* ``summary.json``: scalar results
* optional ``.npz`` field files

Everything except the ``created`` stamp in the manifest is a deterministic
function of the configuration.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
import zipfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, RunConfig
from .errors import ConfigError, DegeneratePlane, KahlerLabError
from .geodesic import (
    DIAGNOSTIC_COLUMNS,
    calabi_distance,
    calabi_exact_potential,
    integrate_geodesic,
)
from .geometry import (
    Background,
    MetricParams,
    band_limited_field,
    build_potential,
    inner_product,
    project_tangent,
    safe_potential_scale,
)
from .jacobi import RAUCH_COLUMNS, rauch_report, sectional_curvature
from .otto import FLOW_COLUMNS, Density, heat_flow_exact, integrate_flow
from .solvers import ZERO_MEAN, ma_forward, ma_inverse, poisson_solve
from .spectral import Grid

CONVENTIONS = {
    "volume": "background volume normalized to 1",
    "background_metric": "g = delta/2 (+ i dd-bar psi0 when curved)",
    "laplacian": "Delta f = g^{j kbar} f_{j kbar}, half the Riemannian Laplacian",
    "gradient_metric": "|d psi|^2 = g^{j kbar} psi_j psi_kbar",
    "axis_order": "(x1, y1, ..., xn, yn) with z_j = x_j + i y_j",
    "normalization": "additive constant fixed by the Aubin-type functional I(phi) = 0",
    "tangency": "int psi dmu_phi = 0",
    "otto_density": "rho relative to the background volume form",
    "toric_potential": "F(xi) = xi^2/2 + phi(xi)/2 with a period-1 perturbation",
}


@dataclass
class RunResult:
    tables: dict = field(default_factory=dict)    # name -> (columns, rows)
    summary: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)    # name -> {array name: ndarray}
    failed: list = field(default_factory=list)    # names of failed checks


# ---- deterministic writers ----------------------------------------------------------------
def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def write_dat(path, columns, rows) -> None:
    with open(path, "w") as fh:
        fh.write("# " + " ".join(columns) + "\n")
        for r in rows:
            fh.write(" ".join(f"{r[c]:.17g}" if isinstance(r[c], float) else _fmt(r[c])
                              for c in columns) + "\n")


def save_npz(path, **arrays) -> None:
    """Like ``np.savez`` but with fixed zip timestamps, so equal data gives equal bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in sorted(arrays.items()):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def _json_safe(v):
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_json_safe(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _strided(rows, stride):
    idx = list(range(0, len(rows), stride))
    if rows and idx[-1] != len(rows) - 1:
        idx.append(len(rows) - 1)
    return [rows[i] for i in idx]


# ---- initial data ------------------------------------------------------------------------
def make_background(cfg: RunConfig) -> Background:
    g = cfg["grid"]
    grid = Grid(g["n_complex"], g["points"] or None, g["dealias"])
    a = g["background_amplitude"]
    if a == 0:
        return Background(grid)
    x = grid.coords[0]
    return Background(grid, a / (2 * np.pi ** 2) * np.cos(2 * np.pi * x))


def metric_params(cfg: RunConfig) -> MetricParams:
    m = cfg["metric"]
    return MetricParams(m["alpha"], m["beta"], m["gamma"])


def initial_data(cfg: RunConfig, bg: Background):
    """``(P0, psi0)`` from the configured family."""
    ini = cfg["initial"]
    grid = bg.grid
    x, y = grid.coords[0], grid.coords[1]
    amp, vel = ini["amplitude"], ini["velocity"]
    floor = cfg["solver"]["delta_floor"]
    fam = ini["family"]
    tp = 2 * np.pi
    if fam == "single-mode":
        arg = tp * (ini["mode_x"] * x + ini["mode_y"] * y)
        phi = 0.01 * amp * np.cos(arg)
        psi = 0.02 * vel * np.sin(arg)
    elif fam == "two-mode":
        phi = amp * (0.01 * np.cos(tp * y) + 0.005 * np.sin(tp * (x + y)))
        psi = vel * (0.02 * np.cos(tp * x) + 0.01 * np.sin(2 * tp * y))
    elif fam == "band-limited":
        rng = np.random.default_rng(cfg.seed)
        phi = band_limited_field(grid, rng, ini["max_mode"])
        phi = 0.3 * min(1.0, safe_potential_scale(grid, phi)) * amp * phi
        psi = 0.1 * vel * band_limited_field(grid, rng, ini["max_mode"])
    elif fam == "calabi-oracle":
        u0 = amp * (0.05 * np.cos(tp * x) + 0.03 * np.sin(tp * y))
        P0 = ma_inverse(u0, bg, delta_floor=floor)
        v0 = vel * 0.05 * np.sin(tp * (x - y))
        psi, _ = poisson_solve(P0, v0, ZERO_MEAN)
        return P0, project_tangent(P0, psi)
    else:
        try:
            with np.load(ini["path"]) as data:
                phi, psi = np.array(data["phi"], dtype=float), np.array(data["psi"], dtype=float)
        except (OSError, KeyError) as exc:
            raise ConfigError([f"initial.path: cannot read phi/psi ({exc})"]) from exc
        if phi.shape != grid.shape or psi.shape != grid.shape:
            raise ConfigError([f"initial.path: arrays must have shape {grid.shape}"])
    P0 = build_potential(phi, bg, floor)
    return P0, project_tangent(P0, psi)


# ---- experiment kinds -----------------------------------------------------------------------
def _geodesic(cfg: RunConfig, bg, params=None):
    s = cfg["solver"]
    P0, psi0 = initial_data(cfg, bg)
    params = params or metric_params(cfg)
    traj = integrate_geodesic(P0, psi0, params, s["dt"], s["T"], s["integrator"],
                              cfg["metric"]["mode"], tol=s["tol"])
    return traj


def run_geodesic(cfg: RunConfig) -> RunResult:
    bg = make_background(cfg)
    traj = _geodesic(cfg, bg)
    params = traj.params
    oracle = params.as_tuple()[:2] == (0.0, 0.0)
    stride = cfg["run"]["output_stride"]
    speed0 = traj.diagnostics[0]["speed_sq"]
    rows = []
    idx = _strided(list(range(len(traj))), stride)
    P0, psi0 = traj.potential(0), traj.psis[0]
    for k in idx:
        row = dict(traj.diagnostics[k])
        row["speed_drift"] = abs(row["speed_sq"] - speed0) / speed0 if speed0 else 0.0
        if oracle:
            exact = calabi_exact_potential(P0, psi0, traj.times[k])
            row["oracle_error"] = float(np.max(np.abs(exact.phi - traj.phis[k])))
        rows.append(row)
    cols = DIAGNOSTIC_COLUMNS + ("speed_drift",) + (("oracle_error",) if oracle else ())
    summary = {
        "final_time": traj.times[-1],
        "steps": len(traj) - 1,
        "max_speed_drift": max(r["speed_drift"] for r in rows),
        "max_abs_dropped_mass": max(abs(d["dropped_mass"]) for d in traj.diagnostics),
        "min_eigenvalue": min(d["min_eigenvalue"] for d in traj.diagnostics),
    }
    if oracle:
        summary["max_oracle_error"] = max(r["oracle_error"] for r in rows)
    res = RunResult({"diagnostics": (cols, rows)}, summary)
    res.arrays["final"] = {"t": np.array(traj.times[-1]), "phi": traj.phis[-1],
                           "psi": traj.psis[-1]}
    if cfg["run"]["snapshots"]:
        res.arrays["snapshots"] = {"t": np.array([traj.times[k] for k in idx]),
                                   "phi": np.array([traj.phis[k] for k in idx]),
                                   "psi": np.array([traj.psis[k] for k in idx])}
    return res


def run_jacobi(cfg: RunConfig) -> RunResult:
    bg = make_background(cfg)
    traj = _geodesic(cfg, bg)
    y = bg.grid.coords[1]
    w0 = np.cos(2 * np.pi * cfg["jacobi"]["w_mode_y"] * y)
    rows = rauch_report(traj, w0, probes=cfg["jacobi"]["probes"],
                        rng=np.random.default_rng(cfg.seed))
    for r in rows:
        r["sphere_defect"] = r["jacobi_norm"] - r["sphere_norm"]
    rows = _strided(rows, cfg["run"]["output_stride"])
    cols = RAUCH_COLUMNS + ("sphere_defect",)
    summary = {
        "final_time": rows[-1]["t"],
        "final_jacobi_norm": rows[-1]["jacobi_norm"],
        "max_abs_sphere_defect": max(abs(r["sphere_defect"]) for r in rows),
    }
    return RunResult({"rauch": (cols, rows)}, summary)


def run_curvature(cfg: RunConfig) -> RunResult:
    bg = make_background(cfg)
    P, _ = initial_data(cfg, bg)
    c = cfg["curvature"]
    rng = np.random.default_rng(cfg.seed)
    rows, skipped = [], 0
    for i in range(c["ensemble"]):
        X1 = project_tangent(P, band_limited_field(bg.grid, rng, c["max_mode"]))
        X2 = project_tangent(P, band_limited_field(bg.grid, rng, c["max_mode"]))
        try:
            num, K = sectional_curvature(P, X1, X2, c["metric"], cfg["solver"]["tol"])
        except DegeneratePlane:
            skipped += 1
            continue
        rows.append({"plane": i, "numerator": num, "normalized": K})
    Ks = [r["normalized"] for r in rows] or [float("nan")]
    summary = {"metric": c["metric"], "planes": len(rows), "degenerate": skipped,
               "min_normalized": min(Ks), "max_normalized": max(Ks),
               "max_abs_normalized": max(abs(k) for k in Ks)}
    return RunResult({"curvature": (("plane", "numerator", "normalized"), rows)}, summary)


def run_calabi_distance(cfg: RunConfig) -> RunResult:
    """Numerical Calabi geodesic against the sphere-model distance ``d(u0, u(t)) = |v| t``."""
    bg = make_background(cfg)
    params = MetricParams.calabi()
    traj = _geodesic(cfg, bg, params)
    P0 = traj.potential(0)
    u0 = ma_forward(P0)
    speed = math.sqrt(inner_product(P0, traj.psis[0], traj.psis[0], params))
    rows = []
    for k in _strided(list(range(len(traj))), cfg["run"]["output_stride"]):
        t = traj.times[k]
        d = calabi_distance(u0, ma_forward(traj.potential(k)), bg)
        rows.append({"t": t, "distance": d, "speed_times_t": speed * t,
                     "distance_defect": d - speed * t})
    summary = {"speed": speed, "final_time": rows[-1]["t"],
               "max_abs_distance_defect": max(abs(r["distance_defect"]) for r in rows)}
    return RunResult({"distance": (("t", "distance", "speed_times_t", "distance_defect"), rows)},
                     summary)


def initial_density(cfg: RunConfig, bg: Background) -> Density:
    o = cfg["otto"]
    x, y = bg.grid.coords[0], bg.grid.coords[1]
    tp = 2 * np.pi
    rho = 1.0 + o["rho_a"] * np.sin(tp * (x + y)) + o["rho_b"] * np.cos(tp * (3 * x - y))
    return Density(rho, bg).normalized()


def run_otto(cfg: RunConfig) -> RunResult:
    bg = make_background(cfg)
    s = cfg["solver"]
    rho0 = initial_density(cfg, bg)
    flow = integrate_flow(rho0, s["dt"], s["T"], cfg["otto"]["monitor_energy"])
    mass0 = flow.monitors[0]["mass"]
    rows = []
    for k, m in enumerate(flow.monitors):
        row = dict(m)
        row["mass_drift"] = abs(m["mass"] - mass0)
        row["k_energy_step"] = (m["k_energy"] - flow.monitors[k - 1]["k_energy"]) if k else 0.0
        if bg.is_flat:
            exact = heat_flow_exact(bg.grid, rho0.rho, flow.times[k])
            row["heat_error"] = float(np.max(np.abs(flow.rhos[k] - exact)))
        rows.append(row)
    steps = [r["k_energy_step"] for r in rows[1:]]
    summary = {
        "final_time": flow.times[-1],
        "max_mass_drift": max(r["mass_drift"] for r in rows),
        "max_k_energy_increase": max(steps) if steps else 0.0,
        "min_rho": min(r["min_rho"] for r in rows),
    }
    cols = FLOW_COLUMNS + ("mass_drift", "k_energy_step")
    if bg.is_flat:
        cols = cols + ("heat_error",)
        summary["max_heat_error"] = max(r["heat_error"] for r in rows)
    rows = _strided(rows, cfg["run"]["output_stride"])
    res = RunResult({"flow": (cols, rows)}, summary)
    if cfg["run"]["snapshots"]:
        res.arrays["snapshots"] = {"t": np.array(flow.times), "rho": np.array(flow.rhos)}
    return res


def run_toric(cfg: RunConfig) -> RunResult:
    from .toric import (
        ConvexPotential,
        ToricPath,
        complex_to_toric,
        gradient_toric_residual,
        l2_toric_residual,
        legendre,
        legendre_identity_residuals,
        max_residual,
    )

    t = cfg["toric"]
    M, a = t["M"], t["amplitude"]
    s = np.arange(M) / M
    tp = 2 * np.pi
    F0 = ConvexPotential(a * (0.005 * np.cos(tp * s) + 0.001 * np.sin(2 * tp * s)))
    F1 = ConvexPotential(a * (0.004 * np.sin(tp * s) - 0.002 * np.cos(2 * tp * s)))
    u0, u1 = legendre(F0), legendre(F1)
    biconj = float(np.max(np.abs(legendre(u0).periodic - F0.periodic)))
    ident = legendre_identity_residuals(F0, u0)
    times = np.linspace(0.0, 1.0, 11)
    seg = ToricPath(times, [(1 - tau) * u0.periodic + tau * u1.periodic for tau in times])
    l2 = max(r["max_abs_udd"] for r in l2_toric_residual(seg))
    grad_seg = max_residual(gradient_toric_residual(seg))

    # torus-invariant gradient geodesic carried over by the Legendre transform
    grid = Grid(1, cfg["grid"]["points"] or None)
    x = grid.coords[0]
    bg = Background(grid)
    P0 = build_potential(a * (0.003 * np.cos(tp * x) + 0.001 * np.sin(2 * tp * x)), bg)
    psi0 = project_tangent(P0, a * (0.01 * np.sin(tp * x) + 0.004 * np.cos(2 * tp * x)))
    traj = integrate_geodesic(P0, psi0, MetricParams.gradient(), cfg["solver"]["dt"],
                              cfg["solver"]["T"], tol=cfg["solver"]["tol"])
    stride = t["time_stride"]
    sel = list(range(0, len(traj), stride))
    if len(sel) < 5:
        raise ConfigError([f"toric: solver.T / (solver.dt * toric.time_stride) gives {len(sel)} "
                           "path samples, need at least 5"])
    path = ToricPath.from_potentials(
        [traj.times[k] for k in sel],
        [legendre(complex_to_toric(traj.phis[k][:, 0]), M) for k in sel])
    transported = max_residual(gradient_toric_residual(path))
    checks = [
        ("biconjugation", biconj, 1e-9, "max"),
        ("inverse_slope", ident.inverse_slope, 1e-8, "max"),
        ("reciprocity", ident.reciprocity, 1e-8, "max"),
        ("segment_l2_residual", l2, 1e-10, "max"),
        ("segment_gradient_residual", grad_seg, 1e-6, "min"),
        ("transported_gradient_residual", transported, 1e-5, "max"),
    ]
    rows = []
    for name, value, tol, kind in checks:
        ok = value <= tol if kind == "max" else value > tol
        rows.append({"check": name, "value": value, "threshold": tol, "rule": kind,
                     "passed": "yes" if ok else "no"})
    res = RunResult({"toric": (("check", "value", "threshold", "rule", "passed"), rows)},
                    {r["check"]: r["value"] for r in rows})
    res.failed = [r["check"] for r in rows if r["passed"] == "no"]
    return res


def run_selftest(cfg: RunConfig) -> RunResult:
    from .selftest import run_checks

    rows = run_checks(seed=cfg.seed)
    res = RunResult({"selftest": (("check", "value", "tolerance", "passed"), rows)})
    res.summary = {"checks": len(rows), "passed": sum(r["passed"] == "yes" for r in rows)}
    res.failed = [r["check"] for r in rows if r["passed"] != "yes"]
    return res


RUNNERS = {
    "geodesic": run_geodesic,
    "jacobi": run_jacobi,
    "curvature-probe": run_curvature,
    "calabi-distance": run_calabi_distance,
    "otto-flow": run_otto,
    "toric-check": run_toric,
    "selftest": run_selftest,
}


# ---- run directory ------------------------------------------------------------------------------
EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_COMPUTE = 0, 1, 2, 3


def _error_time(exc) -> float | None:
    for attr in ("t", "s"):
        if hasattr(exc, attr):
            return float(getattr(exc, attr))
    return None


def run(cfg: RunConfig, out_dir) -> tuple[int, dict]:
    """Execute ``cfg`` and persist everything under ``out_dir``; returns ``(exit code, summary)``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "tool": "kahlerlab",
        "version": __version__,
        "kind": cfg.kind,
        "seed": cfg.seed,
        "config_hash": cfg.hash,
        "config": cfg.values,
        "conventions": CONVENTIONS,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    files = []
    try:
        result = RUNNERS[cfg.kind](cfg)
    except KahlerLabError as exc:
        manifest.update(status="error", error=f"{type(exc).__name__}: {exc}",
                        error_time=_error_time(exc), outputs=[])
        write_json(out / "manifest.json", manifest)
        code = EXIT_CONFIG if isinstance(exc, ConfigError) else EXIT_COMPUTE
        return code, {"status": "error", "error": manifest["error"]}
    for name, (cols, rows) in result.tables.items():
        write_csv(out / f"{name}.csv", cols, rows)
        write_dat(out / f"{name}.dat", cols, rows)
        files += [f"{name}.csv", f"{name}.dat"]
    for name, arrays in result.arrays.items():
        save_npz(out / f"{name}.npz", **arrays)
        files.append(f"{name}.npz")
    summary = dict(result.summary, config_hash=cfg.hash, kind=cfg.kind,
                   failed_checks=result.failed)
    write_json(out / "summary.json", summary)
    files.append("summary.json")
    status = "failed" if result.failed else "ok"
    manifest.update(status=status, outputs=sorted(files))
    write_json(out / "manifest.json", manifest)
    summary["status"] = status
    return (EXIT_CHECK_FAILED if result.failed else EXIT_OK), summary


# ---- sweeps ----------------------------------------------------------------------------------------
def _sweep_one(job):
    index, values, out_dir = job
    try:
        cfg = RunConfig(values)
        code, summary = run(cfg, out_dir)
    except Exception as exc:  # a broken run must not stop the sweep
        return index, 3, {"status": "error", "error": f"{type(exc).__name__}: {exc}"}
    return index, code, summary


def sweep(configs: list, out_dir, parallel: int = 1) -> list[dict]:
    """Run independent configurations and merge their summaries.

    Items of ``configs`` are ``RunConfig`` objects or, for inputs that failed
    validation, ``ConfigError`` instances.  Per-run failures are recorded in
    the table, never raised.  Consecutive geodesic runs are also compared by
    the max difference of their endpoints.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(i, c.values, str(out / f"run_{i:03d}")) for i, c in enumerate(configs)
            if isinstance(c, RunConfig)]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = {r[0]: r for r in pool.map(_sweep_one, jobs)}
    else:
        results = {j[0]: _sweep_one(j) for j in jobs}
    rows = []
    for i, cfg in enumerate(configs):
        if not isinstance(cfg, RunConfig):
            rows.append({"run": i, "kind": "", "config_hash": "", "exit_code": EXIT_CONFIG,
                         "status": "config-error", "error": str(cfg)})
            continue
        _, code, summary = results[i]
        row = {"run": i, "kind": cfg.kind, "config_hash": cfg.hash, "exit_code": code,
               "status": summary.get("status", "error"), "error": summary.get("error", "")}
        for k, v in summary.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool) and k not in row:
                row[k] = v
        rows.append(row)
    scalar_keys = sorted({k for r in rows for k in r} - {"run", "kind", "config_hash",
                                                         "exit_code", "status", "error"})
    cols = ("run", "kind", "config_hash", "exit_code", "status", "error") + tuple(scalar_keys)
    for r in rows:
        for k in scalar_keys:
            r.setdefault(k, "")
    write_csv(out / "sweep_summary.csv", cols, rows)

    diffs = []
    for a, b in zip(rows, rows[1:]):
        fa, fb = out / f"run_{a['run']:03d}" / "final.npz", out / f"run_{b['run']:03d}" / "final.npz"
        if a["status"] == "ok" and b["status"] == "ok" and fa.exists() and fb.exists():
            with np.load(fa) as A, np.load(fb) as B:
                if A["phi"].shape == B["phi"].shape:
                    diffs.append({"run_a": a["run"], "run_b": b["run"],
                                  "max_endpoint_difference":
                                      float(np.max(np.abs(A["phi"] - B["phi"])))})
    write_csv(out / "sweep_differences.csv", ("run_a", "run_b", "max_endpoint_difference"), diffs)
    write_json(out / "sweep_summary.json", {"runs": rows, "endpoint_differences": diffs})
    return rows
