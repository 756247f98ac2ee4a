"""Command-line driver: configuration, runs, energy concentration and CSV/JSON output.

    python3 -m glvortex profile --epsilon 1.0 --rmax 20 --nodes 4001 --out out/profile
    python3 -m glvortex kernel --epsilon 1.0 --grid 15,0.1 --out out/kernel
    python3 -m glvortex model-op --epsilon-list 0.4,0.2,0.1 --out out/model
    python3 -m glvortex glue --config glue.json
    python3 -m glvortex sweep --config sweep.json

Exit codes: 0 all checks passed, 1 a check failed, 2 invalid configuration,
3 a solver raised (the error is written to the manifest and to stderr).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ansatz, gluing, linop, vortex2d
from .errors import ConfigError, GLError
from .geometry import KINDS, ModelManifold

log = logging.getLogger("glvortex")

TWO_PI = 2 * np.pi
COMMANDS = ("profile", "kernel", "model-op", "glue", "sweep")
EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


# ------------------------------------------------------------------ configuration

@dataclass
class RunConfig:
    command: str
    output: str = "out"
    manifold: dict = field(default_factory=lambda: {"kind": "warped3", "L0": TWO_PI, "perturbation": 0.0})
    epsilon: float | None = None
    epsilons: list = field(default_factory=list)
    profile: dict = field(default_factory=lambda: {"rmax_factor": 25.0, "nodes": 4001})
    grid: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=lambda: {"inner": 1e-11, "outer": 1e-9})
    weights: dict = field(default_factory=lambda: {"mu": None, "gamma": 0.5})
    workers: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("$", "configuration must be a JSON object")
        known = set(cls.__dataclass_fields__)
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        if "command" not in data:
            raise ConfigError("command", "missing")
        base = cls(command=data["command"])
        merged = {}
        for key in known:
            default = getattr(base, key)
            val = data.get(key, default)
            if isinstance(default, dict) and isinstance(val, dict):
                val = {**default, **val}
            merged[key] = val
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("$", f"invalid JSON ({exc})") from exc
        except OSError as exc:
            raise ConfigError("$", f"cannot read {path} ({exc})") from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError("command", f"expected one of {COMMANDS}, got {self.command!r}")
        kind = self.manifold.get("kind", "warped3")
        if kind not in KINDS:
            raise ConfigError("manifold.kind", f"expected one of {KINDS}, got {kind!r}")
        _positive(self.manifold.get("L0", TWO_PI), "manifold.L0")
        pert = self.manifold.get("perturbation", 0.0)
        if not _is_number(pert) or abs(pert) >= 2.4:
            raise ConfigError("manifold.perturbation", "must be a number with |value| < 2.4")
        if self.epsilon is not None:
            _positive(self.epsilon, "epsilon")
        if not isinstance(self.epsilons, list):
            raise ConfigError("epsilons", "must be a list")
        for i, e in enumerate(self.epsilons):
            _positive(e, f"epsilons[{i}]")
        if self.command == "sweep":
            if len(self.epsilons) < 2:
                raise ConfigError("epsilons", "a sweep needs at least two values")
            if any(b >= a for a, b in zip(self.epsilons, self.epsilons[1:])):
                raise ConfigError("epsilons", "must be strictly decreasing")
        elif self.command == "model-op":
            if not self.epsilons:
                raise ConfigError("epsilons", "missing")
        elif self.epsilon is None:
            raise ConfigError("epsilon", "missing")
        for sect in ("profile", "grid", "tolerances"):
            for key, val in getattr(self, sect).items():
                _positive(val, f"{sect}.{key}")
        if self.weights.get("mu") is not None:
            _positive(self.weights["mu"], "weights.mu")
        gam = self.weights.get("gamma", 0.5)
        if not _is_number(gam) or not 0 < gam < 1:
            raise ConfigError("weights.gamma", "must lie in (0, 1)")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers", "must be a positive integer")

    def manifold_model(self) -> ModelManifold:
        m = self.manifold
        return ModelManifold(m.get("kind", "warped3"), float(m.get("L0", TWO_PI)),
                             float(m.get("tube_radius", 0.5)), float(m.get("perturbation", 0.0)))

    def tube_grid(self, eps: float) -> ansatz.TubeGrid:
        g = self.grid
        return ansatz.TubeGrid.for_epsilon(eps, int(g.get("n_x", 16)), float(g.get("tube_factor", 12.0)),
                                          float(g.get("h_factor", 3.0)),
                                          float(self.manifold.get("L0", TWO_PI)))

    def vortex(self, eps: float) -> vortex2d.VortexProfile:
        p = self.profile
        if "rmax" in p:
            rmax = float(p["rmax"])
        else:
            rmax = float(p.get("rmax_factor", 25.0)) * eps
        return vortex2d.solve_vortex_profile(eps, rmax, int(p.get("nodes", 4001)))


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and np.isfinite(x)


def _positive(x, path):
    if not _is_number(x) or x <= 0:
        raise ConfigError(path, f"must be a positive number, got {x!r}")


# ------------------------------------------------------------------ energy concentration

@dataclass(frozen=True)
class ProbeFunction:
    """chi(x, y1, y2) with its integral along S (arc length)."""
    name: str
    fn: object
    s_integral: float
    c1_norm: float


def builtin_test_functions(L0: float = TWO_PI) -> list[ProbeFunction]:
    k = TWO_PI / L0
    bump_grad = np.sqrt(2.0) * np.exp(-0.5)
    return [
        ProbeFunction("constant", lambda x, y1, y2: np.ones_like(x), L0, 1.0),
        ProbeFunction("cos_x", lambda x, y1, y2: np.cos(k * x), 0.0, max(1.0, k)),
        ProbeFunction("y_bump", lambda x, y1, y2: np.exp(-(y1**2 + y2**2)), L0, max(1.0, bump_grad)),
    ]


def annulus_test_function(r_in: float, r_out: float) -> ProbeFunction:
    """Smooth bump supported in r_in <= |y| <= r_out (zero on S)."""
    def fn(x, y1, y2):
        r = np.sqrt(y1**2 + y2**2)
        t = np.clip((r - r_in) / (r_out - r_in), 0.0, 1.0)
        return np.where((t > 0) & (t < 1), np.exp(-1.0 / np.maximum(t * (1 - t), 1e-300)) * np.exp(4.0), 0.0)
    return ProbeFunction("annulus", fn, 0.0, 1.0)


@dataclass
class EnergyReport:
    epsilon: float
    x: np.ndarray
    fiber_energy: np.ndarray         # fibre area measure dy1 dy2
    fiber_energy_volume: np.ndarray  # Riemannian volume of M, per unit x
    half_widths: np.ndarray          # per slice, radius in |y| carrying 90% of the fibre energy
    half_width: float                # same for the energy of the whole tube
    pairings: list
    centers: np.ndarray
    zero_distance: float
    tube_radius: float

    @property
    def fiber_ratio(self):
        return self.fiber_energy / TWO_PI

    def max_fiber_deviation(self) -> float:
        return float(np.max(np.abs(self.fiber_ratio - 1.0)))

    def summary(self) -> dict:
        return {"epsilon": self.epsilon, "half_width": self.half_width,
                "half_width_over_epsilon": self.half_width / self.epsilon,
                "max_slice_half_width": float(np.max(self.half_widths)),
                "fiber_energy_over_2pi": [float(np.min(self.fiber_ratio)), float(np.max(self.fiber_ratio))],
                "fiber_energy_volume_over_2pi": [float(np.min(self.fiber_energy_volume) / TWO_PI),
                                                 float(np.max(self.fiber_energy_volume) / TWO_PI)],
                "zero_distance": self.zero_distance, "pairings": self.pairings}


def energy_terms(apx: ansatz.ApproximateSolution, X):
    """Positions and energies of every plaquette, link and node term.

    Returns (pos, e_vol, e_fiber): e_vol are the terms of the lattice energy (Riemannian
    volume), e_fiber the same densities against the coordinate measure dx dy1 dy2.
    """
    lat = apx.lattice
    gl = apx.lattice_gl()
    a, phi = lat.split(X)
    circ = lat.curl_phase @ a
    th = lat.link_h * a
    p0 = phi[lat.link_n0]
    u = np.exp(-1j * th) * phi[lat.link_n1]
    e = np.concatenate([gl.W_plaq * circ**2, gl.W_link * np.abs(u - p0) ** 2,
                        gl.W_node * (1 - np.abs(phi) ** 2) ** 2 / (4 * apx.epsilon**2)])
    pos = np.concatenate([lat.plaq_center, lat.link_mid, lat.node_pos])
    sqrt_det = np.sqrt(np.prod(apx.manifold.metric_diag(pos), axis=1))
    return pos, e, e / sqrt_det


def _slice_weights(xpos, h_x, n_x):
    """Split each term between the two nearest x-slices (terms sit on nodes or midpoints)."""
    t = xpos / h_x
    lo = np.floor(t + 1e-9).astype(int)
    frac = np.clip(t - lo, 0.0, 1.0)
    return lo % n_x, (lo + 1) % n_x, 1.0 - frac, frac


def _radius_fraction(r, e, fraction=0.9, width=0.0):
    """Radius enclosing `fraction` of the energy; each term is spread uniformly over
    [r - width/2, r + width/2] so the answer does not snap to the lattice radii."""
    if width <= 0:
        order = np.argsort(r)
        cum = np.cumsum(e[order])
        return float(np.interp(fraction * cum[-1], cum, r[order]))
    lo = r - 0.5 * width
    knots = np.unique(np.concatenate([lo, lo + width]))
    # cumulative energy is piecewise linear between the knots
    slope = np.zeros(knots.size)
    np.add.at(slope, np.searchsorted(knots, lo), e / width)
    np.add.at(slope, np.searchsorted(knots, lo + width), -e / width)
    rate = np.cumsum(slope)[:-1]
    cum = np.concatenate([[0.0], np.cumsum(rate * np.diff(knots))])
    return float(np.interp(fraction * cum[-1], cum, knots))


def energy_concentration(solution, test_functions: list | None = None, fraction: float = 0.9) -> EnergyReport:
    """Fibre energies, 90% half-widths, test-function pairings and the zero set of phi.

    solution: a CorrectedSolution (or an ApproximateSolution, measured as is).
    Pairings use the fibre measure: sum over slices of h_x * sum of chi * e_fiber / h_x.
    """
    if isinstance(solution, ansatz.ApproximateSolution):
        apx, X = solution, solution.X
    else:
        apx, X = solution.apx, solution.X
    grid = apx.grid
    eps = apx.epsilon
    nx, hx = grid.n_x, grid.h_x
    pos, e_vol, e_fib = energy_terms(apx, X)
    i0, i1, w0, w1 = _slice_weights(pos[:, 0], hx, nx)
    fiber = (np.bincount(i0, w0 * e_fib, nx) + np.bincount(i1, w1 * e_fib, nx)) / hx
    fiber_vol = (np.bincount(i0, w0 * e_vol, nx) + np.bincount(i1, w1 * e_vol, nx)) / hx
    r = np.linalg.norm(pos[:, 1:], axis=1)
    # per-slice half-widths use the terms owned (weight >= 1/2) by each slice
    owner = np.where(w0 >= 0.5, i0, i1)
    hy = grid.h_y
    hw = np.array([_radius_fraction(r[owner == s], e_fib[owner == s], fraction, hy) for s in range(nx)])
    half = _radius_fraction(r, e_fib, fraction, hy)

    pairings = []
    for tf in test_functions if test_functions is not None else builtin_test_functions(grid.L0):
        chi = np.asarray(tf.fn(pos[:, 0], pos[:, 1], pos[:, 2]), float)
        val = float(np.sum(chi * e_fib))
        ref = TWO_PI * tf.s_integral
        diff = abs(val - ref)
        pairings.append({"name": tf.name, "pairing": val, "reference": ref, "difference": diff,
                         "relative_to_eps_c1": diff / (eps * tf.c1_norm)})

    centers = ansatz.vortex_centers(apx.lattice, apx.lattice.split(X)[1])
    dist = float(np.max(np.linalg.norm(centers, axis=1)))
    tube = grid.h_y * (grid.n_y // 2)
    return EnergyReport(eps, grid.L0 * np.arange(nx) / nx, fiber, fiber_vol, hw, half, pairings,
                        centers, dist, tube)


# ------------------------------------------------------------------ output helpers

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else str(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=False)
        fh.write("\n")


class Checks:
    def __init__(self):
        self.items = []

    def add(self, name, passed, value, threshold):
        self.items.append({"name": name, "passed": bool(passed), "value": value, "threshold": threshold})
        if not passed:
            log.warning("check failed: %s (value %s, threshold %s)", name, value, threshold)

    @property
    def ok(self):
        return all(c["passed"] for c in self.items)

    def failed(self):
        return [c["name"] for c in self.items if not c["passed"]]


# ------------------------------------------------------------------ commands

def _cmd_profile(cfg: RunConfig, out: Path, checks: Checks) -> dict:
    eps = float(cfg.epsilon)
    prof = cfg.vortex(eps)
    energy, flux = vortex2d.vortex_energy_flux(prof)
    ident = vortex2d.check_vortex_identity(prof)
    vortex2d.write_profile_csv(prof, out / "profile.csv")
    report = {"epsilon": eps, "r_max": prof.r_max, "nodes": int(prof.r_grid.size),
              "ode_residual": prof.residual, "energy_over_2pi": energy / TWO_PI, "flux_over_2pi": flux / TWO_PI,
              "identity_residual": ident.max, "slope_at_origin": prof.slope,
              "decay_rate": vortex2d.fit_decay_rate(prof), "energy_radius_90": vortex2d.energy_radius(prof)}
    write_json(out / "report.json", report)
    checks.add("energy_over_2pi", abs(energy / TWO_PI - 1) <= 1e-4, energy / TWO_PI, [0.9999, 1.0001])
    checks.add("flux_over_2pi", abs(flux / TWO_PI - 1) <= 1e-6, flux / TWO_PI, [1 - 1e-6, 1 + 1e-6])
    checks.add("ode_residual", prof.residual < 1e-10, prof.residual, 1e-10)
    return report


def _cmd_kernel(cfg: RunConfig, out: Path, checks: Checks) -> dict:
    eps = float(cfg.epsilon)
    prof = cfg.vortex(eps)
    R = float(cfg.grid.get("R", 15.0 * eps))
    h = float(cfg.grid.get("h", eps / 10))
    op = linop.assemble_gauge_fixed_operator_2d(prof, linop.Grid2D(R, h))
    rep = linop.kernel_basis(op)
    write_csv(out / "eigenvalues.csv", ["index", "eigenvalue"], enumerate(rep.eigenvalues))
    write_csv(out / "principal_cosines.csv", ["index", "cosine"], enumerate(rep.cosines))
    data = rep.to_json(op)
    data["cosines"] = rep.cosines
    write_json(out / "kernel.json", data)
    small = int(np.sum(rep.eigenvalues < 1e-3))
    checks.add("kernel_dimension", small == 2, small, 2)
    checks.add("spectral_gap", rep.gap >= 0.1, rep.gap, 0.1)
    checks.add("principal_cosines", float(np.min(rep.cosines)) >= 0.999, float(np.min(rep.cosines)), 0.999)
    return data


def _cmd_model_op(cfg: RunConfig, out: Path, checks: Checks) -> dict:
    g = cfg.grid
    rows = linop.verify_inverse_estimate(cfg.epsilons, float(g.get("R_factor", 10.0)), float(g.get("h_factor", 8.0)),
                                         profile_nodes=int(cfg.profile.get("nodes", 4001)))
    write_csv(out / "inverse_estimate.csv", ["epsilon", "c", "xi_sq", "dof"],
              [(r.epsilon, r.c, r.xi_sq, r.dof) for r in rows])
    cs = np.array([r.c for r in rows])
    ratio = float(cs.max() / cs.min())
    checks.add("inverse_estimate_positive", bool(np.all(cs > 0)), float(cs.min()), 0.0)
    checks.add("inverse_estimate_uniform", ratio <= 2.0, ratio, 2.0)
    return {"rows": [asdict(r) for r in rows], "max_over_min": ratio}


def glue_one(cfg: RunConfig, eps: float):
    """Outer balancing plus diagnostics at one eps.  Returns (OuterResult, EnergyReport, seconds)."""
    t0 = time.time()
    m = cfg.manifold_model()
    ctx = gluing.GlueContext(m, cfg.vortex(eps), cfg.tube_grid(eps))
    tol = cfg.tolerances
    res = gluing.outer_solve(ctx, tol=float(tol.get("outer", 1e-9)), inner_tol=float(tol.get("inner", 1e-11)))
    rep = energy_concentration(res.solution)
    return res, rep, time.time() - t0


def _glue_row(res, rep, eps):
    u = gluing.gauge_residual(res.solution)[0]
    return {"epsilon": eps, "outer_iterations": len(res.trace) - 1, "lam": res.trace[-1]["lam"],
            "full_residual": res.solution.full_residual(), "u_inf": u,
            "v_max": float(np.max(np.abs(res.v.values))), **rep.summary()}


def _glue_checks(checks, row, rep, cfg, eps, prefix=""):
    tol = float(cfg.tolerances.get("outer", 1e-9))
    checks.add(prefix + "balanced", row["lam"] < tol, row["lam"], tol)
    checks.add(prefix + "full_residual", row["full_residual"] < 10 * tol, row["full_residual"], 10 * tol)
    checks.add(prefix + "gauge_residual", row["u_inf"] < 10 * tol, row["u_inf"], 10 * tol)
    checks.add(prefix + "v_in_ball", row["v_max"] <= eps, row["v_max"], eps)
    checks.add(prefix + "fiber_energy_2pct", rep.max_fiber_deviation() <= 0.02, rep.max_fiber_deviation(), 0.02)
    checks.add(prefix + "fiber_energy_positive", bool(np.all(rep.fiber_energy > 0)), float(rep.fiber_energy.min()), 0.0)
    checks.add(prefix + "half_width_in_tube", rep.half_width <= rep.tube_radius, rep.half_width, rep.tube_radius)


def _write_fibers(path, rep: EnergyReport, v):
    write_csv(path, ["x", "fiber_energy", "fiber_energy_over_2pi", "fiber_energy_volume", "half_width",
                     "center_y1", "center_y2", "v1", "v2"],
              [(x, e, e / TWO_PI, ev, hw, c[0], c[1], vv[0], vv[1])
               for x, e, ev, hw, c, vv in zip(rep.x, rep.fiber_energy, rep.fiber_energy_volume, rep.half_widths,
                                              rep.centers, v.values)])


def _cmd_glue(cfg: RunConfig, out: Path, checks: Checks) -> dict:
    eps = float(cfg.epsilon)
    res, rep, secs = glue_one(cfg, eps)
    row = _glue_row(res, rep, eps)
    _write_fibers(out / "fibers.csv", rep, res.v)
    write_csv(out / "pairings.csv", ["name", "pairing", "reference", "difference", "relative_to_eps_c1"],
              [(p["name"], p["pairing"], p["reference"], p["difference"], p["relative_to_eps_c1"])
               for p in rep.pairings])
    _glue_checks(checks, row, rep, cfg, eps)
    return {"result": row, "trace": [{k: t[k] for k in ("iteration", "lam", "v")} | {"inner": t["inner"]}
                                      for t in res.trace], "seconds": secs}


def _sweep_worker(args):
    data, eps = args
    cfg = RunConfig.from_dict(data)
    res, rep, secs = glue_one(cfg, eps)
    return _glue_row(res, rep, eps), rep, res.v, secs


def _cmd_sweep(cfg: RunConfig, out: Path, checks: Checks) -> dict:
    data = _jsonable(asdict(cfg))
    jobs = [(data, float(e)) for e in cfg.epsilons]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]
    # single writer
    rows = []
    for (row, rep, v, secs), eps in zip(results, cfg.epsilons):
        rows.append(row)
        _write_fibers(out / f"fibers_eps{eps:g}.csv", rep, v)
        _glue_checks(checks, row, rep, cfg, eps, prefix=f"eps={eps:g}:")
    cols = ["epsilon", "half_width", "half_width_over_epsilon", "max_slice_half_width", "zero_distance",
            "min_fiber_energy_over_2pi", "max_fiber_energy_over_2pi", "full_residual", "u_inf", "v_max",
            "outer_iterations"]
    table = [[r["epsilon"], r["half_width"], r["half_width_over_epsilon"], r["max_slice_half_width"],
              r["zero_distance"], r["fiber_energy_over_2pi"][0], r["fiber_energy_over_2pi"][1],
              r["full_residual"], r["u_inf"], r["v_max"], r["outer_iterations"]] for r in rows]
    write_csv(out / "sweep.csv", cols, table)
    hw = [r["half_width"] for r in rows]
    checks.add("half_width_decreasing", all(b < a for a, b in zip(hw, hw[1:])), hw, "strictly decreasing")
    return {"rows": rows, "seconds": [r[3] for r in results]}


_DISPATCH = {"profile": _cmd_profile, "kernel": _cmd_kernel, "model-op": _cmd_model_op,
             "glue": _cmd_glue, "sweep": _cmd_sweep}


def run(config: RunConfig | dict) -> int:
    """Execute one command, write artifacts and manifest.json, return the exit code."""
    if isinstance(config, dict):
        config = RunConfig.from_dict(config)
    else:
        config.validate()
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    checks = Checks()
    manifest = {"command": config.command, "config": asdict(config)}
    t0 = time.time()
    code = EXIT_OK
    try:
        manifest["result"] = _DISPATCH[config.command](config, out, checks)
    except GLError as exc:
        code = EXIT_SOLVER
        manifest["error"] = {"type": type(exc).__name__, "message": str(exc),
                             "trace": getattr(exc, "trace", None)}
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
    manifest["checks"] = checks.items
    manifest["failed"] = checks.failed()
    if code == EXIT_OK and not checks.ok:
        code = EXIT_CHECK
    manifest["status"] = {EXIT_OK: "pass", EXIT_CHECK: "fail", EXIT_SOLVER: "error"}[code]
    manifest["exit_code"] = code
    manifest["seconds"] = time.time() - t0
    write_json(out / "manifest.json", manifest)
    return code


# ------------------------------------------------------------------ argparse

def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="glvortex", description="Vortex gluing diagnostics")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("profile", help="solve the radial one-vortex profile")
    sp.add_argument("--epsilon", type=float, required=True)
    sp.add_argument("--rmax", type=float, default=None)
    sp.add_argument("--nodes", type=int, default=4001)
    sp.add_argument("--out", default="out/profile")

    sk = sub.add_parser("kernel", help="kernel of the gauge-fixed operator on a square grid")
    sk.add_argument("--epsilon", type=float, required=True)
    sk.add_argument("--grid", type=_float_list, default=None, help="R,H")
    sk.add_argument("--out", default="out/kernel")

    sm = sub.add_parser("model-op", help="inverse estimate over a list of eps")
    sm.add_argument("--epsilon-list", type=_float_list, required=True)
    sm.add_argument("--out", default="out/model-op")

    for name in ("glue", "sweep"):
        sg = sub.add_parser(name, help=f"{name} run from a JSON config")
        sg.add_argument("--config", required=True)
        sg.add_argument("--out", default=None, help="override the output directory")
    return p


def config_from_args(args) -> RunConfig:
    if args.command in ("glue", "sweep"):
        cfg = RunConfig.load(args.config)
        if cfg.command != args.command:
            raise ConfigError("command", f"config is for {cfg.command!r}, invoked as {args.command!r}")
        if args.out:
            cfg.output = args.out
        return cfg
    data = {"command": args.command, "output": args.out}
    if args.command == "profile":
        data["epsilon"] = args.epsilon
        data["profile"] = {"nodes": args.nodes}
        if args.rmax is not None:
            data["profile"]["rmax"] = args.rmax
    elif args.command == "kernel":
        data["epsilon"] = args.epsilon
        if args.grid is not None:
            if len(args.grid) != 2:
                raise ConfigError("grid", "expected R,H")
            data["grid"] = {"R": args.grid[0], "h": args.grid[1]}
    else:
        data["epsilons"] = args.epsilon_list
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
