"""End-to-end acceptance checks, one test per criterion at the stated tolerance.

Each test records a one-line PASS/FAIL verdict; the lines are repeated in the
"acceptance criteria" section of the pytest terminal summary.
"""
import json
import resource
import time

import numpy as np
import pytest

from glvortex.ansatz import NormalField, TubeGrid, WeightedNormParams, build_approximate_solution, residual_weighted_norm
from glvortex.cli_diagnostics import run
from glvortex.errors import DegenerateJacobi
from glvortex.geometry import ModelManifold, fourier_mode_eigenvalue, jacobi_operator
from glvortex.gluing import GlueContext, balancing_derivative, balancing_map, fiber_coefficient
from glvortex.linop import (Grid2D, assemble_gauge_fixed_operator_2d, kernel_basis, quadratic_form_decomposition,
                            random_decaying_pair, verify_inverse_estimate)
from glvortex.vortex2d import check_vortex_identity, solve_vortex_profile, vortex_energy_flux

pytestmark = pytest.mark.slow

TWO_PI = 2 * np.pi
SWEEP_EPS = [0.4, 0.3, 0.2, 0.15]


def test_criterion_01_vortex_solver(criterion):
    t0 = time.perf_counter()
    prof = solve_vortex_profile(1.0, 20.0, 4001)
    energy, flux = vortex_energy_flux(prof)
    secs = time.perf_counter() - t0
    e_err, f_err = abs(energy / TWO_PI - 1), abs(flux / TWO_PI - 1)
    ok = prof.residual < 1e-10 and f_err < 1e-6 and e_err < 1e-4 and secs < 5
    criterion(1, ok, f"ode residual {prof.residual:.1e}, |flux/2pi-1| {f_err:.1e}, "
                     f"|energy/2pi-1| {e_err:.1e}, {secs:.2f} s")
    assert ok


def test_criterion_02_vortex_identity(criterion, profile_unit):
    rep = check_vortex_identity(profile_unit)
    ok = rep.max < 1e-8
    criterion(2, ok, f"max |eps^2 F^2 - (1-|psi|^2)^2/(4 eps^2)| = {rep.max:.1e}")
    assert ok


def test_criterion_03_kernel(criterion, profile_unit):
    t0 = time.perf_counter()
    op = assemble_gauge_fixed_operator_2d(profile_unit, Grid2D(15.0, 0.1))
    rep = kernel_basis(op)
    secs = time.perf_counter() - t0
    small = int(np.sum(rep.eigenvalues < 1e-3))
    ok = small == 2 and rep.gap >= 0.1 and np.min(rep.cosines) >= 0.999 and secs < 120
    criterion(3, ok, f"{small} eigenvalues < 1e-3, third {rep.gap:.3f}, "
                     f"min cosine {np.min(rep.cosines):.7f}, {secs:.0f} s")
    assert ok


def test_criterion_04_sum_of_squares(criterion, profile_unit):
    grid = Grid2D(20.0, 0.125)
    rng = np.random.default_rng(2024)
    reps = [quadratic_form_decomposition(profile_unit, random_decaying_pair(grid, 1.0, rng)) for _ in range(20)]
    worst = max(r.defect(4.0, 2.0) for r in reps)
    worst_44 = max(r.defect(4.0, 4.0) for r in reps)
    ok = worst < 1e-6
    criterion(4, ok, f"max |<Lx,x> - 4 S1 - 2 S2| / <Lx,x> = {worst:.2e} "
                     f"(with 4 S2 instead: {worst_44:.1e})")
    assert ok


def test_criterion_05_inverse_estimate(criterion):
    rows = verify_inverse_estimate([0.4, 0.2, 0.1])
    cs = np.array([r.c for r in rows])
    ratio = cs.max() / cs.min()
    ok = bool(np.all(cs > 0)) and ratio <= 2.0
    criterion(5, ok, "c(eps) = " + ", ".join(f"{r.epsilon:g}: {r.c:.4f}" for r in rows) + f"; max/min {ratio:.3f}")
    assert ok


def test_criterion_06_jacobi_spectrum(criterion):
    ev = np.sort(-jacobi_operator(ModelManifold("warped3"), 256).eigenvalues())
    # -J has 1 (twice), 2 (four times), 5 (four times) at the bottom of its spectrum
    got = {0: ev[0:2], 1: ev[2:6], 2: ev[6:10]}
    errs = {k: float(np.max(np.abs(got[k] / (1 + k * k) - 1))) for k in got}
    degenerate = False
    try:
        jacobi_operator(ModelManifold("flat3"), 256)
    except DegenerateJacobi:
        degenerate = True
    ok = max(errs.values()) < 0.01 and degenerate
    criterion(6, ok, "relative errors " + ", ".join(f"k={k}: {e:.1e}" for k, e in errs.items())
              + f"; flat3 degenerate: {degenerate}")
    assert ok


def test_criterion_07_weighted_residual(criterion):
    m = ModelManifold("warped3")
    vals = []
    for eps in (0.4, 0.3, 0.2, 0.15, 0.1):
        prof = solve_vortex_profile(eps, 25 * eps, 4001)
        apx = build_approximate_solution(m, prof, None, TubeGrid(4, 12 * eps, eps / 16))
        vals.append(residual_weighted_norm(apx, WeightedNormParams.default(prof)))
    spread = max(vals) / min(vals) - 1
    ok = spread < 0.5
    criterion(7, ok, "weighted norms " + ", ".join(f"{v:.3f}" for v in vals) + f"; variation {spread:.0%}")
    assert ok


FIBER_CASES = [
    (lambda d: (lambda x: (d * np.cos(x), d * np.sin(x))), 0.3, (1.0, 0.0)),
    (lambda d: (lambda x: (d * np.sin(2 * x), 0 * x)), 1.1, (0.6, 0.8)),
    (lambda d: (lambda x: (0 * x, d * np.cos(x) + 0.5 * d * np.sin(3 * x))), 2.0, (0.0, 1.0)),
]


def test_criterion_08_fiber_coefficient(criterion, profile_unit, profile_02):
    errs = []
    for prof in (profile_unit, profile_02):
        d = prof.epsilon / 10
        for make, x0, w in FIBER_CASES:
            v = NormalField.from_function(make(d), 64)
            got = fiber_coefficient(prof, v, x0, w)
            want = -np.pi * float(np.dot(v.evaluate(x0, 1), w))
            errs.append(abs(got / want - 1))
    ok = max(errs) < 0.01
    criterion(8, ok, f"3 (v, w) cases at eps 1 and 0.2: max relative error {max(errs):.1e}")
    assert ok


def test_criterion_09_balancing_linearization(criterion):
    eps, nx = 0.1, 16
    ctx = GlueContext(ModelManifold("warped3"), solve_vortex_profile(eps, 25 * eps, 4001), TubeGrid(nx, 12 * eps, eps / 3))
    lam0 = balancing_map(ctx, None, 1e-11)[0]
    x = TWO_PI * np.arange(nx) / nx
    errs = []
    for k in (0, 1, 2):
        want = -fourier_mode_eigenvalue(k, nx, TWO_PI)
        for comp in (0, 1):
            vals = np.zeros((nx, 2))
            vals[:, comp] = np.cos(k * x)
            D = balancing_derivative(ctx, NormalField(vals), eps / 10, 1e-11, base=lam0).values
            got = D[:, comp] @ vals[:, comp] / (vals[:, comp] @ vals[:, comp])
            errs.append((k, comp, got, abs(got / want - 1)))
    worst = max(e[3] for e in errs)
    ok = worst < 0.05
    per_mode = {k: max(e[3] for e in errs if e[0] == k) for k in (0, 1, 2)}
    criterion(9, ok, f"eps {eps}: relative error per mode " + ", ".join(f"k={k}: {v:.1%}" for k, v in per_mode.items()))
    assert ok


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    cfg = {"command": "sweep", "output": str(out), "epsilons": SWEEP_EPS,
           "manifold": {"kind": "warped3", "perturbation": 0.5},
           "grid": {"n_x": 16, "tube_factor": 12.0, "h_factor": 3.0},
           "tolerances": {"inner": 1e-11, "outer": 1e-9}}
    code = run(cfg)
    manifest = json.loads((out / "manifest.json").read_text())
    manifest["maxrss_gb"] = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1e6
    manifest["exit"] = code
    return manifest


def test_criterion_10_end_to_end_glue(criterion, sweep):
    eps = 0.2
    i = SWEEP_EPS.index(eps)
    row = sweep["result"]["rows"][i]
    secs = sweep["result"]["seconds"][i]
    dof = TubeGrid.for_epsilon(eps, 16, 12.0, 3.0).real_dof()
    dev = max(abs(r - 1) for r in row["fiber_energy_over_2pi"])
    parts = {"newton": row["lam"] < 1e-9, "residual": row["full_residual"] < 1e-7, "gauge": row["u_inf"] < 1e-7,
             "fiber energy": dev <= 0.02, "half-width": row["half_width"] <= 2 * eps,
             "dof": dof <= 1_000_000, "runtime": secs < 1800}
    ok = all(parts.values())
    failed = [k for k, v in parts.items() if not v]
    criterion(10, ok, f"eps 0.2: |lam| {row['lam']:.1e}, residual {row['full_residual']:.1e}, "
                      f"|u| {row['u_inf']:.1e}, fiber energy dev {dev:.2%}, half-width {row['half_width_over_epsilon']:.3f} eps, "
                      f"{dof} dof, {secs:.0f} s" + (f"; failing: {', '.join(failed)}" if failed else ""))
    assert ok


def test_criterion_11_sweep(criterion, sweep):
    rows = sweep["result"]["rows"]
    hw = [r["half_width"] for r in rows]
    zd = [r["zero_distance"] for r in rows]
    dec_hw = all(b < a for a, b in zip(hw, hw[1:]))
    dec_zd = all(b < a for a, b in zip(zd, zd[1:]))
    ok = dec_hw and dec_zd
    criterion(11, ok, "half-widths " + ", ".join(f"{h:.4f}" for h in hw)
              + "; zero distances " + ", ".join(f"{z:.5f}" for z in zd)
              + f"; peak memory {sweep['maxrss_gb']:.2f} GB")
    assert ok


def test_sweep_total_energy_and_width_scaling(sweep):
    rows = {r["epsilon"]: r for r in sweep["result"]["rows"]}
    const = next(p for p in rows[0.2]["pairings"] if p["name"] == "constant")
    assert const["pairing"] == pytest.approx(TWO_PI * TWO_PI, rel=0.02)
    for big, small in ((0.4, 0.2), (0.3, 0.15)):
        assert 0.4 <= rows[small]["half_width"] / rows[big]["half_width"] <= 0.6
