import csv
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from glvortex.ansatz import (NormalField, TubeGrid, WeightedNormParams, build_approximate_solution,
                             curvature_components, gl_residual, residual_weighted_norm,
                             vortex_centers, weighted_holder_norm, write_approximate_solution)
from glvortex.errors import TubeTooNarrow, VTooLarge
from glvortex.geometry import ModelManifold

EPS = 0.2
WARPED = ModelManifold("warped3")
FLAT = ModelManifold("flat3")


def circle_field(n, delta=EPS / 10):
    return NormalField.from_function(lambda x: (delta * np.cos(x), delta * np.sin(x)), n)


@pytest.fixture(scope="module")
def coarse_grid():
    return TubeGrid(8, 12 * EPS, EPS / 3)


# ------------------------------------------------------------------ normal fields

@given(st.integers(0, 3), st.floats(-1, 1), st.floats(0, 2 * np.pi))
def test_normal_field_interpolant_derivatives(k, amp, x):
    v = NormalField.from_function(lambda t: (amp * np.sin(k * t), amp * np.cos(k * t)), 16)
    assert v.evaluate(x) == pytest.approx([amp * np.sin(k * x), amp * np.cos(k * x)], abs=1e-12)
    assert v.evaluate(x, 1) == pytest.approx([amp * k * np.cos(k * x), -amp * k * np.sin(k * x)], abs=1e-11)


def test_normal_field_resample_preserves_interpolant():
    v = circle_field(8)
    w = v.resample(32)
    assert np.allclose(w.evaluate(w.x), v.evaluate(w.x), atol=1e-14)


# ------------------------------------------------------------------ ansatz

def test_unshifted_ansatz_is_independent_of_x(profile_02, coarse_grid):
    apx = build_approximate_solution(WARPED, profile_02, None, coarse_grid)
    phi = apx.phi()
    assert np.max(np.abs(phi - phi[:1])) == 0.0
    a, _ = apx.split()
    assert np.max(np.abs(a[apx.lattice.link_dir == 0])) == 0.0


def test_constant_shift_translates_fibre(profile_02, coarse_grid):
    c = np.array([0.03, -0.05])
    v = NormalField(np.tile(c, (coarse_grid.n_x, 1)))
    apx = build_approximate_solution(WARPED, profile_02, v, coarse_grid)
    a, _ = apx.split()
    assert np.max(np.abs(a[apx.lattice.link_dir == 0])) < 1e-15
    centres = vortex_centers(apx.lattice, apx.phi())
    assert np.max(np.abs(centres - c)) < 0.1 * coarse_grid.h_y**2


def test_vortex_centres_follow_normal_field(profile_02):
    for hf in (3, 6):
        grid = TubeGrid(8, 12 * EPS, EPS / hf)
        apx = build_approximate_solution(WARPED, profile_02, circle_field(8), grid)
        err = np.max(np.abs(vortex_centers(apx.lattice, apx.phi()) - apx.centers()))
        assert err < grid.h_y**2


def test_curvature_components_second_order(profile_02):
    errs_normal, errs_mixed = [], []
    for nx, hf in ((8, 3), (16, 6)):
        grid = TubeGrid(nx, 12 * EPS, EPS / hf)
        apx = build_approximate_solution(WARPED, profile_02, circle_field(nx), grid)
        cc = curvature_components(apx)
        errs_normal.append(np.max(np.abs(cc["normal"][0] - cc["normal"][1])))
        errs_mixed.append(np.max(np.abs(cc["mixed"][0] - cc["mixed"][1])))
    assert errs_normal[0] / errs_normal[1] == pytest.approx(4.0, rel=0.15)
    assert errs_mixed[0] / errs_mixed[1] == pytest.approx(4.0, rel=0.15)


def test_flat_product_residual_is_discretisation_error(profile_02):
    res = []
    for hf in (3, 6):
        grid = TubeGrid(8, 12 * EPS, EPS / hf)
        r = gl_residual(build_approximate_solution(FLAT, profile_02, None, grid))
        res.append(max(np.max(np.abs(r.a)), np.max(np.abs(r.f))))
    assert res[0] / res[1] == pytest.approx(4.0, rel=0.15)


def test_residual_on_boundary_is_zero(profile_02, coarse_grid):
    apx = build_approximate_solution(WARPED, profile_02, None, coarse_grid)
    f = gl_residual(apx).f
    assert np.all(f[:, 0, :] == 0) and np.all(f[:, -1, :] == 0)


def test_tube_too_narrow(profile_02):
    with pytest.raises(TubeTooNarrow):
        build_approximate_solution(WARPED, profile_02, None, TubeGrid(8, 8 * EPS, EPS / 3))


def test_normal_field_too_large(profile_02, coarse_grid):
    with pytest.raises(VTooLarge):
        build_approximate_solution(WARPED, profile_02, circle_field(8, delta=EPS), coarse_grid)


def test_plane_model_rejected(profile_02, coarse_grid):
    with pytest.raises(ValueError):
        build_approximate_solution(ModelManifold("plane"), profile_02, None, coarse_grid)


def test_export_roundtrip(profile_02, coarse_grid, tmp_path):
    apx = build_approximate_solution(WARPED, profile_02, circle_field(8), coarse_grid)
    write_approximate_solution(apx, tmp_path)
    header = json.loads((tmp_path / "header.json").read_text())
    assert header["epsilon"] == EPS and header["grid"]["n_x"] == 8
    with open(tmp_path / "phi_re.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "y1", "y2", "value"]
    assert len(rows) - 1 == apx.lattice.n_nodes
    values = np.array([float(r[3]) for r in rows[1:]])
    assert np.array_equal(values, apx.split()[1].real)


# ------------------------------------------------------------------ weighted norms

def test_weighted_norm_of_constant_is_sup():
    dist = np.zeros((20, 20))
    p = WeightedNormParams(mu=0.0, gamma=0.5, epsilon=0.5)
    assert weighted_holder_norm(np.full((20, 20), 3.0), [0.1, 0.1], dist, p) == 3.0


def test_weighted_norm_of_linear_function():
    x = np.arange(20) * 0.1
    # eps = 0.5: seminorm eps^gamma * 0.5^(1-gamma) = 0.5 stays below the sup 1.9
    p = WeightedNormParams(mu=0.0, gamma=0.5, epsilon=0.5)
    assert weighted_holder_norm(x, [0.1], np.zeros(20), p) == pytest.approx(1.9)
    # eps = 2 covers every pair: seminorm sqrt(2) * sqrt(1.9) exceeds the sup
    q = WeightedNormParams(mu=0.0, gamma=0.5, epsilon=2.0)
    assert weighted_holder_norm(x, [0.1], np.zeros(20), q) == pytest.approx(np.sqrt(2 * 1.9))


def test_weighted_norm_of_matched_exponential():
    # u = exp(-d/eps) with mu = 1: the weighted sup is 1 and a pair at separation s gives
    # 2 sinh(s / 2 eps) (eps / s)^gamma, largest at s = eps
    d = np.linspace(0, 3, 61)
    p = WeightedNormParams(mu=1.0, gamma=0.5, epsilon=0.5)
    assert weighted_holder_norm(np.exp(-d / 0.5), [0.05], d, p) == pytest.approx(2 * np.sinh(0.5))


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_weighted_norm_monotone_in_mu(mu1, mu2):
    d = np.linspace(0, 2, 41)
    u = np.exp(-2 * d) * np.cos(5 * d)
    lo, hi = sorted((mu1, mu2))
    a = weighted_holder_norm(u, [0.05], d, WeightedNormParams(lo, 0.5, 0.3))
    b = weighted_holder_norm(u, [0.05], d, WeightedNormParams(hi, 0.5, 0.3))
    assert a <= b * (1 + 1e-12)


def test_weighted_norm_parameter_validation():
    with pytest.raises(ValueError):
        WeightedNormParams(0.5, 1.0, 0.2)
    with pytest.raises(ValueError):
        WeightedNormParams(-0.1, 0.5, 0.2)


def test_residual_norm_finite_and_positive(profile_02, coarse_grid):
    apx = build_approximate_solution(WARPED, profile_02, None, coarse_grid)
    val = residual_weighted_norm(apx)
    assert np.isfinite(val) and val > 0


def test_weighted_norm_of_vortex_defect(profile_unit):
    # 1 - |psi|^2 decays at the fitted rate: half that rate gives an R-independent norm,
    # twice that rate makes the norm blow up with the box size
    from glvortex.vortex2d import VortexField, fit_decay_rate
    vf = VortexField(profile_unit)
    rate = fit_decay_rate(profile_unit)
    out = {}
    for R in (6.0, 9.0):
        y = np.arange(-R, R + 1e-9, 0.1)
        Y1, Y2 = np.meshgrid(y, y, indexing="ij")
        u = 1 - np.abs(vf.psi(Y1, Y2)) ** 2
        d = np.hypot(Y1, Y2)
        out[R] = [weighted_holder_norm(u, [0.1, 0.1], d, WeightedNormParams(mu, 0.5, 1.0))
                  for mu in (0.5 * rate, 2 * rate)]
    assert out[9.0][0] == pytest.approx(out[6.0][0], rel=1e-12)
    assert out[9.0][1] > 10 * out[6.0][1]


def test_tangential_curvature_closed_form():
    # synthetic data for two tangential directions
    from glvortex.ansatz import tangential_curvature
    F = np.array([0.7, -0.2])
    B = (np.array([0.1, 0.3]), np.array([-0.4, 0.2]), np.array([1.0, 0.5]), np.array([0.0, -1.5]))
    # no normal curvature: only the grad v x grad v term survives
    got = tangential_curvature([1.0, 0.0], [0.0, 1.0], F, 0.0, B)
    assert got == pytest.approx(F)
    assert tangential_curvature([0.3, 0.4], [0.6, 0.8], F, 0.0, B) == pytest.approx([0.0, 0.0])
    # with C: C + B(C J z), J the +90 degree rotation
    C = 0.25
    got = tangential_curvature([0.0, 0.0], [0.0, 0.0], F, C, B)
    B1, B2, z1, z2 = B
    assert got == pytest.approx(C + B1 * (-C * z2) + B2 * (C * z1))
