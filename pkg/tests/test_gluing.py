import numpy as np
import pytest
from hypothesis import given, strategies as st

from glvortex.ansatz import NormalField, TubeGrid
from glvortex.errors import DegenerateJacobi, PatchTooSmall
from glvortex.geometry import ModelManifold
from glvortex.gluing import (GlueContext, ObstructionProjector, balancing_derivative, balancing_map,
                             build_partition_preconditioner, fiber_coefficient, gauge_residual,
                             inner_solve, kappa, outer_solve)
from glvortex.vortex2d import solve_vortex_profile

EPS = 0.4


@pytest.fixture(scope="module")
def profile_04():
    return solve_vortex_profile(EPS, 25 * EPS, 4001)


@pytest.fixture(scope="module")
def small_grid():
    return TubeGrid(8, 11 * EPS, EPS / 3)


@pytest.fixture(scope="module")
def ctx_warped(profile_04, small_grid):
    return GlueContext(ModelManifold("warped3"), profile_04, small_grid)


@pytest.fixture(scope="module")
def ctx_perturbed(profile_04, small_grid):
    return GlueContext(ModelManifold("warped3", perturbation=0.5), profile_04, small_grid)


@pytest.fixture(scope="module")
def projector(ctx_warped):
    v = NormalField.from_function(lambda x: (0.03 * np.cos(x), 0.02 * np.sin(2 * x)), 8)
    return ObstructionProjector(ctx_warped.approximate(v))


# ------------------------------------------------------------------ cut-off and projector

@given(st.floats(0.01, 1.0))
def test_kappa_profile(eps):
    s = np.sqrt(eps)
    d = np.linspace(0, 3 * s, 301)
    k = kappa(d, eps)
    assert np.all(k[d <= s] == 1.0) and np.all(k[d >= 2 * s] == 0.0)
    assert np.all(np.diff(k) <= 1e-14)


def test_projector_idempotent(projector, rng):
    X = rng.standard_normal(projector.E.shape[1])
    PX = projector.project(X)
    assert np.allclose(projector.project(PX), PX, atol=1e-12 * np.max(np.abs(PX)))


def test_projector_self_adjoint(projector, rng):
    X, Y = rng.standard_normal((2, projector.E.shape[1]))
    lhs = projector.inner(projector.project(X), Y)
    rhs = projector.inner(X, projector.project(Y))
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_projector_recovers_basis_coefficients(projector, rng):
    c = rng.standard_normal((projector.n_x, 2))
    assert np.allclose(projector.Pi(projector.expand(c)).values, c, atol=1e-12)


def test_complement_is_orthogonal(projector, rng):
    X = rng.standard_normal(projector.E.shape[1])
    assert np.max(np.abs(projector.pairings(projector.complement(X)))) < 1e-10 * np.max(np.abs(projector.pairings(X)))


# ------------------------------------------------------------------ inner problem

def test_inner_newton_converges_quadratically(profile_04, small_grid):
    ctx = GlueContext(ModelManifold("flat3"), profile_04, small_grid)
    lam, cs = balancing_map(ctx, None, 1e-11)
    tr = cs.trace
    assert tr[-1] < 1e-11
    for a, b in zip(tr[:-2], tr[1:-1]):
        assert b < a**2
    # the product solution is balanced by symmetry
    assert np.max(np.abs(lam.values)) < 1e-14


def test_symmetric_model_is_balanced_at_zero(ctx_warped):
    lam, cs = balancing_map(ctx_warped, None, 1e-11)
    assert np.max(np.abs(lam.values)) < 1e-13
    assert cs.full_residual() < 1e-10
    u, defect = gauge_residual(cs)
    assert u < 1e-12 and defect < 1e-12


def test_tolerance_rerun_consistent(ctx_perturbed):
    loose, _ = balancing_map(ctx_perturbed, None, 1e-7)
    tight, _ = balancing_map(ctx_perturbed, None, 1e-11)
    assert np.max(np.abs(loose.values - tight.values)) < 1e-7


def test_gauge_identity_and_detector(ctx_perturbed):
    lam, cs = balancing_map(ctx_perturbed, None, 1e-11)
    u, defect = gauge_residual(cs)
    # unbalanced: lam drives a nonzero gauge scalar, yet the identity T*T u = T* P(...) holds
    assert np.max(np.abs(lam.values)) > 1e-2 and u > 1e-4
    assert defect < 1e-12
    # a corrupted u is detected
    bad = cs.u.copy()
    free = np.flatnonzero(cs.apx.lattice.free_nodes)
    bad[free[len(free) // 2]] += 1e-3
    assert gauge_residual(cs, bad)[1] > 1e-4


def test_inner_solution_depends_only_on_ansatz(ctx_perturbed):
    apx = ctx_perturbed.approximate()
    a = inner_solve(ctx_perturbed, apx, tol=1e-11)
    b = inner_solve(ctx_perturbed, apx, tol=1e-11, delta0=a.delta)
    assert len(b.trace) <= 2
    assert np.max(np.abs(a.lam.values - b.lam.values)) < 1e-11


# ------------------------------------------------------------------ fibre coefficient

@pytest.mark.parametrize("x0,w", [(0.3, (1.0, 0.0)), (1.1, (0.6, 0.8))])
def test_fiber_coefficient_linear_in_gradient(profile_04, x0, w):
    d = EPS / 10
    v = NormalField.from_function(lambda x: (d * np.cos(x), d * np.sin(x)), 64)
    val = fiber_coefficient(profile_04, v, x0, w)
    expected = -np.pi * float(np.dot(v.evaluate(x0, 1), w))
    assert val == pytest.approx(expected, rel=1e-4)


# ------------------------------------------------------------------ outer problem

def test_flat_model_is_degenerate(profile_04, small_grid):
    ctx = GlueContext(ModelManifold("flat3"), profile_04, small_grid)
    with pytest.raises(DegenerateJacobi):
        outer_solve(ctx)


@pytest.mark.slow
def test_outer_solve_matches_first_order_oracle(ctx_perturbed):
    # lam(0) is dominated by the (cos x, 0) mode; a finite-difference derivative along
    # that direction gives the first-order balanced field v1 = -c / alpha (cos x, 0)
    lam0, _ = balancing_map(ctx_perturbed, None, 1e-11)
    d = NormalField.from_function(lambda x: (np.cos(x), 0 * x), 8)
    D = balancing_derivative(ctx_perturbed, d, EPS / 10, 1e-11, base=lam0)
    nrm = np.sum(d.values**2)
    alpha = np.sum(D.values * d.values) / nrm
    c = np.sum(lam0.values * d.values) / nrm
    assert np.max(np.abs(lam0.values - c * d.values)) < 1e-3 * abs(c)
    v1 = -c / alpha * d.values

    res = outer_solve(ctx_perturbed, tol=1e-9)
    assert res.solution.balanced
    assert np.max(np.abs(res.v.values - v1)) < 1e-2 * np.max(np.abs(v1))
    assert res.solution.full_residual() < 1e-9
    assert gauge_residual(res.solution)[0] < 1e-9
    lam = [t["lam"] for t in res.trace]
    assert lam[-1] < 1e-9 < lam[0]


# ------------------------------------------------------------------ partition preconditioner

@pytest.mark.slow
def test_partition_preconditioner_contracts():
    eps = 0.1
    ctx = GlueContext(ModelManifold("warped3"), solve_vortex_profile(eps, 25 * eps, 4001), TubeGrid(8, 14 * eps, eps / 3))
    apx = ctx.approximate()
    pp = build_partition_preconditioner(ctx, apx)
    assert pp.delta == pytest.approx(np.sqrt(eps))
    assert pp.theta < 0.7
    with pytest.raises(PatchTooSmall):
        build_partition_preconditioner(ctx, apx, delta=np.sqrt(eps) / 2)


@pytest.mark.slow
def test_correction_scales_like_eps_squared():
    # |(a, f)| / eps^2 of the inner correction at v = 0 stays bounded as eps halves
    ratios = []
    for eps in (0.4, 0.2):
        ctx = GlueContext(ModelManifold("warped3"), solve_vortex_profile(eps, 25 * eps, 4001),
                          TubeGrid(4, 12 * eps, eps / 3))
        cs = balancing_map(ctx, None, 1e-11)[1]
        ratios.append(cs.correction_norm() / eps**2)
    assert 0.5 < ratios[1] / ratios[0] < 2.0
