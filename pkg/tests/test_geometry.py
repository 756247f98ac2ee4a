import numpy as np
import pytest
from hypothesis import given, strategies as st

from glvortex.errors import Degenerate, DegenerateJacobi, OutsideTube
from glvortex.geometry import (ModelManifold, curvature_symmetry_defect, exact_metric_blocks,
                               fermi_metric_expansion, fourier_mode_eigenvalue, jacobi_operator,
                               manifold_from_config, riemann_fd, submanifold_data)


@pytest.fixture(scope="module")
def warped():
    return ModelManifold("warped3")


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        ModelManifold("torus")


def test_perturbation_guard():
    with pytest.raises(ValueError):
        ModelManifold("warped3", perturbation=2.5)
    m = ModelManifold("warped3", perturbation=2.3)
    r = np.linspace(0, 5, 401)
    y = np.stack([-r, np.zeros_like(r)], axis=-1)
    assert np.all(m.warp(y, 0.0) > 0)


def test_config_roundtrip():
    m = manifold_from_config({"kind": "warped3", "L0": 3.0, "perturbation": 0.25})
    assert (m.kind, m.L0, m.perturbation) == ("warped3", 3.0, 0.25)


def test_riemann_closed_form_matches_finite_differences(warped):
    p = np.array([0.7, 0.0, 0.0])
    R_fd = riemann_fd(warped.metric, p, step=1e-3)
    assert np.max(np.abs(R_fd - warped.riemann_on_S())) < 1e-5


def test_riemann_finite_differences_unchanged_by_perturbation():
    m = ModelManifold("warped3", perturbation=0.5)
    for x in (0.0, 1.3):
        R_fd = riemann_fd(m.metric, np.array([x, 0.0, 0.0]), step=1e-3)
        assert np.max(np.abs(R_fd - m.riemann_on_S())) < 1e-5


@pytest.mark.parametrize("kind", ["warped3", "flat3"])
def test_curvature_symmetries(kind):
    m = ModelManifold(kind)
    assert curvature_symmetry_defect(m.riemann_on_S()) == 0.0
    R_fd = riemann_fd(m.metric, np.array([0.3, 0.1, -0.2]))
    assert curvature_symmetry_defect(R_fd) < 1e-5


@pytest.mark.parametrize("kind", ["warped3", "flat3"])
def test_submanifold_is_minimal(kind):
    geo = submanifold_data(ModelManifold(kind, perturbation=0.0), n_samples=8)
    assert geo.max_mean_curvature < 1e-8


@given(st.floats(0.0, 2 * np.pi), st.floats(0.0, 2 * np.pi))
def test_fermi_expansion_cubic_remainder(x, angle):
    m = ModelManifold("warped3", perturbation=0.7)
    direction = np.array([np.cos(angle), np.sin(angle)])
    errs = []
    for t in (0.2, 0.1, 0.05):
        y = t * direction
        approx = fermi_metric_expansion(m, x, y)
        exact = exact_metric_blocks(m, x, y)
        errs.append(max(np.max(np.abs(a - b)) for a, b in zip(approx, exact)))
    for t, e in zip((0.2, 0.1, 0.05), errs):
        assert e <= 0.71 * t**3 + 1e-12


def test_fermi_expansion_exact_without_perturbation(warped):
    y = np.array([0.3, -0.2])
    approx = fermi_metric_expansion(warped, 1.0, y)
    exact = exact_metric_blocks(warped, 1.0, y)
    for a, b in zip(approx, exact):
        assert np.allclose(a, b, atol=1e-7)


def test_fermi_expansion_outside_tube(warped):
    with pytest.raises(OutsideTube):
        fermi_metric_expansion(warped, 0.0, [0.6, 0.0])


def test_jacobi_spectrum_low_modes(warped):
    ev = np.sort(-jacobi_operator(warped, 256).eigenvalues())
    # k = 0 has multiplicity 2 (two normal directions), k >= 1 multiplicity 4 (cos/sin x 2)
    assert ev[0:2] == pytest.approx([1.0, 1.0], rel=1e-8)
    assert ev[2:6] == pytest.approx([2.0] * 4, rel=1e-3)
    assert ev[6:10] == pytest.approx([5.0] * 4, rel=1e-3)


@pytest.mark.parametrize("k", [0, 1, 2, 5])
def test_jacobi_fourier_mode_is_eigenvector(warped, k):
    n = 64
    J = jacobi_operator(warped, n)
    x = J.x
    v = np.column_stack([np.cos(k * x), np.sin(k * x)])
    Jv = J.apply(v)
    assert np.allclose(Jv, -fourier_mode_eigenvalue(k, n, warped.L0) * v, atol=1e-9)


def test_flat_manifold_has_degenerate_jacobi_operator():
    with pytest.raises(DegenerateJacobi):
        jacobi_operator(ModelManifold("flat3"), 64)
    assert issubclass(DegenerateJacobi, Degenerate)


def test_jacobi_requires_one_dimensional_submanifold():
    with pytest.raises(ValueError):
        jacobi_operator(ModelManifold("plane"))


def test_jacobi_eigenvalue_error_second_order(warped):
    errs = []
    for n in (32, 64):
        ev = np.sort(-jacobi_operator(warped, n).eigenvalues())
        errs.append(abs(ev[6] - 5.0))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.02)
