"""Model manifolds with a distinguished codimension-2 minimal submanifold.

Coordinates are (x_1..x_k, y_1, y_2) with S = {y = 0}; for the built-in models these are
already Fermi coordinates (the curves t -> (x, t n) are unit-speed normal geodesics and
the coordinate frame is orthonormal along S).

Curvature convention: R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z and
R_abcd = g(R(e_a,e_b)e_c, e_d), so R_abba is the sectional curvature of span{e_a, e_b}.
With it the Fermi expansion reads
    g_ij = delta_ij + 2 h_ij.r y_r + h_ik.r h_kj.s y_r y_s - R_i r s j y_r y_s
    g_ia = -(2/3) R_i r s a y_r y_s
    g_ab = delta_ab - (1/3) R_a r s b y_r y_s
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateJacobi, OutsideTube

KINDS = ("plane", "warped3", "flat3")


@dataclass(frozen=True)
class ModelManifold:
    kind: str = "warped3"
    L0: float = 2 * np.pi
    tube_radius: float = 0.5
    perturbation: float = 0.0  # sigma in the warp term sigma cos(2 pi x / L0) y_1^3 exp(-|y|^2)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown manifold kind {self.kind!r}; expected one of {KINDS}")
        if self.L0 <= 0:
            raise ValueError("L0 must be positive")
        if abs(self.perturbation) >= 2.4:
            raise ValueError("|perturbation| must stay below 2.4 to keep the metric positive")

    @property
    def dimension(self) -> int:
        return 2 if self.kind == "plane" else 3

    @property
    def tangent_dim(self) -> int:
        return self.dimension - 2

    def warp(self, y, x=0.0):
        """w(x, y) = 1 + |y|^2 (+ sigma cos(2 pi x / L0) y_1^3 exp(-|y|^2)).

        The cubic term breaks the y -> -y symmetry while leaving h, R and hence the
        Jacobi operator along S unchanged.  The Gaussian factor keeps w > 0 for |sigma| < 2.4.
        """
        y = np.asarray(y, float)
        if self.kind != "warped3":
            return np.ones(y.shape[:-1])
        w = 1.0 + np.sum(y**2, axis=-1)
        if self.perturbation:
            r2 = np.sum(y**2, axis=-1)
            w = w + self.perturbation * np.cos(2 * np.pi * np.asarray(x) / self.L0) * y[..., 0] ** 3 * np.exp(-r2)
        return w

    def metric(self, p):
        """Exact metric tensor at points p[..., n]."""
        p = np.asarray(p, float)
        k = self.tangent_dim
        g = np.zeros(p.shape[:-1] + (self.dimension, self.dimension))
        for a in range(self.dimension):
            g[..., a, a] = 1.0
        if k:
            g[..., 0, 0] = self.warp(p[..., k:], p[..., 0])
        return g

    def metric_diag(self, p):
        """Diagonal of the metric (all built-in models are diagonal)."""
        return np.diagonal(self.metric(p), axis1=-2, axis2=-1).copy()

    def riemann_on_S(self, x=None):
        """Closed-form R_abcd at a point of S (independent of x for the built-in family)."""
        n, k = self.dimension, self.tangent_dim
        R = np.zeros((n, n, n, n))
        if self.kind == "warped3":
            # sectional curvature of span{d_x, d_y_r} is -1 at y = 0 (Hessian of sqrt(w) is the identity)
            for r in range(k, n):
                R[0, r, r, 0] = -1.0
                R[r, 0, 0, r] = -1.0
                R[0, r, 0, r] = 1.0
                R[r, 0, r, 0] = 1.0
        return R


# ------------------------------------------------------------------ finite-difference geometry

def christoffel_fd(metric, p, step=1e-4):
    """Gamma^c_ab at p from central differences of metric(p) -> (n, n) array."""
    p = np.asarray(p, float)
    n = p.size
    dg = np.zeros((n, n, n))  # dg[e, a, b] = d_e g_ab
    for e in range(n):
        d = np.zeros(n)
        d[e] = step
        dg[e] = (metric(p + d) - metric(p - d)) / (2 * step)
    ginv = np.linalg.inv(metric(p))
    # lower[a, b, d] = (d_a g_bd + d_b g_ad - d_d g_ab) / 2
    lower = 0.5 * (dg + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0))
    return np.einsum("cd,abd->cab", ginv, lower)


def riemann_fd(metric, p, step=1e-3):
    """R_abcd at p (convention of this module) from nested central differences."""
    p = np.asarray(p, float)
    n = p.size
    G = christoffel_fd(metric, p, step)
    dG = np.zeros((n, n, n, n))  # dG[e, c, a, b] = d_e Gamma^c_ab
    for e in range(n):
        d = np.zeros(n)
        d[e] = step
        dG[e] = (christoffel_fd(metric, p + d, step) - christoffel_fd(metric, p - d, step)) / (2 * step)
    # R(d_a, d_b) d_c = Rup[d, c, a, b] d_d
    Rup = (np.einsum("adbc->dcab", dG) - np.einsum("bdac->dcab", dG)
           + np.einsum("dae,ebc->dcab", G, G) - np.einsum("dbe,eac->dcab", G, G))
    g = metric(p)
    # R_abcd = g(R(a,b)c, d)
    return np.einsum("de,ecab->abcd", g, Rup)


def normal_curvature(connection_form, x, step=1e-4):
    """C_ij = d_i w_j - d_j w_i for the normal connection 1-form w_i(x) = <nabla_i e_1, e_2>."""
    x = np.asarray(x, float)
    k = x.size
    dw = np.zeros((k, k))
    for i in range(k):
        d = np.zeros(k)
        d[i] = step
        dw[i] = (np.asarray(connection_form(x + d)) - np.asarray(connection_form(x - d))) / (2 * step)
    return dw - dw.T


# ------------------------------------------------------------------ submanifold data

@dataclass
class SubmanifoldGeometry:
    x: np.ndarray                 # sample points on S, shape (m, k)
    h: np.ndarray                 # h[s, i, j, r]
    C: np.ndarray                 # C[s, i, j]
    R_tangential: np.ndarray      # R[s, i, r, q, j] = R_{i r q j}
    R_normal: np.ndarray          # R[s, a, r, q, b] = R_{a r q b}
    R_mixed: np.ndarray           # R[s, i, r, q, b] = R_{i r q b}
    H: np.ndarray                 # H[s, r] = sum_i h_ii.r

    @property
    def max_mean_curvature(self) -> float:
        return float(np.max(np.abs(self.H))) if self.H.size else 0.0


def _sample_points(m: ModelManifold, n_samples: int):
    if m.tangent_dim == 0:
        return np.zeros((1, 0))
    return (m.L0 * np.arange(n_samples) / n_samples)[:, None]


def submanifold_data(m: ModelManifold, n_samples: int = 8, step: float = 1e-4) -> SubmanifoldGeometry:
    k = m.tangent_dim
    xs = _sample_points(m, n_samples)
    ns = xs.shape[0]
    h = np.zeros((ns, k, k, 2))
    C = np.zeros((ns, k, k))
    Rt = np.zeros((ns, k, 2, 2, k))
    Rn = np.zeros((ns, 2, 2, 2, 2))
    Rm = np.zeros((ns, k, 2, 2, 2))
    for s, x in enumerate(xs):
        p0 = np.concatenate([x, np.zeros(2)])
        # second fundamental form from the linear term of g_ij along normal lines
        for r in range(2):
            d = np.zeros(m.dimension)
            d[k + r] = step
            dg = (m.metric(p0 + d) - m.metric(p0 - d)) / (2 * step)
            h[s, :, :, r] = 0.5 * dg[:k, :k]
        R = m.riemann_on_S(x)
        T, N = list(range(k)), list(range(k, k + 2))
        Rt[s] = R[np.ix_(T, N, N, T)]
        Rn[s] = R[np.ix_(N, N, N, N)]
        Rm[s] = R[np.ix_(T, N, N, N)]
        if k >= 2:
            def conn(xx):
                G = christoffel_fd(m.metric, np.concatenate([xx, np.zeros(2)]), step)
                return G[k + 1, :k, k]
            C[s] = normal_curvature(conn, x, step)
    H = np.einsum("siir->sr", h)
    return SubmanifoldGeometry(xs, h, C, Rt, Rn, Rm, H)


def fermi_metric_expansion(m: ModelManifold, x, y, geo: SubmanifoldGeometry | None = None):
    """Second-order Fermi expansion (g_tt, g_tn, g_nn) at the point (x, y)."""
    y = np.asarray(y, float)
    if np.hypot(*y) > m.tube_radius:
        raise OutsideTube(f"|y|={np.hypot(*y):.3g} exceeds tube radius {m.tube_radius}")
    k = m.tangent_dim
    if geo is None:
        geo = submanifold_data(m, n_samples=1)
        s = 0
    else:
        xs = geo.x[:, 0] if k else np.zeros(1)
        s = int(np.argmin(np.abs(xs - (np.atleast_1d(x)[0] if k else 0.0))))
    h, Rt, Rn, Rm = geo.h[s], geo.R_tangential[s], geo.R_normal[s], geo.R_mixed[s]
    g_tt = (np.eye(k) + 2 * np.einsum("ijr,r->ij", h, y)
            + np.einsum("ikr,kjs,r,s->ij", h, h, y, y) - np.einsum("irsj,r,s->ij", Rt, y, y))
    g_tn = -2.0 / 3.0 * np.einsum("irsa,r,s->ia", Rm, y, y)
    g_nn = np.eye(2) - np.einsum("arsb,r,s->ab", Rn, y, y) / 3.0
    return g_tt, g_tn, g_nn


def exact_metric_blocks(m: ModelManifold, x, y):
    k = m.tangent_dim
    p = np.concatenate([np.atleast_1d(np.asarray(x, float))[:k], np.asarray(y, float)])
    g = m.metric(p)
    return g[:k, :k], g[:k, k:], g[k:, k:]


# ------------------------------------------------------------------ Jacobi operator

@dataclass
class JacobiOperatorMatrix:
    """J acting on normal fields v[s, r] flattened as v.ravel() (node-major)."""
    matrix: np.ndarray
    sigma_min: float
    x: np.ndarray

    def eigenvalues(self):
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T))

    def apply(self, v):
        v = np.asarray(v, float)
        return (self.matrix @ v.ravel()).reshape(v.shape)


def jacobi_zeroth_order(geo: SubmanifoldGeometry):
    """Per-node 2x2 block sum_ij h_ij.r h_ij.s + sum_i R_i r s i."""
    return np.einsum("sijr,sijq->srq", geo.h, geo.h) + np.einsum("sirqi->srq", geo.R_tangential)


def jacobi_operator(m: ModelManifold, n_nodes: int = 256, check: bool = True) -> JacobiOperatorMatrix:
    """J v = v'' + (h.h + R) v on a periodic grid of S, second-order differences."""
    if m.tangent_dim != 1:
        raise ValueError("the Jacobi operator is assembled for one-dimensional S only")
    geo = submanifold_data(m, n_samples=n_nodes)
    dx = m.L0 / n_nodes
    lap = (np.roll(np.eye(n_nodes), 1, axis=1) + np.roll(np.eye(n_nodes), -1, axis=1)
           - 2 * np.eye(n_nodes)) / dx**2
    Z = jacobi_zeroth_order(geo)
    J = np.kron(lap, np.eye(2))
    for s in range(n_nodes):
        J[2 * s:2 * s + 2, 2 * s:2 * s + 2] += Z[s]
    sig = float(np.linalg.svd(J, compute_uv=False)[-1])
    op = JacobiOperatorMatrix(J, sig, geo.x[:, 0])
    if check and sig < 1e-8:
        raise DegenerateJacobi(f"Jacobi operator is singular (smallest singular value {sig:.2e})")
    return op


def fourier_mode_eigenvalue(k: int, n_nodes: int, L0: float) -> float:
    """-J eigenvalue 1 + k_h^2 of warped3 for the discrete Laplacian (k_h the modified wavenumber)."""
    dx = L0 / n_nodes
    kk = 2 * np.pi * k / L0
    return 1.0 + (2 - 2 * np.cos(kk * dx)) / dx**2


def manifold_from_config(cfg: dict) -> ModelManifold:
    kind = cfg.get("kind", "warped3")
    return ModelManifold(kind, float(cfg.get("L0", 2 * np.pi)), float(cfg.get("tube_radius", 0.5)),
                         float(cfg.get("perturbation", 0.0)))


def curvature_symmetry_defect(R) -> float:
    """Largest violation of the algebraic symmetries of a curvature tensor."""
    out = max(np.max(np.abs(R + R.transpose(1, 0, 2, 3))), np.max(np.abs(R + R.transpose(0, 1, 3, 2))),
              np.max(np.abs(R - R.transpose(2, 3, 0, 1))))
    bianchi = R + R.transpose(0, 2, 3, 1) + R.transpose(0, 3, 1, 2)
    return float(max(out, np.max(np.abs(bianchi))))
