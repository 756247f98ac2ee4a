"""Gauge-fixed linearised operator on the plane and its Fourier-mode model.

The operator is  LL = L + T T*,  where L is the linearisation of the Ginzburg-Landau
equations at the vortex and T chi = (d chi / eps, i psi chi / eps) is the
infinitesimal gauge action.  On the lattice (see `lattice`) it is assembled as
M^{-1} K with K = Hess(E)/2 + M T m^{-1} T^T M symmetric, so self-adjointness in
the weighted inner product  <(a1,f1),(a2,f2)> = sum eps^2 a1.a2 + Re conj(f1) f2
is exact.  Dirichlet conditions on the square [-R, R]^2.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from .errors import BoundaryLeak, EigsolverFailure, GridTooCoarse, NonConvergence, SubspaceDeficient
from .lattice import Axis, Lattice, LatticeGL
from .vortex2d import VortexField, VortexProfile, solve_vortex_profile


@dataclass(frozen=True)
class Grid2D:
    R: float
    h: float

    @property
    def n(self) -> int:
        return int(round(2 * self.R / self.h)) + 1

    @property
    def cell(self) -> float:
        return self.h**2

    def lattice(self) -> Lattice:
        ax = Axis(self.n, self.h, -self.R)
        return Lattice([ax, ax])


@dataclass
class GaugePair:
    """a[..., mu]: connection perturbation on the link leaving a node in direction mu.

    f[...]: complex scalar perturbation at the nodes.  `grid` is any grid with a
    `lattice()` factory and a `cell` volume (Grid2D here, TubeGrid in `ansatz`).
    """
    a: np.ndarray
    f: np.ndarray
    grid: Grid2D
    epsilon: float

    @classmethod
    def from_vector(cls, X, lat: Lattice, grid: Grid2D, eps: float, free=None):
        if free is not None:
            full = np.zeros(lat.n_real)
            full[free] = X
            X = full
        al, f = lat.split(X)
        a = np.zeros(lat.shape + (lat.dim,))
        for mu in range(lat.dim):
            ids = lat.link_id(mu)
            ok = ids >= 0
            a.reshape(-1, lat.dim)[ok, mu] = al[ids[ok]]
        return cls(a, f.reshape(lat.shape), grid, eps)

    def to_vector(self, lat: Lattice, free=None):
        al = np.empty(lat.n_links)
        for mu in range(lat.dim):
            ids = lat.link_id(mu)
            ok = ids >= 0
            al[ids[ok]] = self.a.reshape(-1, lat.dim)[ok, mu]
        X = lat.join(al, self.f.ravel())
        return X if free is None else X[free]

    def norm(self) -> float:
        """Composite norm eps*|a| + |f| (discrete L2)."""
        h2 = self.grid.cell
        return float(self.epsilon * np.sqrt(h2 * np.sum(self.a**2)) + np.sqrt(h2 * np.sum(np.abs(self.f) ** 2)))


def vortex_background(profile: VortexProfile, lat: Lattice, center=(0.0, 0.0)):
    """Sample the vortex on the lattice: psi at nodes, exact line integrals of A on links."""
    vf = VortexField(profile)
    c = np.asarray(center, float)
    y = lat.node_pos - c
    phi = vf.psi(y[:, 0], y[:, 1])
    step = np.zeros((lat.n_links, 2))
    step[np.arange(lat.n_links), lat.link_dir] = lat.link_h
    p0 = lat.link_start - c
    a = vf.line_integral(p0, p0 + step) / lat.link_h
    return a, phi


def kernel_vector(profile: VortexProfile, lat: Lattice, w, center=(0.0, 0.0)):
    """Analytic pair (F_B(w, .), D_{B,w} psi) in the real lattice layout."""
    vf = VortexField(profile)
    c = np.asarray(center, float)
    m = lat.link_mid - c
    F = vf.curvature(m[:, 0], m[:, 1])
    # iota_w F = F (-w2, w1)
    a = np.where(lat.link_dir == 0, -w[1] * F, w[0] * F)
    y = lat.node_pos - c
    d1, d2 = vf.covariant(y[:, 0], y[:, 1])
    return lat.join(a, w[0] * d1 + w[1] * d2)


@dataclass
class DiscreteOperator:
    """LL = M^{-1} K on the free degrees of freedom of a lattice."""
    K: sp.csr_matrix
    mass: np.ndarray
    lat: Lattice
    gl: LatticeGL
    free: np.ndarray
    background: np.ndarray
    profile: VortexProfile
    grid: Grid2D
    xi_sq: float = 0.0
    symmetric: bool = True
    _lu: object = field(default=None, repr=False)

    @property
    def dimension(self) -> int:
        return self.K.shape[0]

    @property
    def epsilon(self) -> float:
        return self.gl.eps

    def apply(self, x):
        if isinstance(x, GaugePair):
            y = self.apply(x.to_vector(self.lat, self.free))
            return GaugePair.from_vector(y, self.lat, self.grid, self.epsilon, self.free)
        return (self.K @ x) / self.mass

    def inner(self, x, y) -> float:
        return float(np.dot(self.mass * x, y))

    def norm(self, x) -> float:
        return float(np.sqrt(self.inner(x, x)))

    def symmetric_form(self):
        """S = M^{1/2} LL M^{-1/2}, the operator in orthonormal coordinates."""
        s = 1 / np.sqrt(self.mass)
        return (sp.diags(s) @ self.K @ sp.diags(s)).tocsc()

    def kernel_vectors(self):
        """Analytic kernel pairs for w = e1, e2 restricted to the free dofs."""
        return [kernel_vector(self.profile, self.lat, w)[self.free] for w in ((1.0, 0.0), (0.0, 1.0))]


def _check_grid(eps, grid: Grid2D):
    if grid.h > eps / 8 * (1 + 1e-9):
        raise GridTooCoarse(f"h={grid.h:g} exceeds eps/8={eps / 8:g}")
    if grid.R < 10 * eps * (1 - 1e-12):
        raise GridTooCoarse(f"R={grid.R:g} below 10*eps={10 * eps:g}")


def relax_background(gl: LatticeGL, X0, free, tol=1e-9, max_iter=30):
    """Chord iteration onto the nearby lattice critical point (boundary values held fixed).

    The sampled continuum vortex is only an O(h^2) critical point of the lattice energy;
    at the relaxed configuration the translation modes sit at +O(Peierls-Nabarro) rather
    than at -O(h^2).  One LU of the gauge-fixed Hessian is reused for every step, and the
    iteration runs on past `tol` until rounding stops it improving.
    """
    X = X0.copy()
    zero = np.zeros_like(X0)
    R, _, J = gl.augmented(X0, zero, free)
    lu = splu(J.tocsc())
    scale = gl.mass[free] / gl.eps**2  # eps^2 times the weighted residual
    res = np.max(np.abs(R / scale))
    for _ in range(max_iter):
        X[free] -= lu.solve(R)
        # re-centre the gauge term on the current iterate so u stays tied to X
        R, _ = gl.augmented(X, zero, free, jacobian=False)
        new = np.max(np.abs(R / scale))
        if new < tol and new > 0.5 * res:
            return X
        res = new
    if res < tol:
        return X
    raise NonConvergence(f"background relaxation stalled at {res:.2e}")


def assemble_gauge_fixed_operator_2d(profile: VortexProfile, grid: Grid2D | None = None,
                                     relax: bool = True) -> DiscreteOperator:
    eps = profile.epsilon
    grid = grid or Grid2D(15 * eps, eps / 10)
    _check_grid(eps, grid)
    lat = grid.lattice()
    gl = LatticeGL(lat, eps)
    a, phi = vortex_background(profile, lat)
    X0 = lat.join(a, phi)
    free = lat.free_mask
    if relax:
        X0 = relax_background(gl, X0, free)
    _, _, K = gl.augmented(X0, np.zeros_like(X0), free)
    K = 0.5 * (K + K.T)  # exact up to rounding already; remove the last bits
    return DiscreteOperator(K.tocsr(), gl.mass[free], lat, gl, free, X0, profile, grid)


def assemble_model_mode_operator(profile: VortexProfile, xi_norm_sq: float,
                                 grid: Grid2D | None = None, base: DiscreteOperator | None = None) -> DiscreteOperator:
    """Fourier mode of the product operator on R^{n-2} x R^2: LL + |xi|^2."""
    if xi_norm_sq < 0:
        raise ValueError("xi_norm_sq must be nonnegative")
    op = base or assemble_gauge_fixed_operator_2d(profile, grid)
    K = (op.K + sp.diags(xi_norm_sq * op.mass)).tocsr()
    return DiscreteOperator(K, op.mass, op.lat, op.gl, op.free, op.background, op.profile, op.grid,
                            xi_sq=op.xi_sq + xi_norm_sq)


# ------------------------------------------------------------------ spectra

@dataclass
class KernelReport:
    vectors: list
    eigenvalues: np.ndarray
    gap: float
    cosines: np.ndarray
    residuals: np.ndarray

    def to_json(self, op: DiscreteOperator) -> dict:
        return {"epsilon": op.epsilon, "grid": {"R": op.grid.R, "h": op.grid.h},
                "eigenvalues": [float(x) for x in self.eigenvalues], "gap": float(self.gap),
                "principal_angles": [float(np.arccos(min(1.0, c))) for c in self.cosines]}


def principal_cosines(op: DiscreteOperator, U, V):
    """Cosines of principal angles between span(U) and span(V) in the weighted product."""
    s = np.sqrt(op.mass)
    Qu, _ = np.linalg.qr(np.column_stack([s * u for u in U]))
    Qv, _ = np.linalg.qr(np.column_stack([s * v for v in V]))
    return np.linalg.svd(Qu.T @ Qv, compute_uv=False)


def kernel_basis(op: DiscreteOperator, n_eigs: int = 3, sigma: float | None = None) -> KernelReport:
    eps = op.epsilon
    S = op.symmetric_form()
    sig = -1e-2 / eps**2 if sigma is None else sigma
    try:
        vals, vecs = eigsh(S, k=n_eigs + 1, sigma=sig, which="LM", tol=1e-10)
    except ArpackNoConvergence as exc:  # pragma: no cover - diagnostics path
        raise EigsolverFailure(f"ARPACK did not converge: {len(exc.eigenvalues)} of {n_eigs + 1} "
                               f"eigenpairs found") from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    x = [vecs[:, k] / np.sqrt(op.mass) for k in range(2)]
    cos = principal_cosines(op, x, op.kernel_vectors())
    res = np.array([op.norm(op.apply(xk) - vals[k] * xk) / op.norm(xk) for k, xk in enumerate(x)])
    pairs = [GaugePair.from_vector(xk, op.lat, op.grid, eps, op.free) for xk in x]
    return KernelReport(pairs, vals[:n_eigs], float(vals[2]), cos, res)


def smallest_restricted_singular_value(op: DiscreteOperator, constraints) -> float:
    """min over x orthogonal (weighted) to `constraints` of |LL x| / |x|.

    Inverse iteration on (P S^2 P)^{-1} restricted to range(P), with S^{-2} from one
    sparse LU of S and the constraint handled as a bordered (Schur) correction.
    """
    S = op.symmetric_form()
    lu = splu(S)
    s = np.sqrt(op.mass)
    if constraints:
        Q, _ = np.linalg.qr(np.column_stack([s * c for c in constraints]))
    else:
        Q = np.zeros((S.shape[0], 0))

    def s_inv2(z):
        return lu.solve(lu.solve(z))

    W = np.column_stack([s_inv2(Q[:, k]) for k in range(Q.shape[1])]) if Q.shape[1] else Q
    G = Q.T @ W
    if Q.shape[1] and np.linalg.cond(G) > 1e14:
        raise SubspaceDeficient("constraint Gram matrix is singular")

    def mv(z):
        z = z - Q @ (Q.T @ z)
        y = s_inv2(z)
        if Q.shape[1]:
            y = y - W @ np.linalg.solve(G, Q.T @ y)
        return y - Q @ (Q.T @ y)

    A = LinearOperator(S.shape, matvec=mv, dtype=float)
    rng = np.random.default_rng(7)
    v0 = rng.standard_normal(S.shape[0])
    try:
        val = eigsh(A, k=1, which="LM", v0=v0, tol=1e-8, return_eigenvectors=False)[0]
    except ArpackNoConvergence as exc:  # pragma: no cover
        raise EigsolverFailure("restricted singular value iteration failed") from exc
    if not np.isfinite(val) or val <= 0:
        raise SubspaceDeficient("projected operator is singular")
    return float(1 / np.sqrt(val))


@dataclass
class InverseEstimateRow:
    epsilon: float
    c: float
    xi_sq: float
    dof: int


def verify_inverse_estimate(eps_list, R_factor: float = 10.0, h_factor: float = 8.0,
                            include_kernel: bool = False, xi_sq_scaled: float = 0.0,
                            profile_nodes: int = 4001) -> list[InverseEstimateRow]:
    """c(eps) = eps^2 min_{x perp kernel} |LL x| / |x| for each eps.

    The grid follows eps (R = R_factor*eps, h = eps/h_factor); the radial profile is
    solved on a fixed node count over [0, 25 eps].  xi_sq_scaled adds the Fourier shift
    |xi|^2 = xi_sq_scaled / eps^2.
    """
    rows = []
    for eps in eps_list:
        prof = solve_vortex_profile(eps, 25 * eps, profile_nodes)
        grid = Grid2D(R_factor * eps, eps / h_factor)
        op = assemble_gauge_fixed_operator_2d(prof, grid)
        if xi_sq_scaled:
            op = assemble_model_mode_operator(prof, xi_sq_scaled / eps**2, base=op)
        cons = [] if include_kernel else op.kernel_vectors()
        c = eps**2 * smallest_restricted_singular_value(op, cons)
        rows.append(InverseEstimateRow(float(eps), c, op.xi_sq, op.dimension))
    return rows


# ------------------------------------------------------------------ sum of squares

@dataclass
class QuadraticFormReport:
    total: float
    square1: float
    square2: float

    def defect(self, c1: float = 4.0, c2: float = 2.0) -> float:
        """|total - c1*square1 - c2*square2| / |total|."""
        return abs(self.total - c1 * self.square1 - c2 * self.square2) / abs(self.total)


def _spectral_tools(n, h):
    k = 2 * np.pi * np.fft.fftfreq(n, d=h)
    k1, k2 = np.meshgrid(k, k, indexing="ij")

    def d(u, axis):
        kk = k1 if axis == 0 else k2
        return np.fft.ifft2(1j * kk * np.fft.fft2(u))

    def shift(u, axis, s):
        kk = k1 if axis == 0 else k2
        return np.fft.ifft2(np.exp(1j * kk * s) * np.fft.fft2(u)).real

    return d, shift


def quadratic_form_decomposition(profile: VortexProfile, pair: GaugePair, leak_tol: float = 1e-8) -> QuadraticFormReport:
    """<LL x, x> and the two squares of the sum-of-squares identity, by Fourier quadrature.

    total  = <LL x, x> from the expanded second-order operator
    square1 = int |eps d alpha + i conj(psi) f / (2 eps)|^2,   alpha = a1 + i a2
    square2 = int |dbar_A f - i psi alpha / 2|^2
    The pair must be negligible on the boundary band so the periodic extension is smooth.
    Link values a[..., mu] are moved from link midpoints to nodes by a spectral shift.
    """
    grid, eps = pair.grid, profile.epsilon
    n, h = grid.n, grid.h
    a, f = pair.a, pair.f
    scale = max(np.max(np.abs(a)), np.max(np.abs(f)), 1e-300)
    band = np.ones((n, n), bool)
    band[3:-3, 3:-3] = False
    edge = max(np.max(np.abs(a[band])), np.max(np.abs(f[band])))
    if edge > leak_tol * scale:
        raise BoundaryLeak(f"pair is {edge / scale:.1e} of its maximum on the boundary")

    d, shift = _spectral_tools(n, h)
    a1 = shift(a[..., 0], 0, -h / 2)  # a1 sampled at x + h/2 e1
    a2 = shift(a[..., 1], 1, -h / 2)
    y = -grid.R + h * np.arange(n)
    Y1, Y2 = np.meshgrid(y, y, indexing="ij")
    vf = VortexField(profile)
    psi = vf.psi(Y1, Y2)
    A1, A2 = vf.gauge(Y1, Y2)
    D1psi, D2psi = vf.covariant(Y1, Y2)
    mod2 = np.abs(psi) ** 2

    def cov(u, j):
        return d(u, j) - 1j * (A1 if j == 0 else A2) * u

    # expanded operator
    lap = lambda u: (d(d(u, 0), 0) + d(d(u, 1), 1)).real
    La1 = -lap(a1) + mod2 * a1 / eps**2 + 2 * np.imag(np.conj(D1psi) * f) / eps**2
    La2 = -lap(a2) + mod2 * a2 / eps**2 + 2 * np.imag(np.conj(D2psi) * f) / eps**2
    Lf = (-(cov(cov(f, 0), 0) + cov(cov(f, 1), 1)) + 2j * (a1 * D1psi + a2 * D2psi)
          + mod2 * f / eps**2 - (1 - mod2) * f / (2 * eps**2))
    h2 = h * h
    total = h2 * np.sum(eps**2 * (a1 * La1 + a2 * La2) + np.real(np.conj(f) * Lf))

    alpha = a1 + 1j * a2
    dalpha = 0.5 * (d(alpha, 0) - 1j * d(alpha, 1))
    s1 = h2 * np.sum(np.abs(eps * dalpha + 1j * np.conj(psi) * f / (2 * eps)) ** 2)
    dbar = 0.5 * (cov(f, 0) + 1j * cov(f, 1))
    s2 = h2 * np.sum(np.abs(dbar - 0.5j * psi * alpha) ** 2)
    return QuadraticFormReport(float(total), float(s1), float(s2))


def random_decaying_pair(grid: Grid2D, eps: float, rng, n_bumps: int = 3, support: float = 0.5) -> GaugePair:
    """Sum of Gaussian bumps with random amplitudes, centred well inside the box."""
    n, h = grid.n, grid.h
    y = -grid.R + h * np.arange(n)
    Y1, Y2 = np.meshgrid(y, y, indexing="ij")
    a = np.zeros((n, n, 2))
    f = np.zeros((n, n), complex)
    sig = grid.R / 14
    for _ in range(n_bumps):
        c = rng.uniform(-support * grid.R, support * grid.R, size=2)
        for mu, off in ((0, (h / 2, 0)), (1, (0, h / 2))):
            g = np.exp(-((Y1 + off[0] - c[0]) ** 2 + (Y2 + off[1] - c[1]) ** 2) / (2 * sig**2))
            a[..., mu] += rng.normal() * g / eps
        g = np.exp(-((Y1 - c[0]) ** 2 + (Y2 - c[1]) ** 2) / (2 * sig**2))
        f += (rng.normal() + 1j * rng.normal()) * g
    a[-1, :, 0] = 0.0
    a[:, -1, 1] = 0.0
    return GaugePair(a, f, grid, eps)
