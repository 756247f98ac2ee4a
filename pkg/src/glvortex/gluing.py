"""Obstruction space, projected inner corrector and outer balancing on the normal field.

Inner problem.  For the tube ansatz X0 the correction d solves

    GL(X0 + d) + T_{phi0+f} T*_{phi0} d  =  sum_{x, w} lam_w(x) e_w(x),     <d, e_w(x)>_kappa = 0,

with e_w(x) = (F_A(w, .), D_{A,w} phi) on the slice through x.  This bordered system is the
Lyapunov-Schmidt form of "(I - P) of the augmented residual vanishes"; lam = Pi(residual)
is the balancing map.  Newton steps are solved with GMRES, preconditioned by exact solves of
the x-Fourier modes of the symmetric (v = 0) tube operator.

Outer problem.  Quasi-Newton on v: lam(v) = 0, Jacobian seeded by the Jacobi operator.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres, splu

from .ansatz import (ApproximateSolution, NormalField, TubeGrid, build_approximate_solution,
                     gl_residual)
from .errors import (Degenerate, DegenerateJacobi, GramSingular, NewtonDiverged, OuterDiverged,
                     PatchTooSmall, ProjLoss)
from .geometry import ModelManifold, jacobi_operator
from .linop import GaugePair
from .vortex2d import VortexField, VortexProfile


def kappa(dist, eps):
    """Quintic step: 1 for dist <= sqrt(eps), 0 for dist >= 2 sqrt(eps)."""
    s = np.sqrt(eps)
    t = np.clip((np.asarray(dist) - s) / s, 0.0, 1.0)
    return 1.0 - t**3 * (10 - 15 * t + 6 * t**2)


def slice_index(lat):
    """x-slice of every real dof (links by their starting node)."""
    nx = lat.shape[0]
    node_slice = lat.node_index[:, 0]
    return np.concatenate([node_slice[lat.link_n0], node_slice, node_slice]), nx


def obstruction_basis(apx: ApproximateSolution):
    """E[w] = (F_A(w, .), D_{A,w} phi) for w = e_1, e_2, sampled in the real lattice layout.

    Link components are coordinate components at link midpoints (closed forms of the
    pulled-back vortex); node components use the fibre covariant derivative at y - v(x).
    """
    lat = apx.lattice
    vf = VortexField(apx.profile)
    mid = lat.link_mid
    c = apx.v.evaluate(mid[:, 0])
    dv = apx.v.evaluate(mid[:, 0], 1)
    F = vf.curvature(mid[:, 1] - c[:, 0], mid[:, 2] - c[:, 1])
    d = lat.link_dir
    pos = lat.node_pos
    cn = apx.v.evaluate(pos[:, 0])
    d1, d2 = vf.covariant(pos[:, 1] - cn[:, 0], pos[:, 2] - cn[:, 1])
    E = []
    for w in ((1.0, 0.0), (0.0, 1.0)):
        # F(w, e_1) = -w2 F, F(w, e_2) = w1 F, F(w, e_x) = (v1' w2 - v2' w1) F
        a = np.select([d == 1, d == 2], [-w[1] * F, w[0] * F], (dv[:, 0] * w[1] - dv[:, 1] * w[0]) * F)
        E.append(lat.join(a, w[0] * d1 + w[1] * d2))
    return np.array(E)


class ObstructionProjector:
    """P x = sum_w c_w(x) e_w(x) with c = G^{-1} <x, e_w>_kappa, slice by slice.

    The kappa pairing only sees the normal link components and the scalar, each weighted by
    the lattice mass (eps^2 vol for links, vol for nodes) and kappa(|y|).
    """

    def __init__(self, apx: ApproximateSolution, gram_cond_max: float = 10.0):
        lat = apx.lattice
        self.apx = apx
        self.eps = apx.epsilon
        gl = apx.lattice_gl()
        self.slice, self.n_x = slice_index(lat)
        ypos = np.concatenate([lat.link_mid[:, 1:], lat.node_pos[:, 1:], lat.node_pos[:, 1:]])
        normal = np.concatenate([lat.link_dir != 0, np.ones(2 * lat.n_nodes, bool)])
        self.weight = gl.mass * kappa(np.linalg.norm(ypos, axis=1), self.eps) * normal
        self.E = obstruction_basis(apx)
        self.gram = np.empty((self.n_x, 2, 2))
        for i in range(2):
            for j in range(2):
                self.gram[:, i, j] = np.bincount(self.slice, self.weight * self.E[i] * self.E[j], self.n_x)
        ev = np.linalg.eigvalsh(self.gram)
        if np.any(ev[:, 0] <= 0) or np.max(ev[:, 1] / ev[:, 0]) > gram_cond_max:
            raise GramSingular(f"slice Gram matrices have eigenvalues in [{ev.min():.3g}, {ev.max():.3g}]")
        self.gram_inv = np.linalg.inv(self.gram)

    def pairings(self, X):
        return np.stack([np.bincount(self.slice, self.weight * X * self.E[w], self.n_x) for w in range(2)], 1)

    def coefficients(self, X):
        return np.einsum("sij,sj->si", self.gram_inv, self.pairings(X))

    def expand(self, coeffs):
        return coeffs[self.slice, 0] * self.E[0] + coeffs[self.slice, 1] * self.E[1]

    def project(self, X):
        return self.expand(self.coefficients(X))

    def complement(self, X):
        return X - self.project(X)

    def Pi(self, X) -> NormalField:
        return NormalField(self.coefficients(X), self.apx.grid.L0)

    def inner(self, X, Y) -> float:
        return float(np.sum(self.weight * X * Y))


def obstruction_projection(pair: GaugePair, apx: ApproximateSolution, projector=None):
    P = projector or ObstructionProjector(apx)
    X = pair.to_vector(apx.lattice)
    c = P.coefficients(X)
    rest = X - P.expand(c)
    return (GaugePair.from_vector(rest, apx.lattice, apx.grid, apx.epsilon),
            NormalField(c, apx.grid.L0))


# ------------------------------------------------------------------ Fourier-mode preconditioner

def _slice_permutation(lat, free):
    """perm[s, j]: position (within the free dofs) of local dof j on slice s."""
    sl, nx = slice_index(lat)
    sl = sl[free]
    order = np.argsort(sl, kind="stable")
    counts = np.bincount(sl, minlength=nx)
    if np.any(counts != counts[0]):
        raise ValueError("slices carry different numbers of free dofs")
    return order.reshape(nx, counts[0])


class ModePreconditioner:
    """Exact inverse of the bordered tube Jacobian when it is invariant along x.

    The blocks C_d (slice 0 to slice d) of the reference Jacobian are Fourier-summed into one
    complex 2D matrix per x-mode, bordered with the slice obstruction basis, and factorised.
    """

    def __init__(self, J_ref, mass_free, E_free, W_free, perm):
        self.perm = perm
        nx, nl = perm.shape
        self.nx, self.nl = nx, nl
        J_ref = J_ref.tocsr()
        rows = J_ref[perm[0]]
        inv = np.empty(nx * nl, int)
        inv[perm.ravel()] = np.arange(nx * nl)
        coo = rows.tocoo()
        gcol = inv[coo.col]
        dslice, lcol = np.divmod(gcol, nl)
        self.blocks = {}
        for d in np.unique(dslice):
            m = dslice == d
            self.blocks[int(d)] = sp.csr_matrix((coo.data[m], (coo.row[m], lcol[m])), shape=(nl, nl))
        Bm = (mass_free[perm[0]][:, None] * E_free[:, perm[0]].T)      # M e_w on slice 0
        Bc = (W_free[perm[0]][:, None] * E_free[:, perm[0]].T)         # kappa pairing rows
        self.lus = {}
        for k in range(nx // 2 + 1):
            th = 2 * np.pi * k / nx
            C = sum(np.exp(1j * th * d) * blk for d, blk in self.blocks.items())
            Kb = sp.bmat([[C, sp.csr_matrix(-Bm)], [sp.csr_matrix(Bc.T), None]], format="csc")
            self.lus[k] = splu(Kb.astype(complex) if k else Kb.real.astype(float))

    def solve(self, r_d, r_l):
        nx, nl = self.nx, self.nl
        R = np.zeros((nx, nl + 2))
        R[:, :nl] = r_d[self.perm]
        R[:, nl:] = r_l.reshape(nx, 2)
        Rh = np.fft.fft(R, axis=0)
        Yh = np.empty_like(Rh)
        for k in range(nx // 2 + 1):
            Yh[k] = self.lus[k].solve(Rh[k] if k else Rh[k].real)
            if 0 < k < nx - k:
                Yh[nx - k] = np.conj(Yh[k])
        Y = np.fft.ifft(Yh, axis=0).real
        out = np.empty(nx * nl)
        out[self.perm] = Y[:, :nl]
        return out, Y[:, nl:].ravel()


# ------------------------------------------------------------------ solve context

@dataclass
class GlueContext:
    """Shared data for inner solves on one (manifold, profile, grid)."""
    manifold: ModelManifold
    profile: VortexProfile
    grid: TubeGrid
    precond: ModePreconditioner | None = None
    stats: dict = field(default_factory=dict)

    @property
    def epsilon(self):
        return self.profile.epsilon

    def approximate(self, v: NormalField | None = None) -> ApproximateSolution:
        if v is not None and v.n != self.grid.n_x:
            v = v.resample(self.grid.n_x)
        return build_approximate_solution(self.manifold, self.profile, v, self.grid)

    def preconditioner(self) -> ModePreconditioner:
        if self.precond is None:
            t0 = time.time()
            # reference: the symmetric part of the model, invariant along x
            ref_m = ModelManifold(self.manifold.kind, self.manifold.L0, self.manifold.tube_radius)
            apx = build_approximate_solution(ref_m, self.profile, None, self.grid)
            P = ObstructionProjector(apx)
            gl = apx.lattice_gl()
            free = apx.lattice.free_mask
            _, _, J = gl.augmented(apx.X, np.zeros_like(apx.X), free)
            perm = _slice_permutation(apx.lattice, free)
            self.precond = ModePreconditioner(J, gl.mass[free], P.E[:, free], P.weight[free], perm)
            self.stats["precond_seconds"] = time.time() - t0
        return self.precond


@dataclass
class CorrectedSolution:
    apx: ApproximateSolution
    delta: np.ndarray
    lam: NormalField
    u: np.ndarray
    residual: float
    projected_residual: float
    trace: list
    gmres_iterations: list
    balanced: bool = False

    @property
    def X(self):
        return self.apx.X + self.delta

    def correction(self) -> GaugePair:
        return GaugePair.from_vector(self.delta, self.apx.lattice, self.apx.grid, self.apx.epsilon)

    def correction_norm(self) -> float:
        """eps |a|_inf + |f|_inf of the correction."""
        a, f = self.apx.lattice.split(self.delta)
        return float(self.apx.epsilon * np.max(np.abs(a)) + np.max(np.abs(f)))

    def gl_residual(self) -> GaugePair:
        return gl_residual(self.apx, X=self.X)

    def full_residual(self) -> float:
        """Sup norm of the unprojected Ginzburg-Landau residual (eps b, h) on the free dofs."""
        r = self.gl_residual()
        return float(max(self.apx.epsilon * np.max(np.abs(r.a)), np.max(np.abs(r.f))))


def _res_norm(F1, mass_f, eps):
    return float(np.max(np.abs(F1 / mass_f)) * eps**2)


def inner_solve(ctx: GlueContext, apx: ApproximateSolution, tol: float = 1e-10, max_iter: int = 12,
                gmres_rtol: float = 1e-11, delta0=None) -> CorrectedSolution:
    """Newton on the bordered projected system.  Residuals are measured as eps^2 |r|_inf."""
    lat = apx.lattice
    gl = apx.lattice_gl()
    free = lat.free_mask
    eps = apx.epsilon
    P = ObstructionProjector(apx)
    Ef = P.E[:, free]
    Wf = P.weight[free]
    mf = gl.mass[free]
    sl = P.slice[free]
    nx = P.n_x
    pre = ctx.preconditioner()
    n = int(free.sum())

    def border(lam):
        lam = lam.reshape(nx, 2)
        return mf * (lam[sl, 0] * Ef[0] + lam[sl, 1] * Ef[1])

    def constraint(d):
        return np.stack([np.bincount(sl, Wf * d * Ef[w], nx) for w in range(2)], 1).ravel()

    delta = np.zeros(lat.n_real) if delta0 is None else delta0.copy()
    lam = np.zeros(2 * nx)
    trace, its = [], []
    best = np.inf
    stall = 0
    for it in range(max_iter + 1):
        R, u, J = gl.augmented(apx.X, delta, free)
        F1 = R - border(lam)
        F2 = constraint(delta[free])
        res = max(_res_norm(F1, mf, eps), float(np.max(np.abs(F2))))
        trace.append(res)
        if not np.isfinite(res) or res > 1e6 * max(trace[0], 1e-300):
            raise NewtonDiverged(f"inner Newton diverged at iteration {it}", trace)
        if res < tol:
            break
        if it == max_iter:
            raise ProjLoss(f"projected residual stalled at {res:.2e} (tol {tol:.1e})", trace)
        if res > 0.5 * best:
            stall += 1
            if stall >= 3:
                raise ProjLoss(f"projected residual stagnates at {res:.2e}", trace)
        else:
            stall = 0
        best = min(best, res)

        def mv(z):
            zd, zl = z[:n], z[n:]
            return np.concatenate([J @ zd - border(zl), constraint(zd)])

        def pc(z):
            yd, yl = pre.solve(z[:n], z[n:])
            return np.concatenate([yd, yl])

        A = LinearOperator((n + 2 * nx, n + 2 * nx), matvec=mv, dtype=float)
        Mp = LinearOperator(A.shape, matvec=pc, dtype=float)
        rhs = -np.concatenate([F1, F2])
        count = [0]
        sol, info = gmres(A, rhs, M=Mp, rtol=gmres_rtol, atol=0.0, restart=60, maxiter=20,
                          callback=lambda _: count.__setitem__(0, count[0] + 1), callback_type="pr_norm")
        its.append(count[0])
        if info < 0:
            raise NewtonDiverged("GMRES breakdown", trace)
        delta[free] += sol[:n]
        lam += sol[n:]
    r = R / mf  # weighted augmented residual at the final iterate
    full = np.zeros(lat.n_real)
    full[free] = r
    proj = float(np.max(np.abs(P.complement(full)[free])) * eps**2)
    return CorrectedSolution(apx, delta, NormalField(lam.reshape(nx, 2), apx.grid.L0), u, res, proj,
                             trace, its)


def gauge_residual(cs: CorrectedSolution, u=None):
    """(|u|_inf, |T*T u - T*(sum lam e_w)|_inf).

    Applying T^T to the inner equation and using gauge invariance of the energy gives
    d*du + eps^-2 |phi~|^2 u = T*(P-part) on the free nodes; the second number is the
    defect of that identity for the supplied (default: computed) u.
    """
    apx = cs.apx
    lat = apx.lattice
    gl = apx.lattice_gl()
    u = cs.u if u is None else np.asarray(u, float)
    phi = lat.split(cs.X)[1]
    T = gl.gauge_map(phi)
    TsT = (T.T @ (gl.mass * (T @ u))) / gl.vol_node
    P = ObstructionProjector(apx)
    lam = cs.lam.values
    rhs = (T.T @ (gl.mass * P.expand(lam))) / gl.vol_node
    defect = np.abs(TsT - rhs)[lat.free_nodes]
    return float(np.max(np.abs(u))), float(np.max(defect) * apx.epsilon**2)


# ------------------------------------------------------------------ balancing

def balancing_map(ctx: GlueContext, v: NormalField | None = None, tol: float = 1e-10, **kw):
    """Pi of the augmented residual of the corrected pair: the obstruction coefficients lam(v)."""
    apx = ctx.approximate(v)
    cs = inner_solve(ctx, apx, tol=tol, **kw)
    return cs.lam, cs


def fiber_coefficient(profile: VortexProfile, v: NormalField, x0: float, w, half_width_factor=12.0,
                      h_factor=20.0, step=1e-5):
    """Fibre integral  int eps^2 <F_A(e_x, .), F_A(w, .)> + <D_{A,e_x} phi, D_{A,w} phi>  at x0.

    All derivatives are central differences of the pulled-back ansatz (A, phi)(x, y); the
    closed forms are not used, so the result checks the curvature formulas as well.
    """
    eps = profile.epsilon
    vf = VortexField(profile)
    Y = half_width_factor * eps
    h = eps / h_factor
    y = np.arange(-Y, Y + h / 2, h)
    Y1, Y2 = np.meshgrid(y, y, indexing="ij")
    w = np.asarray(w, float)

    def fields(x, y1, y2):
        c = v.evaluate(np.atleast_1d(x))[0]
        dc = v.evaluate(np.atleast_1d(x), 1)[0]
        z1, z2 = y1 - c[0], y2 - c[1]
        B1, B2 = vf.gauge(z1, z2)
        Ax = -(dc[0] * B1 + dc[1] * B2)
        return np.stack([Ax, B1, B2]), vf.psi(z1, z2)

    def partial(axis, x, y1, y2):
        e = np.zeros(3)
        e[axis] = step
        Ap, pp = fields(x + e[0], y1 + e[1], y2 + e[2])
        Am, pm = fields(x - e[0], y1 - e[1], y2 - e[2])
        return (Ap - Am) / (2 * step), (pp - pm) / (2 * step)

    A, phi = fields(x0, Y1, Y2)
    dA = [partial(k, x0, Y1, Y2) for k in range(3)]
    # F_{mn} = d_m A_n - d_n A_m, D_m phi = d_m phi - i A_m phi
    F = np.array([[dA[m][0][nn] - dA[nn][0][m] for nn in range(3)] for m in range(3)])
    D = [dA[m][1] - 1j * A[m] * phi for m in range(3)]
    Fw = [w[0] * F[1, k] + w[1] * F[2, k] for k in (1, 2)]
    Fx = [F[0, k] for k in (1, 2)]
    Dw = w[0] * D[1] + w[1] * D[2]
    dens = eps**2 * (Fx[0] * Fw[0] + Fx[1] * Fw[1]) + np.real(np.conj(D[0]) * Dw)
    return float(np.trapezoid(np.trapezoid(dens, y, axis=1), y))


def balancing_derivative(ctx: GlueContext, direction: NormalField, delta: float, tol=1e-10, base=None):
    """One-sided difference (lam(delta d) - lam(0)) / delta as a NormalField."""
    lam0 = base if base is not None else balancing_map(ctx, None, tol)[0]
    lam1 = balancing_map(ctx, NormalField(delta * direction.values, direction.L0), tol)[0]
    return NormalField((lam1.values - lam0.values) / delta, direction.L0)


@dataclass
class OuterResult:
    v: NormalField
    solution: CorrectedSolution
    trace: list
    seconds: float


def outer_solve(ctx: GlueContext, tol: float = 1e-9, v0: NormalField | None = None, max_iter: int = 12,
                inner_tol: float = 1e-11, jacobian_sign: float = 1.0) -> OuterResult:
    """Broyden iteration on lam(v) = 0 seeded with jacobian_sign * J (Jacobi operator on the x-grid)."""
    t0 = time.time()
    m = ctx.manifold
    try:
        Jg = jacobi_operator(m, ctx.grid.n_x)
    except Degenerate as exc:
        raise DegenerateJacobi(str(exc)) from exc
    B = jacobian_sign * Jg.matrix
    nx = ctx.grid.n_x
    v = np.zeros(2 * nx) if v0 is None else v0.resample(nx).values.ravel().copy()
    trace = []
    lam, cs = balancing_map(ctx, NormalField(v.reshape(nx, 2), m.L0), inner_tol)
    for it in range(max_iter + 1):
        g = lam.values.ravel()
        nrm = float(np.max(np.abs(g)))
        trace.append({"iteration": it, "lam": nrm, "v": float(np.max(np.abs(v))),
                      "inner": cs.trace})
        if nrm < tol:
            cs.balanced = True
            return OuterResult(NormalField(v.reshape(nx, 2), m.L0), cs, trace, time.time() - t0)
        if it == max_iter or not np.isfinite(nrm) or nrm > 10 * trace[0]["lam"]:
            break
        step = -np.linalg.solve(B, g)
        # keep |v| <= eps/2 (sup of the components as a cheap surrogate of the C^{2,gamma} ball)
        vmax = np.max(np.abs(v + step))
        s = step * min(1.0, 0.5 * ctx.epsilon / vmax) if vmax > 0 else step
        v = v + s
        lam, cs = balancing_map(ctx, NormalField(v.reshape(nx, 2), m.L0), inner_tol,
                                delta0=cs.delta)
        # Broyden update of the Jacobian estimate
        y = lam.values.ravel() - g
        B = B + np.outer(y - B @ s, s) / (s @ s)
    raise OuterDiverged(f"balancing did not converge (last |lam| = {trace[-1]['lam']:.2e})", trace)


# ------------------------------------------------------------------ partition preconditioner

@dataclass
class PartitionPreconditioner:
    delta: float
    apply: object
    theta: float
    operator: object


def build_partition_preconditioner(ctx: GlueContext, apx: ApproximateSolution, delta: float | None = None,
                                   n_probe: int = 3, seed: int = 0) -> PartitionPreconditioner:
    """S~ b = eta S_near(eta' b) + (1 - eta) S_far((1 - eta') b), measured contraction theta.

    S_near: exact mode solves of the x-invariant vortex tube operator (the model operator).
    S_far:  mode solves of the screened far-field operator (|phi| = 1, flat connection),
            i.e. -Laplacian + eps^-2 on each component.
    eta, eta' are radial cut-offs switching between 2 delta and 4 delta (eta') and between
    delta and 2 delta (eta); theta = max over random probes of |(I - LL S~) b| / |b|.
    """
    eps = ctx.epsilon
    delta = np.sqrt(eps) if delta is None else float(delta)
    Yedge = ctx.grid.h_y * (ctx.grid.n_y // 2)
    if delta < 2 * eps or delta > Yedge / 4:
        raise PatchTooSmall(f"patch radius {delta:g} outside [2 eps, tube/4] = [{2 * eps:g}, {Yedge / 4:g}]")
    lat = apx.lattice
    gl = apx.lattice_gl()
    free = lat.free_mask
    _, _, K = gl.augmented(apx.X, np.zeros_like(apx.X), free)
    mf = gl.mass[free]
    ypos = np.concatenate([lat.link_mid[:, 1:], lat.node_pos[:, 1:], lat.node_pos[:, 1:]])[free]
    r = np.linalg.norm(ypos, axis=1)

    def step(lo, hi):
        t = np.clip((r - lo) / (hi - lo), 0, 1)
        return 1 - t**3 * (10 - 15 * t + 6 * t**2)

    eta_in = step(2 * delta, 4 * delta)
    eta_out = step(delta, 2 * delta)
    perm = _slice_permutation(lat, free)
    near = _unbordered_modes(ctx, perm, vortex=True)
    far = _unbordered_modes(ctx, perm, vortex=False)

    def apply(b):
        return eta_in * near(eta_out * b) + (1 - eta_in) * far((1 - eta_out) * b)

    def LL(x):
        return (K @ x) / mf

    rng = np.random.default_rng(seed)
    theta = 0.0
    for _ in range(n_probe):
        b = rng.standard_normal(mf.size) * np.exp(-r / (4 * eps))
        res = b - LL(apply(b))
        theta = max(theta, float(np.sqrt(np.sum(mf * res**2) / np.sum(mf * b**2))))
    return PartitionPreconditioner(delta, apply, theta, LL)


def _unbordered_modes(ctx: GlueContext, perm, vortex: bool):
    """Mode-wise inverse of the x-invariant tube operator LL (weighted-residual form)."""
    m = ModelManifold(ctx.manifold.kind, ctx.manifold.L0, ctx.manifold.tube_radius)
    apx = build_approximate_solution(m, ctx.profile, None, ctx.grid)
    lat = apx.lattice
    gl = apx.lattice_gl()
    X = apx.X.copy()
    if not vortex:
        a, phi = lat.split(X)
        X = lat.join(np.zeros_like(a), np.ones_like(phi))
    free = lat.free_mask
    _, _, K = gl.augmented(X, np.zeros_like(X), free)
    mf = gl.mass[free]
    nx, nl = perm.shape
    rows = K.tocsr()[perm[0]].tocoo()
    inv = np.empty(nx * nl, int)
    inv[perm.ravel()] = np.arange(nx * nl)
    dsl, lcol = np.divmod(inv[rows.col], nl)
    blocks = {int(d): sp.csr_matrix((rows.data[dsl == d], (rows.row[dsl == d], lcol[dsl == d])), shape=(nl, nl))
              for d in np.unique(dsl)}
    lus = {}
    for k in range(nx // 2 + 1):
        th = 2 * np.pi * k / nx
        C = sum(np.exp(1j * th * d) * blk for d, blk in blocks.items())
        lus[k] = splu((C if k else C.real).tocsc())

    def solve(b):
        R = (mf * b)[perm]
        Rh = np.fft.fft(R, axis=0)
        Yh = np.empty_like(Rh)
        for k in range(nx // 2 + 1):
            Yh[k] = lus[k].solve(Rh[k] if k else Rh[k].real)
            if 0 < k < nx - k:
                Yh[nx - k] = np.conj(Yh[k])
        out = np.empty(nx * nl)
        out[perm] = np.fft.ifft(Yh, axis=0).real
        return out

    return solve
