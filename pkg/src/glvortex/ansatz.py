"""Approximate solutions planted along S, their residual and weighted Hoelder norms.

The tube is a lattice in Fermi coordinates (x periodic along S, y in [-Y, Y]^2).  In each
normal fibre the one-vortex solution is recentred at v(x).  The connection is the pullback
of the vortex connection B under (x, y) -> y - v(x), so

    A(e_a) = B(e_a)(y - v),   A(e_x) = -v_r'(x) B(e_r)(y - v),   phi = psi(y - v),

and link variables are exact line integrals of that pullback.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TubeTooNarrow, VTooLarge
from .geometry import ModelManifold
from .lattice import Axis, Lattice, LatticeGL
from .linop import GaugePair
from .vortex2d import VortexField, VortexProfile


# ------------------------------------------------------------------ normal fields

@dataclass
class NormalField:
    """Normal components v[s, r] at the nodes x_s = s L0 / n of a periodic grid on S."""
    values: np.ndarray
    L0: float = 2 * np.pi

    def __post_init__(self):
        self.values = np.asarray(self.values, float).reshape(-1, 2)

    @classmethod
    def zero(cls, n, L0=2 * np.pi):
        return cls(np.zeros((n, 2)), L0)

    @classmethod
    def from_function(cls, fn, n, L0=2 * np.pi):
        x = L0 * np.arange(n) / n
        return cls(np.column_stack(fn(x)), L0)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def x(self):
        return self.L0 * np.arange(self.n) / self.n

    def _coeffs(self):
        return np.fft.rfft(self.values, axis=0)

    def evaluate(self, x, derivative: int = 0):
        """Trigonometric interpolant (or its derivative) at arbitrary x."""
        x = np.asarray(x, float)
        n = self.n
        c = self._coeffs() / n
        k = 2 * np.pi * np.arange(c.shape[0]) / self.L0
        wt = np.full(c.shape[0], 2.0)
        wt[0] = 1.0
        if n % 2 == 0:
            wt[-1] = 1.0
        ph = np.exp(1j * np.multiply.outer(x, k)) * (1j * k) ** derivative * wt
        return np.real(ph @ c)

    def norm_c2(self, gamma: float = 0.5, samples: int = 512) -> float:
        """max(|v|, |v'|, |v''|, [v'']_gamma), each over S."""
        xs = self.L0 * np.arange(samples) / samples
        parts = [np.max(np.linalg.norm(self.evaluate(xs, d), axis=-1)) for d in range(3)]
        v2 = self.evaluate(xs, 2)
        semi = 0.0
        for s in range(1, samples // 2 + 1):
            dist = self.L0 * s / samples
            diff = np.linalg.norm(v2 - np.roll(v2, -s, axis=0), axis=-1)
            semi = max(semi, np.max(diff) / dist**gamma)
        return float(max(max(parts), semi))

    def resample(self, n: int) -> "NormalField":
        return NormalField(self.evaluate(self.L0 * np.arange(n) / n), self.L0)


# ------------------------------------------------------------------ tube grid

@dataclass(frozen=True)
class TubeGrid:
    n_x: int
    Y: float
    h_y: float
    L0: float = 2 * np.pi

    @property
    def n_y(self) -> int:
        return 2 * int(round(self.Y / self.h_y)) + 1

    @property
    def h_x(self) -> float:
        return self.L0 / self.n_x

    @property
    def cell(self) -> float:
        return self.h_x * self.h_y**2

    @property
    def shape(self):
        return (self.n_x, self.n_y, self.n_y)

    def lattice(self) -> Lattice:
        ax = Axis(self.n_x, self.h_x, 0.0, periodic=True)
        ay = Axis(self.n_y, self.h_y, -self.h_y * (self.n_y // 2))
        return Lattice([ax, ay, ay])

    def real_dof(self) -> int:
        nodes = self.n_x * self.n_y**2
        return nodes * 5 - 2 * self.n_x * self.n_y  # minus the missing outward y-links

    @classmethod
    def for_epsilon(cls, eps, n_x=16, Y_factor=12.0, h_factor=3.0, L0=2 * np.pi):
        return cls(n_x, Y_factor * eps, eps / h_factor, L0)


# ------------------------------------------------------------------ approximate solution

@dataclass
class ApproximateSolution:
    manifold: ModelManifold
    profile: VortexProfile
    v: NormalField
    grid: TubeGrid
    lattice: Lattice
    X: np.ndarray
    epsilon: float
    _gl: dict = field(default_factory=dict, repr=False)

    def split(self):
        return self.lattice.split(self.X)

    def phi(self):
        return self.split()[1].reshape(self.grid.shape)

    def lattice_gl(self, metric: str = "true") -> LatticeGL:
        if metric not in self._gl:
            m = self.manifold if metric == "true" else ModelManifold("flat3", self.manifold.L0)
            self._gl[metric] = LatticeGL(self.lattice, self.epsilon, metric=m.metric_diag)
        return self._gl[metric]

    def centers(self):
        return self.v.evaluate(self.lattice.axes[0].coords)

    def header(self) -> dict:
        g = self.grid
        return {"manifold": self.manifold.kind, "L0": g.L0, "epsilon": self.epsilon,
                "grid": {"n_x": g.n_x, "n_y": g.n_y, "Y": g.Y, "h_y": g.h_y},
                "v": self.v.values.tolist()}


def _pullback_x_integrals(vf: VortexField, v: NormalField, x0, y, hx, nodes=6):
    """Integral over [x0, x0+hx] of -v'(x) . B(y - v(x)) dx at fixed y."""
    t, wts = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (t + 1)
    out = np.zeros(len(x0))
    for tk, wk in zip(t, 0.5 * wts):
        xs = x0 + tk * hx
        c = v.evaluate(xs)
        dc = v.evaluate(xs, 1)
        B1, B2 = vf.gauge(y[:, 0] - c[:, 0], y[:, 1] - c[:, 1])
        out -= wk * hx * (B1 * dc[:, 0] + B2 * dc[:, 1])
    return out


def build_approximate_solution(m: ModelManifold, profile: VortexProfile, v: NormalField | None = None,
                               grid: TubeGrid | None = None, gamma: float = 0.5) -> ApproximateSolution:
    eps = profile.epsilon
    if m.tangent_dim != 1:
        raise ValueError("tube ansatz requires a three-dimensional model (one tangent direction)")
    grid = grid or TubeGrid.for_epsilon(eps, L0=m.L0)
    if abs(grid.L0 - m.L0) > 1e-12:
        raise ValueError("tube grid and manifold disagree on L0")
    v = v if v is not None else NormalField.zero(grid.n_x, m.L0)
    vn = v.norm_c2(gamma)
    if vn > eps * (1 + 1e-12):
        raise VTooLarge(f"|v|_C2,gamma = {vn:.3g} exceeds eps = {eps:g}")
    vmax = float(np.max(np.linalg.norm(v.evaluate(v.x), axis=-1))) if v.n else 0.0
    y_edge = grid.h_y * (grid.n_y // 2)
    if y_edge < 10 * eps + vmax:
        raise TubeTooNarrow(f"tube half-width {y_edge:g} < 10 eps + max|v| = {10 * eps + vmax:g}")

    lat = grid.lattice()
    vf = VortexField(profile)
    x = lat.node_pos[:, 0]
    c = v.evaluate(x)
    yrel = lat.node_pos[:, 1:] - c
    phi = vf.psi(yrel[:, 0], yrel[:, 1])

    a = np.zeros(lat.n_links)
    start = lat.link_start
    xl = start[:, 0]
    is_x = lat.link_dir == 0
    a[is_x] = _pullback_x_integrals(vf, v, xl[is_x], start[is_x, 1:], grid.h_x) / grid.h_x
    ny = ~is_x
    cl = v.evaluate(xl[ny])
    p0 = start[ny, 1:] - cl
    step = np.zeros_like(p0)
    step[np.arange(p0.shape[0]), lat.link_dir[ny] - 1] = grid.h_y
    a[ny] = vf.line_integral(p0, p0 + step) / grid.h_y
    return ApproximateSolution(m, profile, v, grid, lat, lat.join(a, phi), eps)


def vortex_centers(lat: Lattice, phi):
    """Zero of phi in every x-slice, located to sub-grid accuracy.

    Around the node of smallest |phi| (interior nodes only) phi is fitted by a complex
    linear function of y on the 3x3 stencil; its zero is the centre.  Returns (n_x, 2).
    """
    nx, n1, n2 = lat.shape
    P = np.asarray(phi).reshape(lat.shape)
    y1, y2 = lat.axes[1].coords, lat.axes[2].coords
    d = np.array([-1, 0, 1])
    D1, D2 = np.meshgrid(d, d, indexing="ij")
    M = np.column_stack([np.ones(9), D1.ravel(), D2.ravel()])
    out = np.empty((nx, 2))
    for s in range(nx):
        mod = np.abs(P[s, 1:-1, 1:-1])
        i, j = np.unravel_index(np.argmin(mod), mod.shape)
        i, j = i + 1, j + 1
        c = np.linalg.lstsq(M, P[s, i - 1:i + 2, j - 1:j + 2].ravel(), rcond=None)[0]
        A = np.array([[c[1].real, c[2].real], [c[1].imag, c[2].imag]])
        t = np.linalg.solve(A, -np.array([c[0].real, c[0].imag]))
        out[s] = (y1[i] + t[0] * lat.h[1], y2[j] + t[1] * lat.h[2])
    return out


# ------------------------------------------------------------------ curvature

def lattice_curvature(lat: Lattice, a):
    """F on every plaquette: circulation of the link phases divided by the coordinate area."""
    circ = lat.curl_phase @ a
    mu, nu = lat.plaq_dirs[:, 0], lat.plaq_dirs[:, 1]
    return circ / (lat.h[mu] * lat.h[nu])


def curvature_components(apx: ApproximateSolution):
    """Lattice curvature next to the closed forms F_B(y - v) and -v_r' F_B(e_r, e_a)(y - v).

    Returns a dict with keys 'normal' and 'mixed', each a pair (lattice, closed form)
    over the corresponding plaquettes.  Plaquette values are compared at plaquette centres.
    """
    lat = apx.lattice
    a, _ = apx.split()
    F = lattice_curvature(lat, a)
    vf = VortexField(apx.profile)
    ctr = lat.plaq_center
    dirs = lat.plaq_dirs
    xc = ctr[:, 0]
    cv = apx.v.evaluate(xc)
    dv = apx.v.evaluate(xc, 1)
    FB = vf.curvature(ctr[:, 1] - cv[:, 0], ctr[:, 2] - cv[:, 1])
    normal = (dirs[:, 0] == 1) & (dirs[:, 1] == 2)
    mixed = dirs[:, 0] == 0
    # F(e_x, e_a) = -v_r' F_B(e_r, e_a):  a = 1 -> v_2' F_B ;  a = 2 -> -v_1' F_B
    alpha = dirs[mixed, 1]
    closed_mixed = np.where(alpha == 1, dv[mixed, 1], -dv[mixed, 0]) * FB[mixed]
    return {"normal": (F[normal], FB[normal]), "mixed": (F[mixed], closed_mixed)}


def tangential_curvature(dv_i, dv_j, F_normal, C_ij, B_of):
    """Closed form F_A(e_i, e_j) = dv_i^r dv_j^s F(e_r, e_s) + C_ij + A(C_ij (y - v)).

    dv_i, dv_j: normal vectors grad_i v, grad_j v.  F_normal: F_B(e_1, e_2) at y - v.
    C_ij: scalar normal curvature (Lambda^2 of the oriented normal plane is one-dimensional);
    it acts on normal vectors as C_ij * rotation by +90 degrees.  B_of(z): the value
    (B(e_1), B(e_2)) of the fibre connection on the normal vector z (already at y - v).
    """
    dv_i = np.asarray(dv_i, float)
    dv_j = np.asarray(dv_j, float)
    cross = dv_i[..., 0] * dv_j[..., 1] - dv_i[..., 1] * dv_j[..., 0]
    B1, B2, z1, z2 = B_of
    Cz1, Cz2 = -C_ij * z2, C_ij * z1
    return cross * F_normal + C_ij + (B1 * Cz1 + B2 * Cz2)


# ------------------------------------------------------------------ residual

def gl_residual(apx: ApproximateSolution, metric: str = "true", X=None) -> GaugePair:
    """(b, h) of the Ginzburg-Landau equations on the free lattice dofs (zero on the boundary)."""
    gl = apx.lattice_gl(metric)
    lat = apx.lattice
    X = apx.X if X is None else X
    a, phi = lat.split(X)
    r = gl.gl_residual(a, phi)
    r[~lat.free_mask] = 0.0
    return GaugePair.from_vector(r, lat, apx.grid, apx.epsilon)


# ------------------------------------------------------------------ weighted norms

@dataclass(frozen=True)
class WeightedNormParams:
    mu: float
    gamma: float
    epsilon: float
    k: int = 0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.mu < 0 or self.epsilon <= 0:
            raise ValueError("mu must be >= 0 and epsilon > 0")

    @classmethod
    def default(cls, profile: VortexProfile, gamma: float = 0.5):
        from .vortex2d import fit_decay_rate
        return cls(0.5 * fit_decay_rate(profile), gamma, profile.epsilon)


def _directions(ndim):
    dirs = [tuple(int(i == k) for i in range(ndim)) for k in range(ndim)]
    for k in range(ndim):
        for l in range(k + 1, ndim):
            for s in (1, -1):
                d = [0] * ndim
                d[k], d[l] = 1, s
                dirs.append(tuple(d))
    return dirs


def _pair_slices(n, off):
    """Slices (p, q) with q = p + off along one axis (non-periodic)."""
    if off >= 0:
        return slice(0, n - off), slice(off, n)
    return slice(-off, n), slice(0, n + off)


def weighted_holder_norm(values, spacing, dist, params: WeightedNormParams, periodic=None) -> float:
    """max(sup e^{mu d/eps} |u|, eps^gamma sup e^{mu (d_p + d_q)/(2 eps)} |u_p - u_q| / |p - q|^gamma).

    values: array on a regular grid (trailing axis = components if values.ndim > dist.ndim).
    spacing: grid spacing per axis.  dist: distance to S at every node.
    Pairs are taken along coordinate lines and face diagonals with |p - q| <= eps.
    """
    u = np.asarray(values)
    dist = np.asarray(dist, float)
    nd = dist.ndim
    if u.ndim == nd:
        u = u[..., None]
    spacing = np.asarray(spacing, float)
    periodic = periodic or [False] * nd
    mu, gam, eps = params.mu, params.gamma, params.epsilon
    w = np.exp(mu * dist / eps)
    sup = float(np.max(w * np.linalg.norm(u, axis=-1)))
    semi = 0.0
    for d in _directions(nd):
        d = np.array(d)
        step = float(np.linalg.norm(d * spacing))
        smax = int(np.floor(eps / step + 1e-12))
        for s in range(1, smax + 1):
            up, uq, dp, dq = u, u, dist, dist
            ok = True
            for ax in range(nd):
                off = s * d[ax]
                if off == 0:
                    continue
                if periodic[ax]:
                    uq = np.roll(uq, -off, axis=ax)
                    dq = np.roll(dq, -off, axis=ax)
                    continue
                n = dist.shape[ax]
                if abs(off) >= n:
                    ok = False
                    break
                sp_, sq = _pair_slices(n, off)
                idx_p = [slice(None)] * nd
                idx_q = [slice(None)] * nd
                idx_p[ax], idx_q[ax] = sp_, sq
                up, uq = up[tuple(idx_p)], uq[tuple(idx_q)]
                dp, dq = dp[tuple(idx_p)], dq[tuple(idx_q)]
            if not ok:
                continue
            diff = np.linalg.norm(up - uq, axis=-1)
            val = np.exp(mu * (dp + dq) / (2 * eps)) * diff / (s * step) ** gam
            semi = max(semi, float(np.max(val)) if val.size else 0.0)
    return max(sup, eps**gam * semi)


def _node_fields(pair: GaugePair, lat: Lattice):
    """Link components averaged onto nodes (mean of the two links meeting there along each axis)."""
    a = pair.a
    out = np.empty_like(a)
    for mu in range(lat.dim):
        prev = np.roll(a[..., mu], 1, axis=mu)
        if not lat.axes[mu].periodic:
            idx = [slice(None)] * lat.dim
            idx[mu] = 0
            prev[tuple(idx)] = a[tuple(idx) + (mu,)]
        out[..., mu] = 0.5 * (a[..., mu] + prev)
    return out


def pair_weighted_norm(pair: GaugePair, lat: Lattice, params: WeightedNormParams, normal_axes=(1, 2)):
    """eps |a| + |f| in the weighted Hoelder norm, distance to S = |y| (Fermi coordinates)."""
    y = lat.node_pos[:, list(normal_axes)].reshape(lat.shape + (len(normal_axes),))
    dist = np.linalg.norm(y, axis=-1)
    spacing = lat.h
    per = [ax.periodic for ax in lat.axes]
    fa = weighted_holder_norm(_node_fields(pair, lat), spacing, dist, params, per)
    f = np.stack([pair.f.real, pair.f.imag], axis=-1)
    ff = weighted_holder_norm(f, spacing, dist, params, per)
    return params.epsilon * fa + ff


def residual_weighted_norm(apx: ApproximateSolution, params: WeightedNormParams | None = None,
                           metric: str = "true") -> float:
    params = params or WeightedNormParams.default(apx.profile)
    return pair_weighted_norm(gl_residual(apx, metric), apx.lattice, params)


# ------------------------------------------------------------------ export

def write_approximate_solution(apx: ApproximateSolution, directory) -> None:
    """One CSV per field component (columns x, y1, y2, value) plus header.json."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    lat = apx.lattice
    a, phi = apx.split()
    pos = lat.node_pos
    cols = {"phi_re": (pos, phi.real), "phi_im": (pos, phi.imag)}
    for mu, name in enumerate(("a_x", "a_y1", "a_y2")):
        sel = lat.link_dir == mu
        cols[name] = (lat.link_start[sel], a[sel])
    for name, (p, val) in cols.items():
        with open(out / f"{name}.csv", "w", newline="\n", encoding="utf-8") as fh:
            fh.write("x,y1,y2,value\n")
            for row, vv in zip(p.tolist(), val.tolist()):
                fh.write(f"{row[0]!r},{row[1]!r},{row[2]!r},{vv!r}\n")
    with open(out / "header.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(apx.header(), fh, indent=2)
        fh.write("\n")
