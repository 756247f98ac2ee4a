"""Radially symmetric degree-one vortex of the first order (Bogomol'nyi) system.

With psi = f(r) e^{i theta} and connection A = a(r) d theta (real form, D = d - iA)
the vortex equations reduce to

    f' = f (1 - a) / r,        a' = r (1 - f^2) / (2 eps^2).

The solver works with w = log(f / r), which removes the regular singular point
at the origin:  w' = -a / r,  f = r e^w.  Boundary conditions are a(0) = 0 and the
far-field condition at R: linearising about f = a = 1 gives 1 - f = c K0(r/eps) and
1 - a = (r/eps) c K1(r/eps), so

    1 - a(R) = (R/eps) K1(R/eps) / K0(R/eps) (1 - f(R)).

f(0) = 0 holds by construction.  Energy and flux add the same Bessel tails beyond R.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.special import k0e, k1e
from scipy.sparse.linalg import spsolve

from .errors import GridTooCoarse, NonConvergence, OutOfDomain

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class VortexProfile:
    epsilon: float
    r_grid: np.ndarray
    f: np.ndarray
    a: np.ndarray
    w: np.ndarray = field(repr=False)
    residual: float = 0.0
    iterations: int = 0

    @property
    def r_max(self) -> float:
        return float(self.r_grid[-1])

    @property
    def slope(self) -> float:
        """beta = lim f(r)/r at the origin."""
        return float(np.exp(self.w[0]))

    def splines(self):
        return _profile_splines(self)


@dataclass(frozen=True)
class FieldSample:
    psi: complex
    F: float
    Dpsi: tuple


def _check_grid(eps, r):
    if r[-1] < 10 * eps * (1 - 1e-12):
        raise GridTooCoarse(f"R_max={r[-1]:g} < 10*eps={10 * eps:g}")
    hmax = np.max(np.diff(r))
    if hmax > eps / 10 * (1 + 1e-9):
        raise GridTooCoarse(f"grid spacing {hmax:g} exceeds eps/10={eps / 10:g}")


def _residual(r, w, a, eps):
    h = np.diff(r)
    q = np.empty_like(a)
    q[0] = 0.0
    q[1:] = a[1:] / r[1:]
    p = r * (1.0 - (r * np.exp(w)) ** 2) / (2 * eps**2)
    rw = (w[1:] - w[:-1]) / h + 0.5 * (q[1:] + q[:-1])
    ra = (a[1:] - a[:-1]) / h - 0.5 * (p[1:] + p[:-1])
    return rw, ra


def _jacobian(r, w, a, eps):
    n = r.size
    m = n - 1
    h = np.diff(r)
    k = np.arange(m)
    # unknown ordering: [w_0..w_{n-1}, a_0..a_{n-1}]
    dq = np.zeros(n)
    dq[1:] = 1.0 / r[1:]
    dp = -r * (r * np.exp(w)) ** 2 / eps**2
    blocks = [
        (k, k, -1.0 / h), (k, k + 1, 1.0 / h),
        (k, n + k, 0.5 * dq[:-1]), (k, n + k + 1, 0.5 * dq[1:]),
        (m + k, n + k, -1.0 / h), (m + k, n + k + 1, 1.0 / h),
        (m + k, k, -0.5 * dp[:-1]), (m + k, k + 1, -0.5 * dp[1:]),
        ([2 * m], [n], [1.0]),
        ([2 * m + 1, 2 * m + 1], [n - 1, 2 * n - 1],
         [_far_ratio(r[-1], eps) * r[-1] * np.exp(w[-1]), -1.0]),
    ]
    rows = np.concatenate([np.asarray(b[0]) for b in blocks])
    cols = np.concatenate([np.asarray(b[1]) for b in blocks])
    vals = np.concatenate([np.asarray(b[2], float) for b in blocks])
    return sp.csc_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n))


def _far_ratio(R, eps):
    """(1 - a) / (1 - f) of the decaying linearised solution at r = R."""
    s = R / eps
    return s * k1e(s) / k0e(s)


def _full_residual(r, w, a, eps):
    rw, ra = _residual(r, w, a, eps)
    far = (1.0 - a[-1]) - _far_ratio(r[-1], eps) * (1.0 - r[-1] * np.exp(w[-1]))
    return np.concatenate([rw, ra, [a[0], far]])


def solve_vortex_profile(epsilon: float, R_max: float, n_nodes: int,
                         tol: float = 1e-12, max_iter: int = 60) -> VortexProfile:
    """Damped Newton on the trapezoidal box scheme for (w, a)."""
    eps = float(epsilon)
    if eps <= 0 or n_nodes < 2:
        raise ValueError("need epsilon > 0 and n_nodes >= 2")
    r = np.linspace(0.0, float(R_max), int(n_nodes))
    _check_grid(eps, r)
    s = r / eps
    # tanh seeds: f ~ tanh(s), a ~ tanh(s/2)^2 matches a ~ r^2/(4 eps^2) at the core
    with np.errstate(divide="ignore"):
        w = np.where(s > 0, np.log(np.tanh(s) / np.where(r > 0, r, 1.0)), -np.log(eps))
    a = np.tanh(s / 2) ** 2
    a[0] = 0.0

    res = _full_residual(r, w, a, eps)
    nrm = np.max(np.abs(res)) * eps
    it = 0
    for it in range(1, max_iter + 1):
        J = _jacobian(r, w, a, eps)
        dx = spsolve(J, -res)
        n = r.size
        step = 1.0
        while True:
            w_new = w + step * dx[:n]
            a_new = a + step * dx[n:]
            res_new = _full_residual(r, w_new, a_new, eps)
            nrm_new = np.max(np.abs(res_new)) * eps
            if np.isfinite(nrm_new) and (nrm_new < nrm or nrm_new < tol):
                break
            step *= 0.5
            if step < 1e-6:
                raise NonConvergence(f"line search stalled at iteration {it}, residual {nrm:.3e}")
        w, a, res, nrm = w_new, a_new, res_new, nrm_new
        if nrm < tol:
            break
    else:
        raise NonConvergence(f"no convergence after {max_iter} iterations, residual {nrm:.3e}")

    a[0] = 0.0  # boundary condition, exact rather than to solver tolerance
    f = r * np.exp(w)
    return VortexProfile(eps, r, f, a, w, residual=float(nrm), iterations=it)


def ode_residual(profile: VortexProfile) -> float:
    """Max scaled residual of the discrete first-order system (interior intervals)."""
    rw, ra = _residual(profile.r_grid, profile.w, profile.a, profile.epsilon)
    return float(profile.epsilon * max(np.max(np.abs(rw)), np.max(np.abs(ra))))


# ---------------------------------------------------------------- fields

def _profile_splines(profile):
    r, eps = profile.r_grid, profile.epsilon
    q = np.empty_like(r)
    q[1:] = profile.a[1:] / r[1:] ** 2
    q[0] = 1.0 / (4 * eps**2)
    g = np.exp(profile.w)
    # both f/r and a/r^2 are even in r, so the slope vanishes at the origin
    gs = CubicSpline(r, g, bc_type=((1, 0.0), "not-a-knot"))
    qs = CubicSpline(r, q, bc_type=((1, 0.0), "not-a-knot"))
    return gs, qs


class VortexField:
    """Cartesian (smooth gauge) evaluation of the vortex centred at the origin.

    psi = g(r) (y1 + i y2) with g = f/r, A = q(r) (-y2, y1) with q = a/r^2.
    """

    def __init__(self, profile: VortexProfile):
        self.profile = profile
        self.eps = profile.epsilon
        self._g, self._q = _profile_splines(profile)
        self.r_max = profile.r_max

    def _radial(self, r):
        r = np.asarray(r, dtype=float)
        inside = r <= self.r_max
        rc = np.minimum(r, self.r_max)
        g = self._g(rc)
        q = self._q(rc)
        # beyond the grid: |psi| = 1 and a = 1 (pure gauge far field)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(inside, g, 1.0 / np.where(r > 0, r, 1.0))
            q = np.where(inside, q, 1.0 / np.where(r > 0, r, 1.0) ** 2)
        return g, q

    def psi(self, y1, y2):
        g, _ = self._radial(np.hypot(y1, y2))
        return g * (y1 + 1j * y2)

    def gauge(self, y1, y2):
        _, q = self._radial(np.hypot(y1, y2))
        return -q * y2, q * y1

    def modulus_sq(self, y1, y2):
        r = np.hypot(y1, y2)
        g, _ = self._radial(r)
        return (g * r) ** 2

    def curvature(self, y1, y2):
        """F = dA(e1, e2) = (1 - |psi|^2) / (2 eps^2)."""
        return (1.0 - self.modulus_sq(y1, y2)) / (2 * self.eps**2)

    def covariant(self, y1, y2):
        """(D_1 psi, D_2 psi); holomorphy gives D_2 psi = i D_1 psi = i g (1 - a)."""
        r = np.hypot(y1, y2)
        g, q = self._radial(r)
        d1 = g * (1.0 - q * r**2) + 0j
        return d1, 1j * d1

    def line_integral(self, p0, p1, nodes: int = 4):
        """Integral of A along straight segments p0 -> p1 (arrays of shape (..., 2))."""
        p0 = np.asarray(p0, float)
        p1 = np.asarray(p1, float)
        t, wts = np.polynomial.legendre.leggauss(nodes)
        t = 0.5 * (t + 1)
        wts = 0.5 * wts
        d = p1 - p0
        out = 0.0
        for tk, wk in zip(t, wts):
            p = p0 + tk * d
            A1, A2 = self.gauge(p[..., 0], p[..., 1])
            out = out + wk * (A1 * d[..., 0] + A2 * d[..., 1])
        return out


def evaluate_vortex_fields(profile: VortexProfile, points) -> list[FieldSample]:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.hypot(pts[:, 0], pts[:, 1])
    if np.any(r > profile.r_max * (1 + 1e-12)):
        raise OutOfDomain(f"point at |y|={r.max():g} outside R_max={profile.r_max:g}")
    vf = VortexField(profile)
    psi = vf.psi(pts[:, 0], pts[:, 1])
    F = vf.curvature(pts[:, 0], pts[:, 1])
    d1, d2 = vf.covariant(pts[:, 0], pts[:, 1])
    return [FieldSample(complex(psi[k]), float(F[k]), (complex(d1[k]), complex(d2[k])))
            for k in range(len(pts))]


# ---------------------------------------------------------------- integrals

def _densities(profile):
    r, f, a, eps = profile.r_grid, profile.f, profile.a, profile.epsilon
    F = (1 - f**2) / (2 * eps**2)
    g = np.exp(profile.w)
    fp = g * (1 - a)  # f' = f (1 - a) / r
    dpsi_sq = fp**2 + (g * (1 - a)) ** 2
    pot = (1 - f**2) ** 2 / (4 * eps**2)
    return F, dpsi_sq, pot


def energy_density(profile: VortexProfile) -> np.ndarray:
    F, dpsi_sq, pot = _densities(profile)
    return profile.epsilon**2 * F**2 + dpsi_sq + pot


def far_field_tail(profile: VortexProfile) -> tuple[float, float]:
    """Energy and flux outside the disc of radius R_max from the linearised far field.

    With 1 - f = c K0(r/eps): F = c K0 / eps^2 and f' = c K1 / eps, and on a vortex the
    energy density is 2 (eps^2 F^2 + f'^2) to second order in c.
    """
    eps, R = profile.epsilon, profile.r_max
    s0 = R / eps
    c = (1.0 - profile.f[-1]) / (k0e(s0) * np.exp(-s0))
    flux = TWO_PI * (1.0 - profile.a[-1])

    def integrand(s):  # in units s = r / eps, the factor exp(-2 s) taken out of k0e, k1e
        return 2 * (k0e(s) ** 2 + k1e(s) ** 2) * s * np.exp(-2 * (s - s0))

    energy = TWO_PI * c**2 * np.exp(-2 * s0) * quad(integrand, s0, np.inf)[0]
    return float(energy), float(flux)


def vortex_energy_flux(profile: VortexProfile, tail: bool = True) -> tuple[float, float]:
    """Energy and flux over the plane (disc quadrature plus the far-field tail)."""
    r = profile.r_grid
    F, _, _ = _densities(profile)
    e = energy_density(profile)
    energy = np.trapezoid(e * TWO_PI * r, r)
    flux = np.trapezoid(F * TWO_PI * r, r)
    if tail:
        te, tf = far_field_tail(profile)
        energy, flux = energy + te, flux + tf
    return float(energy), float(flux)


def energy_radius(profile: VortexProfile, fraction: float = 0.9) -> float:
    """Radius of the disc carrying the given fraction of the vortex energy."""
    r = profile.r_grid
    e = energy_density(profile) * TWO_PI * r
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (e[1:] + e[:-1]) * np.diff(r))])
    return float(np.interp(fraction * cum[-1], cum, r))


@dataclass
class IdentityReport:
    squared_identity: float
    first_equation: float
    second_equation: float

    @property
    def max(self):
        return max(self.squared_identity, self.first_equation, self.second_equation)


def identity_terms(profile: VortexProfile):
    """Curvature and potential terms at the collocation points (interval midpoints).

    eps*F is taken from the discrete derivative of a; the potential side is the
    r-weighted average of (1 - f^2)/(2 eps) that the box scheme collocates.
    """
    r, f, a, eps = profile.r_grid, profile.f, profile.a, profile.epsilon
    h = np.diff(r)
    rbar = 0.5 * (r[1:] + r[:-1])
    u = (1 - f**2) / (2 * eps)
    U = (r[1:] * u[1:] + r[:-1] * u[:-1]) / (2 * rbar)
    epsF = eps * (a[1:] - a[:-1]) / (h * rbar)
    return epsF, U


def check_vortex_identity(profile: VortexProfile) -> IdentityReport:
    """Max residuals of eps^2 F^2 = (1-|psi|^2)^2/(4 eps^2) and of both vortex equations."""
    epsF, U = identity_terms(profile)
    rw, _ = _residual(profile.r_grid, profile.w, profile.a, profile.epsilon)
    return IdentityReport(float(np.max(np.abs(epsF**2 - U**2))),
                          float(np.max(np.abs(epsF - U))),
                          float(profile.epsilon * np.max(np.abs(rw))))


def fit_decay_rate(profile: VortexProfile, r_min_factor: float = 8.0) -> float:
    """Rate mu (per unit r/eps) of a log-linear fit of 1 - f^2 over [8 eps, R_max].

    Nodes where 1 - f^2 has reached the rounding floor are dropped, which removes
    the pinned endpoint f(R_max) = 1.
    """
    r, f, eps = profile.r_grid, profile.f, profile.epsilon
    tail = 1.0 - f**2
    m = (r >= r_min_factor * eps) & (tail > 1e-13)
    if m.sum() < 3:
        raise NonConvergence("not enough tail nodes for a decay fit")
    slope = np.polyfit(r[m] / eps, np.log(tail[m]), 1)[0]
    return float(-slope)


def write_profile_csv(profile: VortexProfile, path) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["r", "f", "a"])
        for r, f, a in zip(profile.r_grid, profile.f, profile.a):
            wr.writerow([repr(float(r)), repr(float(f)), repr(float(a))])


def read_profile_csv(path, epsilon: float) -> VortexProfile:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    r, f, a = data[:, 0], data[:, 1], data[:, 2]
    w = np.empty_like(r)
    w[1:] = np.log(f[1:] / r[1:])
    # f/r at the origin from the quadratic Taylor fit through the first nodes
    w[0] = w[1] - (w[2] - w[1]) * (r[1] ** 2) / (r[2] ** 2 - r[1] ** 2)
    prof = VortexProfile(float(epsilon), r, f, a, w)
    return VortexProfile(float(epsilon), r, f, a, w, residual=ode_residual(prof))
