"""Compact-phase lattice discretisation of the Ginzburg-Landau functional.

phi lives on nodes, the connection on links (A-component a_l, phase theta_l = h_l a_l),
curvature on plaquettes.  With D = d - iA the discrete energy is

    E = sum_p W_p (oriented sum of theta)^2
      + sum_l W_l |exp(-i theta_l) phi(n1) - phi(n0)|^2
      + sum_n W_n (1 - |phi|^2)^2 / (4 eps^2)

and is exactly invariant under lattice gauge transformations
theta_l -> theta_l + chi(n1) - chi(n0), phi -> exp(i chi) phi.  The weights carry a
diagonal metric g = diag(g_0, ..., g_{d-1}) evaluated at node, link and plaquette
centres.

Real layout of a configuration / perturbation vector: [a (links), Re phi, Im phi].
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Axis:
    n: int
    h: float
    origin: float
    periodic: bool = False

    @property
    def coords(self):
        return self.origin + self.h * np.arange(self.n)


class Lattice:
    def __init__(self, axes):
        self.axes = tuple(axes)
        self.dim = len(self.axes)
        self.shape = tuple(ax.n for ax in self.axes)
        self.h = np.array([ax.h for ax in self.axes])
        self.n_nodes = int(np.prod(self.shape))
        self.cell = float(np.prod(self.h))
        idx = np.indices(self.shape).reshape(self.dim, -1).T  # (nN, dim)
        self.node_index = idx
        self.node_pos = np.stack([self.axes[k].origin + self.axes[k].h * idx[:, k]
                                  for k in range(self.dim)], axis=1)

        n0s, n1s, dirs = [], [], []
        self._link_of = []
        for mu, ax in enumerate(self.axes):
            nb = self._shift(mu)
            ok = nb >= 0
            ids = -np.ones(self.n_nodes, dtype=np.int64)
            ids[ok] = np.arange(ok.sum()) + sum(len(x) for x in n0s)
            self._link_of.append(ids)
            n0s.append(np.nonzero(ok)[0])
            n1s.append(nb[ok])
            dirs.append(np.full(ok.sum(), mu))
        self.link_n0 = np.concatenate(n0s)
        self.link_n1 = np.concatenate(n1s)
        self.link_dir = np.concatenate(dirs)
        self.n_links = self.link_n0.size
        self.link_h = self.h[self.link_dir]
        step = np.zeros((self.n_links, self.dim))
        step[np.arange(self.n_links), self.link_dir] = self.link_h
        self.link_start = self.node_pos[self.link_n0]
        self.link_mid = self.link_start + 0.5 * step

        # plaquettes (mu < nu): links (p,mu) + (p+mu,nu) - (p+nu,mu) - (p,nu)
        rows, cols, vals, pdirs, pbase = [], [], [], [], []
        count = 0
        for mu, nu in combinations(range(self.dim), 2):
            pm = self._shift(mu)
            pn = self._shift(nu)
            base = np.nonzero((pm >= 0) & (pn >= 0))[0]
            corner = self._shift(nu)[pm[base]]
            base = base[corner >= 0]
            l1 = self._link_of[mu][base]
            l2 = self._link_of[nu][pm[base]]
            l3 = self._link_of[mu][pn[base]]
            l4 = self._link_of[nu][base]
            k = np.arange(base.size) + count
            for ll, sgn in ((l1, 1.0), (l2, 1.0), (l3, -1.0), (l4, -1.0)):
                rows.append(k)
                cols.append(ll)
                vals.append(np.full(base.size, sgn))
            pdirs.append(np.tile([mu, nu], (base.size, 1)))
            pbase.append(base)
            count += base.size
        self.n_plaq = count
        self.plaq_dirs = np.concatenate(pdirs) if pdirs else np.zeros((0, 2), int)
        self.plaq_base = np.concatenate(pbase) if pbase else np.zeros(0, int)
        sgn = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(self.n_plaq, self.n_links)) if count else sp.csr_matrix((0, self.n_links))
        self.plaq_sign = sgn
        # phase circulation = sign @ (h_l a_l)
        self.curl_phase = sgn @ sp.diags(self.link_h)
        off = np.zeros((self.n_plaq, self.dim))
        if count:
            off[np.arange(count), self.plaq_dirs[:, 0]] = 0.5 * self.h[self.plaq_dirs[:, 0]]
            off[np.arange(count), self.plaq_dirs[:, 1]] += 0.5 * self.h[self.plaq_dirs[:, 1]]
        self.plaq_center = self.node_pos[self.plaq_base] + off if count else np.zeros((0, self.dim))

        # free degrees of freedom: nodes away from non-periodic faces, links touching them
        interior = np.ones(self.n_nodes, dtype=bool)
        for k, ax in enumerate(self.axes):
            if not ax.periodic:
                interior &= (idx[:, k] > 0) & (idx[:, k] < ax.n - 1)
        self.free_nodes = interior
        self.free_links = interior[self.link_n0] | interior[self.link_n1]

    def _shift(self, mu):
        """Flat index of p + e_mu for every node p (or -1 across a non-periodic face)."""
        idx = self.node_index.copy()
        ax = self.axes[mu]
        idx[:, mu] += 1
        out_of = idx[:, mu] >= ax.n
        if ax.periodic:
            idx[:, mu] %= ax.n
            out_of[:] = False
        flat = np.ravel_multi_index(tuple(np.minimum(idx[:, k], self.shape[k] - 1)
                                          for k in range(self.dim)), self.shape)
        flat[out_of] = -1
        return flat

    def link_id(self, mu):
        """Array over nodes: index of the link leaving that node in direction mu (or -1)."""
        return self._link_of[mu]

    @property
    def free_mask(self):
        return np.concatenate([self.free_links, self.free_nodes, self.free_nodes])

    @property
    def n_real(self):
        return self.n_links + 2 * self.n_nodes

    def split(self, X):
        L, N = self.n_links, self.n_nodes
        return X[:L], X[L:L + N] + 1j * X[L + N:]

    @staticmethod
    def join(a, phi):
        return np.concatenate([a, phi.real, phi.imag])


def _cplx_block(rows_re, rows_im, cols_re, cols_im, c):
    """COO triplets of the real 2x2 matrix of multiplication by complex c."""
    r = np.concatenate([rows_re, rows_re, rows_im, rows_im])
    k = np.concatenate([cols_re, cols_im, cols_re, cols_im])
    v = np.concatenate([c.real, -c.imag, c.imag, c.real])
    return r, k, v


class LatticeGL:
    """Energy, gradient, Hessian and gauge maps of the lattice functional at fixed eps.

    metric: callable mapping an (m, dim) array of coordinates to the (m, dim) array of
    diagonal metric coefficients; None means Euclidean.
    """

    def __init__(self, lattice: Lattice, epsilon: float, metric=None):
        self.lat = lat = lattice
        self.eps = float(epsilon)
        eps = self.eps

        def diag(points):
            if metric is None:
                return np.ones_like(points)
            return np.asarray(metric(points), float)

        gn = diag(lat.node_pos)
        gl = diag(lat.link_mid)
        gp = diag(lat.plaq_center) if lat.n_plaq else np.zeros((0, lat.dim))
        self.vol_node = np.sqrt(np.prod(gn, axis=1)) * lat.cell
        vol_link = np.sqrt(np.prod(gl, axis=1)) * lat.cell
        ginv_link = 1.0 / gl[np.arange(lat.n_links), lat.link_dir]
        self.W_node = self.vol_node
        self.W_link = vol_link * ginv_link / lat.link_h**2
        if lat.n_plaq:
            mu, nu = lat.plaq_dirs[:, 0], lat.plaq_dirs[:, 1]
            rows = np.arange(lat.n_plaq)
            vol_p = np.sqrt(np.prod(gp, axis=1)) * lat.cell
            self.W_plaq = eps**2 * vol_p / (gp[rows, mu] * gp[rows, nu] * (lat.h[mu] * lat.h[nu]) ** 2)
        else:
            self.W_plaq = np.zeros(0)
        # inner product <(a,f),(b,g)> = sum eps^2 g^{ll} vol a b + sum vol Re(conj f g)
        self.mass_link = eps**2 * vol_link * ginv_link
        self.mass = np.concatenate([self.mass_link, self.vol_node, self.vol_node])
        self.metric_node = gn

    # ------------------------------------------------------------ energy
    def _link_terms(self, a, phi):
        lat = self.lat
        th = lat.link_h * a
        p0 = phi[lat.link_n0]
        p1 = phi[lat.link_n1]
        u = np.exp(-1j * th) * p1
        return th, p0, p1, u

    def energy_parts(self, a, phi):
        lat, eps = self.lat, self.eps
        circ = lat.curl_phase @ a
        e_mag = np.sum(self.W_plaq * circ**2)
        _, p0, _, u = self._link_terms(a, phi)
        e_kin = np.sum(self.W_link * np.abs(u - p0) ** 2)
        e_pot = np.sum(self.W_node * (1 - np.abs(phi) ** 2) ** 2) / (4 * eps**2)
        return e_mag, e_kin, e_pot

    def energy(self, a, phi):
        return float(sum(self.energy_parts(a, phi)))

    def gradient(self, a, phi):
        """Euclidean gradient in the real layout."""
        lat, eps = self.lat, self.eps
        circ = lat.curl_phase @ a
        ga = 2 * (lat.curl_phase.T @ (self.W_plaq * circ))
        th, p0, p1, u = self._link_terms(a, phi)
        z = np.conj(p0) * u
        ga = ga - 2 * self.W_link * lat.link_h * z.imag
        gphi = np.zeros(lat.n_nodes, complex)
        np.add.at(gphi, lat.link_n0, 2 * self.W_link * (p0 - u))
        np.add.at(gphi, lat.link_n1, 2 * self.W_link * (p1 - np.exp(1j * th) * p0))
        gphi -= self.W_node * (1 - np.abs(phi) ** 2) * phi / eps**2
        return np.concatenate([ga, gphi.real, gphi.imag])

    def hessian(self, a, phi):
        """Euclidean Hessian (sparse, symmetric) in the real layout."""
        lat, eps = self.lat, self.eps
        L, N = lat.n_links, lat.n_nodes
        R0, I0 = L, L + N  # offsets of Re / Im blocks
        H_aa = 2 * (lat.curl_phase.T @ sp.diags(self.W_plaq) @ lat.curl_phase)

        th, p0, p1, u = self._link_terms(a, phi)
        Wl, hl = self.W_link, lat.link_h
        z = np.conj(p0) * u
        lid = np.arange(L)
        rows, cols, vals = [lid], [lid], [2 * Wl * hl**2 * z.real]
        n0, n1 = lat.link_n0, lat.link_n1
        # phi-phi: diagonal 2W on both ends, off-diagonal multiplication by -2W e^{-i theta}
        for n in (n0, n1):
            rows += [R0 + n, I0 + n]
            cols += [R0 + n, I0 + n]
            vals += [2 * Wl, 2 * Wl]
        c = -2 * Wl * np.exp(-1j * th)
        r, k, v = _cplx_block(R0 + n0, I0 + n0, R0 + n1, I0 + n1, c)
        r2, k2, v2 = _cplx_block(R0 + n1, I0 + n1, R0 + n0, I0 + n0, np.conj(c))
        rows += [r, r2]
        cols += [k, k2]
        vals += [v, v2]
        # a-phi couplings
        v0 = 2j * Wl * hl * u
        v1 = -2j * Wl * hl * np.exp(1j * th) * p0
        for n, vv in ((n0, v0), (n1, v1)):
            rows += [R0 + n, I0 + n, lid, lid]
            cols += [lid, lid, R0 + n, I0 + n]
            vals += [vv.real, vv.imag, vv.real, vv.imag]
        # potential
        nid = np.arange(N)
        s = 1 - np.abs(phi) ** 2
        cW = -self.W_node / eps**2
        pr, pi = phi.real, phi.imag
        rows += [R0 + nid, I0 + nid, R0 + nid, I0 + nid]
        cols += [R0 + nid, I0 + nid, I0 + nid, R0 + nid]
        vals += [cW * (s - 2 * pr * pr), cW * (s - 2 * pi * pi), cW * (-2 * pr * pi), cW * (-2 * pr * pi)]
        H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(lat.n_real, lat.n_real)).tocsr()
        H = H + sp.block_diag([H_aa, sp.csr_matrix((2 * N, 2 * N))], format="csr")
        return H

    # ------------------------------------------------------------ derived maps
    def gl_residual(self, a, phi):
        """(b, h) = half the gradient measured in the weighted inner product."""
        return 0.5 * self.gradient(a, phi) / self.mass

    def gauge_map(self, phi):
        """T: chi (real, nodes) -> (d chi / eps, i phi chi / eps) as a sparse matrix."""
        lat, eps = self.lat, self.eps
        L, N = lat.n_links, lat.n_nodes
        lid = np.arange(L)
        nid = np.arange(N)
        rows = np.concatenate([lid, lid, L + nid, L + N + nid])
        cols = np.concatenate([lat.link_n1, lat.link_n0, nid, nid])
        vals = np.concatenate([1 / (lat.link_h * eps), -1 / (lat.link_h * eps),
                               -phi.imag / eps, phi.real / eps])
        return sp.csr_matrix((vals, (rows, cols)), shape=(lat.n_real, N))

    def gauge_adjoint(self, phi):
        """T* with respect to the weighted inner products (pairs: mass, scalars: vol)."""
        T = self.gauge_map(phi)
        return sp.diags(1 / self.vol_node) @ T.T @ sp.diags(self.mass)

    def inner(self, X, Y):
        return float(np.dot(self.mass * X, Y))

    # ------------------------------------------------------------ gauge-fixed system
    def augmented(self, X0, dX, free=None, jacobian=True):
        """Residual and Jacobian of  GL(X0 + dX) + T_{phi~} T*_{phi0} dX  in energy form.

        Energy form means multiplied by the mass matrix, so the Jacobian at dX = 0 is the
        symmetric matrix M (L + T T*).  Rows and columns are restricted to `free`.
        """
        lat = self.lat
        X = X0 + dX
        a, phi = lat.split(X)
        phi0 = lat.split(X0)[1]
        T0 = self.gauge_map(phi0)
        Tt = self.gauge_map(phi)
        # u lives on free nodes only: there T^T (M T u) = 0 forces u = 0 at any solution
        u = np.where(lat.free_nodes, (T0.T @ (self.mass * dX)) / self.vol_node, 0.0)
        R = 0.5 * self.gradient(a, phi) + self.mass * (Tt @ u)
        if free is None:
            free = np.ones(lat.n_real, bool)
        if not jacobian:
            return R[free], u
        MT = sp.diags(self.mass) @ Tt
        MT0 = sp.diags(self.mass) @ T0
        N, L = lat.n_nodes, lat.n_links
        nid = np.arange(N)
        du = sp.csr_matrix((np.concatenate([-u, u]) / self.eps,
                            (np.concatenate([L + nid, L + N + nid]), np.concatenate([L + N + nid, L + nid]))),
                           shape=(lat.n_real, lat.n_real))
        J = (0.5 * self.hessian(a, phi) + MT @ sp.diags(lat.free_nodes / self.vol_node) @ MT0.T
             + sp.diags(self.mass) @ du)
        J = J.tocsr()[free][:, free]
        return R[free], u, J
