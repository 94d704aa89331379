"""Flat connection on the extended bundle TM + R^3.

The bundle frame is e = (d_1, ..., d_n, xi, xi1, xi2) with fiber metric
G = blockdiag(g, 1, 1, -1).  The connection is encoded per coordinate
direction i as a matrix A_i with D_i e_b = A_i[a, b] e_a, so a section with
component vector c is parallel along a curve gamma iff

    dc/dt = -(sum_i gamma'_i A_i(gamma(t))) c.

Admissible structures make this connection flat and metric; transport is a
fixed-step RK4 integration of the matrix ODE along polyline paths.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry as geo

DEFAULT_STEP = 1e-3


class BundleError(Exception):
    pass


def assemble_coefficients(g, gamma, S, f, u):
    """Connection matrices A_i, one per coordinate direction."""
    n = g.shape[0]
    N = n + 3
    gS = g @ S
    gf = g @ f
    eye = np.eye(n)
    A = np.zeros((n, N, N))
    for i in range(n):
        A[i, :n, :n] = gamma[:, i, :]
        A[i, n, :n] = gS[:, i]                       # g(S d_i, d_j)
        A[i, n + 1, :n] = -0.5 * (g[i, :] + gf[:, i])
        A[i, n + 2, :n] = 0.5 * (g[i, :] - gf[:, i])
        A[i, :n, n] = -S[:, i]
        A[i, n + 1, n] = -0.5 * u[i]
        A[i, n + 2, n] = -0.5 * u[i]
        A[i, :n, n + 1] = 0.5 * (eye[:, i] + f[:, i])
        A[i, n, n + 1] = 0.5 * u[i]
        A[i, :n, n + 2] = 0.5 * (eye[:, i] - f[:, i])
        A[i, n, n + 2] = -0.5 * u[i]
    return A


def assemble_gram(g):
    n = g.shape[0]
    G = np.zeros((n + 3, n + 3))
    G[:n, :n] = g
    G[n, n] = 1.0
    G[n + 1, n + 1] = 1.0
    G[n + 2, n + 2] = -1.0
    return G


def assemble_bundle_map(f, U, u, lam):
    """Frame matrix of F: FX = fX + u(X) xi, F xi = U + lam xi, F xi_1,2 = +-xi_1,2."""
    n = f.shape[0]
    N = n + 3
    F = np.zeros((N, N))
    F[:n, :n] = f
    F[n, :n] = u
    F[:n, n] = U
    F[n, n] = lam
    F[n + 1, n + 1] = 1.0
    F[n + 2, n + 2] = -1.0
    return F


class ConnectionField:
    """Connection, Gram and product-structure data derived from a structure."""

    def __init__(self, spec):
        self.spec = spec
        self.n = spec.n

    @property
    def fiber_dim(self):
        return self.n + 3

    def coefficients(self, point):
        g, gamma, S, f, u = self.spec.connection_data_at(point)
        return assemble_coefficients(g, gamma, S, f, u)

    def gram(self, point):
        g, *_ = self.spec.connection_data_at(point)
        return assemble_gram(g)

    def gram_derivatives(self, point, ev=None):
        ev = ev or self.spec.eval_at(point)
        n = self.n
        dG = np.zeros((n, n + 3, n + 3))
        dG[:, :n, :n] = ev.calc.dg
        return dG

    def bundle_map(self, point, ev=None):
        ev = ev or self.spec.eval_at(point)
        return assemble_bundle_map(ev.f, ev.U, ev.u, ev.lam)

    def coefficient_derivatives(self, point, ev=None):
        """dA[p, i] = d_p A_i via the product rule on exact field derivatives."""
        ev = ev or self.spec.eval_at(point)
        n = self.n
        N = n + 3
        calc = ev.calc
        g, dg = calc.g, calc.dg
        S, dS, f, df, U, dU = ev.S, ev.dS, ev.f, ev.df, ev.U, ev.dU
        u = ev.u
        du = np.array([dg[p] @ U + g @ dU[p] for p in range(n)])
        dgS = np.array([dg[p] @ S + g @ dS[p] for p in range(n)])
        dgf = np.array([dg[p] @ f + g @ df[p] for p in range(n)])
        dA = np.zeros((n, n, N, N))
        for p in range(n):
            for i in range(n):
                dA[p, i, :n, :n] = calc.dgamma[p, :, i, :]
                dA[p, i, n, :n] = dgS[p, :, i]
                dA[p, i, n + 1, :n] = -0.5 * (dg[p, i, :] + dgf[p, :, i])
                dA[p, i, n + 2, :n] = 0.5 * (dg[p, i, :] - dgf[p, :, i])
                dA[p, i, :n, n] = -dS[p, :, i]
                dA[p, i, n + 1, n] = -0.5 * du[p, i]
                dA[p, i, n + 2, n] = -0.5 * du[p, i]
                dA[p, i, :n, n + 1] = 0.5 * df[p, :, i]
                dA[p, i, n, n + 1] = 0.5 * du[p, i]
                dA[p, i, :n, n + 2] = -0.5 * df[p, :, i]
                dA[p, i, n, n + 2] = -0.5 * du[p, i]
        return dA

    def flatness_residual(self, point, ev=None):
        """sup_{i<j} max-entry of d_i A_j - d_j A_i + [A_i, A_j]."""
        ev = ev or self.spec.eval_at(point)
        A = assemble_coefficients(ev.g, ev.calc.gamma, ev.S, ev.f, ev.u)
        dA = self.coefficient_derivatives(point, ev)
        worst = 0.0
        for i in range(self.n):
            for j in range(i + 1, self.n):
                R = dA[i, j] - dA[j, i] + A[i] @ A[j] - A[j] @ A[i]
                worst = max(worst, float(np.abs(R).max()))
        return worst

    def metric_residual(self, point, ev=None):
        """Compatibility of D with the fiber metric: d_i G = A_i^T G + G A_i."""
        ev = ev or self.spec.eval_at(point)
        A = assemble_coefficients(ev.g, ev.calc.gamma, ev.S, ev.f, ev.u)
        G = assemble_gram(ev.g)
        dG = self.gram_derivatives(point, ev)
        worst = 0.0
        for i in range(self.n):
            worst = max(worst, float(np.abs(dG[i] - A[i].T @ G - G @ A[i]).max()))
        return worst

    def parallel_map_residual(self, point, ev=None):
        """Residual of D F = 0: d_i F + [A_i, F] per direction."""
        ev = ev or self.spec.eval_at(point)
        n = self.n
        calc = ev.calc
        A = assemble_coefficients(ev.g, calc.gamma, ev.S, ev.f, ev.u)
        F = assemble_bundle_map(ev.f, ev.U, ev.u, ev.lam)
        du = np.array([calc.dg[p] @ ev.U + ev.g @ ev.dU[p] for p in range(n)])
        worst = 0.0
        for i in range(n):
            dF = np.zeros_like(F)
            dF[:n, :n] = ev.df[i]
            dF[n, :n] = du[i]
            dF[:n, n] = ev.dU[i]
            dF[n, n] = float(ev.dlam[i])
            worst = max(worst, float(np.abs(dF + A[i] @ F - F @ A[i]).max()))
        return worst

    # -- transport ----------------------------------------------------------

    def transport_segment(self, p0, p1, M, step=DEFAULT_STEP):
        """RK4 transport of component matrix M along the straight segment."""
        p0 = np.asarray(p0, dtype=float)
        p1 = np.asarray(p1, dtype=float)
        delta = p1 - p0
        length = float(np.linalg.norm(delta))
        if length == 0.0:
            return M.copy()
        steps = max(1, int(np.ceil(length / step)))
        h = 1.0 / steps
        M = np.array(M, dtype=float)

        def B(t):
            A = self.coefficients(p0 + t * delta)
            return -np.einsum("i,iab->ab", delta, A)

        for s in range(steps):
            t = s * h
            B1 = B(t)
            B2 = B(t + 0.5 * h)     # shared by the two midpoint stages
            k1 = B1 @ M
            k2 = B2 @ (M + 0.5 * h * k1)
            k3 = B2 @ (M + 0.5 * h * k2)
            k4 = B(t + h) @ (M + h * k3)
            M = M + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return M

    def transport(self, waypoints, M=None, step=DEFAULT_STEP):
        """Transport along a polyline of waypoints (chart points)."""
        waypoints = [np.asarray(p, dtype=float) for p in waypoints]
        if len(waypoints) < 1:
            raise BundleError("empty path")
        if M is None:
            M = np.eye(self.fiber_dim)
        for a, b in zip(waypoints[:-1], waypoints[1:]):
            M = self.transport_segment(a, b, M, step=step)
        return M

    def gram_drift(self, waypoints, step=DEFAULT_STEP):
        """Deviation of M^T G(end) M from G(start) after transport."""
        M = self.transport(waypoints, step=step)
        G0 = self.gram(waypoints[0])
        G1 = self.gram(waypoints[-1])
        return float(np.abs(M.T @ G1 @ M - G0).max())


def staircase_path(p0, p1):
    """Axis-ordered polyline from p0 to p1 (change coordinate 0 first)."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    points = [p0.copy()]
    cur = p0.copy()
    for i in range(len(p0)):
        if cur[i] != p1[i]:
            cur = cur.copy()
            cur[i] = p1[i]
            points.append(cur)
    return [tuple(p) for p in points]


def rectangle_loop(p0, p1):
    """Closed axis-aligned loop through opposite corners p0 and p1 (2D)."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if len(p0) != 2:
        raise BundleError("rectangle loops need a 2-dimensional chart")
    a = (p0[0], p0[1])
    b = (p1[0], p0[1])
    c = (p1[0], p1[1])
    d = (p0[0], p1[1])
    return [a, b, c, d, a]


def holonomy_defect(conn, loop, step=DEFAULT_STEP):
    """Distance of the loop transport from the identity."""
    M = conn.transport(loop, step=step)
    return float(np.abs(M - np.eye(conn.fiber_dim)).max())
