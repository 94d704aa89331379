"""Reconstruction of the immersion from an admissible structure.

A parallel frame (eta_1, ..., eta_{n+3}) of the extended bundle, adapted to
the product structure F (first k+1 sections in the +1 eigenspace, the rest
in the -1 eigenspace, G-orthonormal with the last section timelike), turns
the flat bundle into a copy of Minkowski space.  The immersion is

    psi_a(p) = eps_a * G(w(p), eta_a(p)),   w = xi1 (sphere slots)
                                            w = xi2 (hyperbolic slots),

with eps = (1, ..., 1, -1); its differential is psi_* v = eps * G(v, eta)
and the image unit normal is N = eps * G(xi, eta).  Frame components are
obtained by parallel transport along staircase paths from the base point,
with shared path prefixes cached for grid sweeps.
"""

from dataclasses import dataclass, field

import numpy as np

from . import bundle as bd
from . import geometry as geo
from . import structure as st
from .ambient import AmbientModel
from .runtime import map_ordered


class ReconstructionError(Exception):
    pass


@dataclass
class ImmersionSample:
    point: tuple
    psi: np.ndarray       # position in L^(n+3)
    normal: np.ndarray    # unit normal, tangent to the model
    dpsi: np.ndarray      # (n+3) x n pushforward of the coordinate basis
    residuals: dict = field(default_factory=dict)


def _gram_schmidt(vectors, G):
    """G-orthonormalize (G positive definite on the span), dropping defects."""
    out = []
    for v in vectors:
        w = np.array(v, dtype=float)
        for b in out:
            w = w - float(b @ G @ w) * b
        norm2 = float(w @ G @ w)
        if norm2 > 1e-18:
            out.append(w / np.sqrt(norm2))
    return out


def synthesize_frame(ev, k):
    """Adapted G-orthonormal base frame, columns ordered (+1 block, -1 block).

    xi1 and xi2 are exact eigenvectors of F (F xi1 = xi1, F xi2 = -xi2), so
    they seed the two blocks; xi2 is kept as the final, timelike section,
    which puts the reconstructed base point on the upper hyperboloid sheet.
    """
    n = ev.S.shape[0]
    N = n + 3
    F = bd.assemble_bundle_map(ev.f, ev.U, ev.u, ev.lam)
    G = bd.assemble_gram(ev.g)
    eye = np.eye(N)
    plus_candidates = [eye[:, N - 2]] + [0.5 * (eye[:, a] + F[:, a])
                                         for a in range(N)]
    plus = _gram_schmidt(plus_candidates, G)
    if len(plus) != k + 1:
        raise ReconstructionError(
            f"+1 eigenspace of F has dimension {len(plus)}, expected {k + 1}")
    xi2 = eye[:, N - 1]
    minus_candidates = []
    for a in range(N):
        v = 0.5 * (eye[:, a] - F[:, a])
        v = v + float(v @ G @ xi2) * xi2        # project out the timelike seed
        minus_candidates.append(v)
    minus = _gram_schmidt(minus_candidates, G)
    if len(minus) != n - k + 1:
        raise ReconstructionError(
            f"-1 eigenspace of F has dimension {len(minus) + 1}, "
            f"expected {n - k + 2}")
    cols = plus + minus + [xi2]
    return np.column_stack(cols)


def randomize_frame(E0, k, rng):
    """Apply a random block isometry: O(k+1) on the +1 block and a
    rotation-plus-boost in O(n-k+1, 1) on the -1 block."""
    N = E0.shape[0]
    n = N - 3
    sphere = k + 1
    hyp = n - k + 2

    def rotation(m):
        M = rng.standard_normal((m, m))
        Q, R = np.linalg.qr(M)
        return Q * np.sign(np.diag(R))

    blk = np.zeros((N, N))
    blk[:sphere, :sphere] = rotation(sphere)
    # O(hyp-1, 1) factor: spacelike rotation followed by a boost in the
    # plane of the last spacelike axis and the timelike axis
    B = np.eye(hyp)
    B[:hyp - 1, :hyp - 1] = rotation(hyp - 1)
    t = rng.uniform(-0.5, 0.5)
    boost = np.eye(hyp)
    boost[hyp - 2, hyp - 2] = boost[hyp - 1, hyp - 1] = np.cosh(t)
    boost[hyp - 2, hyp - 1] = boost[hyp - 1, hyp - 2] = np.sinh(t)
    blk[sphere:, sphere:] = boost @ B
    return E0 @ blk


class _TransportCache:
    """Shared-prefix transport along staircase paths from a common base."""

    def __init__(self, conn, base, E0, step):
        self.conn = conn
        self.base = tuple(float(x) for x in base)
        self.step = step
        self.frames = {self._key(self.base): np.array(E0, dtype=float)}

    @staticmethod
    def _key(point):
        return tuple(round(float(x), 12) for x in point)

    def frame_at(self, point):
        path = bd.staircase_path(self.base, point)
        M = self.frames[self._key(path[0])]
        for a, b in zip(path[:-1], path[1:]):
            kb = self._key(b)
            cached = self.frames.get(kb)
            if cached is None:
                cached = self.conn.transport_segment(
                    np.asarray(a), np.asarray(b), M, step=self.step)
                self.frames[kb] = cached
            M = cached
        return M


def _sample_from_frame(spec, point, M, k):
    """Read off psi, dpsi and N from transported frame components."""
    n = spec.n
    N = n + 3
    g, *_ = spec.connection_data_at(point)
    G = bd.assemble_gram(g)
    P = G @ M                                    # P[b, a] = G(e_b, eta_a)
    eps = np.ones(N)
    eps[-1] = -1.0
    rows = np.array([n + 1] * (k + 1) + [n + 2] * (n - k + 2))
    psi = eps * P[rows, np.arange(N)]
    dpsi = (eps[None, :] * P[:n, :]).T           # (n+3) x n
    normal = eps * P[n, :]
    return ImmersionSample(point=tuple(float(x) for x in point),
                           psi=psi, normal=normal, dpsi=dpsi)


class Immersion:
    """Transport-based evaluation of the reconstructed immersion."""

    def __init__(self, spec, k=None, base=None, step=bd.DEFAULT_STEP,
                 base_frame=None):
        self.spec = spec
        self.base = tuple(base) if base is not None else spec.chart.base_point
        if not spec.chart.contains(self.base):
            raise ReconstructionError(f"base point {self.base} outside chart")
        ev = spec.eval_at(self.base)
        self.k = k if k is not None else st.determine_k(spec, self.base, ev)
        self.conn = bd.ConnectionField(spec)
        self.step = step
        E0 = base_frame if base_frame is not None else synthesize_frame(ev, self.k)
        self._check_base_frame(E0, ev)
        self.base_frame = np.array(E0, dtype=float)
        self._cache = _TransportCache(self.conn, self.base, self.base_frame, step)

    def _check_base_frame(self, E0, ev):
        N = self.spec.n + 3
        G = bd.assemble_gram(ev.g)
        F = bd.assemble_bundle_map(ev.f, ev.U, ev.u, ev.lam)
        target = geo.minkowski_metric(N)
        if np.abs(E0.T @ G @ E0 - target).max() > 1e-8:
            raise ReconstructionError("base frame is not G-orthonormal")
        sph = self.k + 1
        if (np.abs(F @ E0[:, :sph] - E0[:, :sph]).max() > 1e-8
                or np.abs(F @ E0[:, sph:] + E0[:, sph:]).max() > 1e-8):
            raise ReconstructionError("base frame is not adapted to F")

    def sample(self, point):
        M = self._cache.frame_at(point)
        return _sample_from_frame(self.spec, point, M, self.k)

    def samples(self, points):
        # warm the prefix cache sequentially, then read points in order
        return [self.sample(p) for p in points]

    def model(self):
        return AmbientModel(self.spec.n, self.k)


def immerse(spec, points=None, base=None, step=bd.DEFAULT_STEP,
            grid_density=8, base_frame=None, k=None):
    """Reconstruct the immersion at the given points (default: chart grid)."""
    imm = Immersion(spec, k=k, base=base, step=step, base_frame=base_frame)
    if points is None:
        points = spec.chart.grid(grid_density)
    return imm, imm.samples(points)


# ---------------------------------------------------------------------------
# theorem validation


@dataclass
class TheoremReport:
    k: int
    residuals: dict
    tolerances: dict
    samples: list
    admission: st.CompatibilityReport

    @property
    def valid(self):
        return all(self.residuals[key] < self.tolerances[key]
                   for key in self.residuals)

    def failing(self):
        return [key for key in self.residuals
                if self.residuals[key] >= self.tolerances[key]]

    def to_dict(self):
        return {
            "k": self.k,
            "valid": self.valid,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "tolerances": dict(self.tolerances),
            "failing": self.failing(),
        }


DEFAULT_VALIDATION_TOLERANCES = {
    "quadric": 1e-7,
    "isometry": 1e-6,
    "normal": 1e-7,
    "shape_operator": 1e-4,
    "product_relations": 1e-6,
}


def validate_theorem(spec, points=None, base=None, step=bd.DEFAULT_STEP,
                     grid_density=8, tolerances=None, fd_step=1e-4,
                     admission=None, admission_tol=st.DEFAULT_TOLERANCE):
    """Reconstruct and check the immersion against the model geometry.

    Refuses structures that fail admission.  Checks, as sups over the
    sample points: quadric membership and sheet, isometry, unit normal,
    the shape operator (finite differences of the normal), and the
    product-structure relations Fhat psi_* v = psi_*(fv) + u(v) N and
    Fhat N = psi_* U + lam N.
    """
    if admission is None:
        admission = st.admit(spec, tol=admission_tol, grid_density=grid_density)
    if not admission.admissible:
        raise st.InadmissibleStructureError(
            "structure fails admission: " + "; ".join(admission.reasons))
    if points is None:
        points = spec.chart.grid(grid_density)
    imm = Immersion(spec, k=admission.k, base=base, step=step)
    model = imm.model()
    J = model.minkowski
    n = spec.n
    res = {key: 0.0 for key in DEFAULT_VALIDATION_TOLERANCES}
    samples = imm.samples(points)
    for point, s in zip(points, samples):
        x = s.psi
        quad = model.on_model_residual(x)
        if x[-1] <= 0.0:
            quad = max(quad, 1.0)       # wrong hyperboloid sheet
        s.residuals["quadric"] = quad

        ev = spec.eval_at(point)
        s.residuals["isometry"] = float(
            np.abs(s.dpsi.T @ J @ s.dpsi - ev.g).max())

        s.residuals["normal"] = max(
            abs(model.inner(s.normal, s.normal) - 1.0),
            float(np.abs(s.dpsi.T @ J @ s.normal).max()),
            model.tangency_residual(x, s.normal))

        Fhat = model.fhat
        prod = float(np.abs(Fhat @ s.dpsi
                            - s.dpsi @ ev.f - np.outer(s.normal, ev.u)).max())
        prod = max(prod, float(np.abs(
            Fhat @ s.normal - s.dpsi @ ev.U - ev.lam * s.normal).max()))
        s.residuals["product_relations"] = prod

        s.residuals["shape_operator"] = _shape_fd_residual(
            imm, model, point, ev, s, fd_step)
        for key in res:
            res[key] = max(res[key], s.residuals[key])

    tols = dict(DEFAULT_VALIDATION_TOLERANCES)
    if tolerances:
        tols.update(tolerances)
    return TheoremReport(k=imm.k, residuals=res, tolerances=tols,
                         samples=samples, admission=admission)


def _shape_fd_residual(imm, model, point, ev, s, h):
    """|nabla_v N + psi_*(S v)| with the normal differentiated numerically."""
    chart = imm.spec.chart
    worst = 0.0
    for i in range(imm.spec.n):
        lo, hi = chart.box[i]
        hp = min(h, 0.25 * (hi - point[i]), 0.25 * (point[i] - lo))
        if hp <= 0.0:
            continue
        fwd = np.array(point, dtype=float)
        bwd = np.array(point, dtype=float)
        fwd[i] += hp
        bwd[i] -= hp
        dN = (imm.sample(fwd).normal - imm.sample(bwd).normal) / (2.0 * hp)
        X = s.dpsi[:, i]
        corr = (0.5 * model.inner(X + model.fhat @ X, s.normal) * model.xi1(s.psi)
                - 0.5 * model.inner(X - model.fhat @ X, s.normal) * model.xi2(s.psi))
        worst = max(worst, float(np.abs(dN + corr + s.dpsi @ ev.S[:, i]).max()))
    return worst
