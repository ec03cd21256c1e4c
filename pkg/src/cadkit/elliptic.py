"""Coefficient fields, a finite-difference Dirichlet solver, walk on spheres and PDE-side checks.

Operators are ``L u = -div(A ∇u)`` in the plane.  The discrete operator is the
conservative nine-point scheme on the lattice ``hZ²``: normal fluxes at edge midpoints
use the two-point difference, tangential derivatives at edge midpoints use the average
of the two neighbouring centred differences.  Nodes outside ``Ω`` next to the interior
carry Dirichlet data taken at their nearest boundary point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .dyadic import CubeId, DyadicGrid
from .fields import FieldSample, Grid2D
from .geometry import Domain


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class PoleError(ValueError):
    """The pole is too close to the boundary or to the region being integrated."""


# ------------------------------------------------------------------ coefficients
_J = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass
class CoefficientField:
    """``A(X)`` as a callable ``(x, y) -> (..., 2, 2)``; ``grad`` returns ``∂_k a_ij`` on the last axis."""

    func: Callable
    grad: Callable | None = None
    name: str = "custom"
    symmetric: bool = True
    constant: bool = False

    def __call__(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return self.func(x, y)

    @property
    def T(self) -> "CoefficientField":
        f, g = self.func, self.grad
        return CoefficientField(
            lambda x, y: np.swapaxes(f(x, y), -1, -2),
            None if g is None else (lambda x, y: np.swapaxes(g(x, y), -2, -3)),
            self.name + "^T",
            self.symmetric,
            self.constant,
        )

    def gradient(self, x, y, eps: float = 1e-6) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if self.grad is not None:
            return self.grad(x, y)
        if self.constant:
            return np.zeros(x.shape + (2, 2, 2))
        gx = (self(x + eps, y) - self(x - eps, y)) / (2 * eps)
        gy = (self(x, y + eps) - self(x, y - eps)) / (2 * eps)
        return np.stack([gx, gy], axis=-1)

    def ellipticity(self, points) -> float:
        """Smallest ``Λ`` with ``Λ^-1|ξ|² <= Aξ·ξ`` and ``|Aξ·η| <= Λ|ξ||η|`` on the points."""
        p = np.atleast_2d(points)
        A = self(p[:, 0], p[:, 1])
        sym = 0.5 * (A + np.swapaxes(A, -1, -2))
        lo = np.linalg.eigvalsh(sym)[:, 0]
        if np.any(lo <= 0):
            return float("inf")
        op = np.linalg.norm(A, ord=2, axis=(-2, -1))
        return float(max(np.max(1 / lo), np.max(op)))

    def grad_delta_sup(self, domain: Domain, points) -> float:
        """``sup |∇A|·δ`` over the points inside ``Ω`` (Frobenius norm of ``∇A``)."""
        p = np.atleast_2d(points)
        d = domain.signed_distance(p)
        p, d = p[d > 0], d[d > 0]
        g = self.gradient(p[:, 0], p[:, 1])
        return float(np.max(np.sqrt(np.sum(g**2, axis=(-3, -2, -1))) * d)) if len(p) else 0.0

    def carleson_functional(self, domain: Domain, x, r: float, h: float) -> float:
        """``σ(Δ(x,r))^-1 ∬_{B(x,r)∩Ω} |∇A|`` by the midpoint rule at pitch ``h``."""
        x = np.asarray(x, float)
        n = int(math.ceil(r / h))
        off = (np.arange(-n, n) + 0.5) * h
        X, Y = np.meshgrid(x[0] + off, x[1] + off)
        p = np.column_stack([X.ravel(), Y.ravel()])
        keep = (np.linalg.norm(p - x, axis=1) < r) & domain.contains(p)
        p = p[keep]
        g = self.gradient(p[:, 0], p[:, 1])
        total = float(np.sum(np.sqrt(np.sum(g**2, axis=(-3, -2, -1))))) * h * h
        return total / domain.ball_measure(x, r)


def constant(M) -> CoefficientField:
    M = np.asarray(M, float)
    if M.shape != (2, 2) or np.linalg.eigvalsh(0.5 * (M + M.T))[0] <= 0:
        raise ValueError("constant coefficient must be a 2x2 matrix with positive definite symmetric part")
    return CoefficientField(
        lambda x, y: np.broadcast_to(M, np.shape(x) + (2, 2)).copy(),
        None,
        "constant",
        bool(np.allclose(M, M.T)),
        True,
    )


def identity() -> CoefficientField:
    f = constant(np.eye(2))
    f.name = "identity"
    return f


def diag(a: float = 2.0, b: float = 1.0) -> CoefficientField:
    f = constant(np.diag([a, b]))
    f.name = "diag"
    return f


def rotating(anisotropy: float = 2.0, skew: float = 0.25, frequency: float = 1.0) -> CoefficientField:
    """``R(θ) diag(a, 1) R(θ)^T + s J`` with ``θ = frequency·(x + y)``; non-symmetric when ``s != 0``."""

    def func(x, y):
        th = frequency * (x + y)
        c, s = np.cos(th), np.sin(th)
        a = anisotropy
        out = np.empty(np.shape(x) + (2, 2))
        out[..., 0, 0] = a * c * c + s * s
        out[..., 1, 1] = a * s * s + c * c
        out[..., 0, 1] = (a - 1) * c * s + skew
        out[..., 1, 0] = (a - 1) * c * s - skew
        return out

    def grad(x, y):
        th = frequency * (x + y)
        a = anisotropy
        d = np.empty(np.shape(x) + (2, 2))
        # d/dθ of the symmetric part
        d[..., 0, 0] = (1 - a) * np.sin(2 * th)
        d[..., 1, 1] = (a - 1) * np.sin(2 * th)
        d[..., 0, 1] = (a - 1) * np.cos(2 * th)
        d[..., 1, 0] = (a - 1) * np.cos(2 * th)
        d *= frequency
        return np.stack([d, d], axis=-1)

    return CoefficientField(func, grad, "rotating", skew == 0.0)


def _window(u):
    """C² step in ``u``: 0 for u <= 0, 1 for u >= 1, with derivative."""
    t = np.clip(u, 0.0, 1.0)
    return t**3 * (10 - 15 * t + 6 * t**2), 30 * t**2 * (1 - t) ** 2


def kp_t_profile(amplitude: float = 0.5, t_lo: float = 2.0**-6, t_hi: float = 2.0**4) -> CoefficientField:
    """``I + a·sin(log t)·w(t)·e1⊗e1`` with ``t = y``; ``w`` switches the oscillation on for
    ``t ∈ [t_lo, t_hi]`` over one unit of ``log t`` on each side, so ``a_22 = 1``,
    ``|∇A| <= C/t`` and ``|∇A|² t`` is a Carleson measure."""
    lo, hi = math.log(t_lo), math.log(t_hi)

    def parts(y):
        lt = np.log(np.maximum(y, 1e-300))
        w1, dw1 = _window(lt - (lo - 1))
        w2, dw2 = _window((hi + 1) - lt)
        w = w1 * w2
        dw = (dw1 * w2 - w1 * dw2)  # d/d(log t)
        s = np.sin(lt)
        c = np.cos(lt)
        val = amplitude * s * w
        dval = amplitude * (c * w + s * dw) / np.maximum(y, 1e-300)
        return np.where(y > 0, val, 0.0), np.where(y > 0, dval, 0.0)

    def func(x, y):
        v, _ = parts(np.asarray(y, float))
        out = np.zeros(np.shape(x) + (2, 2))
        out[..., 0, 0] = 1 + v
        out[..., 1, 1] = 1.0
        return out

    def grad(x, y):
        _, dv = parts(np.asarray(y, float))
        g = np.zeros(np.shape(x) + (2, 2, 2))
        g[..., 0, 0, 1] = dv
        return g

    return CoefficientField(func, grad, "kp_t_profile", True)


PRESETS = {
    "identity": identity,
    "diag": diag,
    "rotating": rotating,
    "kp_t_profile": kp_t_profile,
}


# ------------------------------------------------------------------ discretization
_OFFS = {
    "P": (0, 0),
    "E": (0, 1),
    "W": (0, -1),
    "N": (1, 0),
    "S": (-1, 0),
    "NE": (1, 1),
    "NW": (1, -1),
    "SE": (-1, 1),
    "SW": (-1, -1),
}


def _stencil(A: CoefficientField, x, y, h):
    """Nine-point weights (times ``h²``) of ``div(A∇u)`` at nodes ``(x, y)``."""
    e = A(x + h / 2, y)
    w = A(x - h / 2, y)
    n = A(x, y + h / 2)
    s = A(x, y - h / 2)
    a11e, a12e = e[..., 0, 0], e[..., 0, 1]
    a11w, a12w = w[..., 0, 0], w[..., 0, 1]
    a21n, a22n = n[..., 1, 0], n[..., 1, 1]
    a21s, a22s = s[..., 1, 0], s[..., 1, 1]
    return {
        "P": -(a11e + a11w + a22n + a22s),
        "E": a11e + (a21n - a21s) / 4,
        "W": a11w - (a21n - a21s) / 4,
        "N": a22n + (a12e - a12w) / 4,
        "S": a22s - (a12e - a12w) / 4,
        "NE": (a12e + a21n) / 4,
        "NW": -(a12w + a21n) / 4,
        "SE": -(a12e + a21s) / 4,
        "SW": (a12w + a21s) / 4,
    }


@dataclass
class SolveReport:
    residual: float
    min_data: float
    max_data: float
    min_u: float
    max_u: float

    @property
    def maximum_principle(self) -> bool:
        tol = 1e-10 * max(1.0, abs(self.max_data), abs(self.min_data))
        return self.min_data - tol <= self.min_u and self.max_u <= self.max_data + tol


class DirichletProblem:
    """Discrete Dirichlet problem for ``-div(A∇u) = 0`` on the nodes of ``hZ² ∩ Ω``.

    The matrix ``M`` (scaled by ``h²``) acts on interior unknowns; ``B`` couples them to
    the ghost nodes.  One LU factorisation serves forward solves, adjoint solves and
    Green functions.
    """

    def __init__(self, domain: Domain, A: CoefficientField | None = None, h: float = 1 / 64):
        if not domain.closed:
            raise ValueError("need a closed domain")
        self.domain = domain
        self.A = identity() if A is None else A
        self.h = h
        lo, hi = domain.bbox
        self.grid = Grid2D.covering(lo, hi, h, pad=2)
        ny, nx = self.grid.shape
        pts = self.grid.points()
        sd = domain.signed_distance(pts).reshape(ny, nx)
        self.delta = np.abs(sd)
        inside = sd > 1e-9 * h  # nodes on ∂Ω carry data
        self.interior = inside
        near = np.zeros_like(inside)
        for dj in (-1, 0, 1):
            for di in (-1, 0, 1):
                near |= np.roll(np.roll(inside, dj, 0), di, 1)
        self.ghost = near & ~inside
        self.n = int(inside.sum())
        self.ng = int(self.ghost.sum())
        if self.n == 0:
            raise SolverError("no interior nodes; refine the pitch")
        self.uid = np.full((ny, nx), -1, dtype=np.int64)
        self.uid[inside] = np.arange(self.n)
        self.gid = np.full((ny, nx), -1, dtype=np.int64)
        self.gid[self.ghost] = np.arange(self.ng)
        gp = pts.reshape(ny, nx, 2)[self.ghost]
        self.ghost_points = gp
        self.ghost_foot, self.ghost_s, _ = domain.project(gp)
        self.n_node_ghosts = self.ng
        self._cut_edges()
        self.M, self.B = self._assemble(self.A)
        self._lu = None
        self._adj: dict = {}

    # ---------------------------------------------------------------- assembly
    def _cut_edges(self):
        """Stencil edges that cross ``∂Ω`` without a usable ghost value (thin exterior spikes).

        Two cases: an edge between two interior nodes that leaves ``Ω`` on the way, and an
        edge to a ghost node whose nearest boundary point is hidden behind another part of
        ``∂Ω`` (a ghost inside a slit seen from both sides).  The far node is replaced by a
        Dirichlet point at the first crossing, appended to the ghost list without a grid node.
        """
        J, I = np.nonzero(self.interior)
        P = np.column_stack([self.grid.origin[0] + I * self.h, self.grid.origin[1] + J * self.h])
        dP = self.delta[J, I]
        self.cut: dict[str, np.ndarray] = {}
        feet, params = [], []
        nv = self.ng
        for key, (dj, di) in _OFFS.items():
            ids = np.full(self.n, -1, dtype=np.int64)
            if key != "P":
                jj, ii = J + dj, I + di
                both = self.uid[jj, ii] >= 0
                span = self.h * math.hypot(dj, di)
                cand = np.nonzero(both & (dP + self.delta[jj, ii] < span * (1 + 1e-9)))[0]
                gh = np.nonzero(self.gid[jj, ii] >= 0)[0]
                if len(gh):
                    foot = self.ghost_foot[self.gid[jj[gh], ii[gh]]]
                    tf, _, _ = _first_crossing(self.domain, P[gh], foot)
                    reach = np.linalg.norm(foot - P[gh], axis=1)
                    hidden = tf * reach < reach - 1e-9 * self.h
                    cand = np.concatenate([cand, gh[hidden]])
                if len(cand):
                    Q = P[cand] + np.array([di, dj]) * self.h
                    t, pt, sp = _first_crossing(self.domain, P[cand], Q)
                    hit = np.isfinite(t)
                    k = int(hit.sum())
                    ids[cand[hit]] = np.arange(nv, nv + k)
                    nv += k
                    feet.append(pt[hit])
                    params.append(sp[hit])
            self.cut[key] = ids
        if nv > self.ng:
            self.ghost_foot = np.vstack([self.ghost_foot] + feet)
            self.ghost_s = np.concatenate([self.ghost_s] + params)
            self.ng = nv

    def _assemble(self, A: CoefficientField):
        g = self.grid
        J, I = np.nonzero(self.interior)
        x = g.origin[0] + I * self.h
        y = g.origin[1] + J * self.h
        w = _stencil(A, x, y, self.h)
        rows, cols, vals, grows, gcols, gvals = [], [], [], [], [], []
        me = self.uid[J, I]
        for key, (dj, di) in _OFFS.items():
            jj, ii = J + dj, I + di
            cut = self.cut[key]
            u = np.where(cut >= 0, -1, self.uid[jj, ii])
            gh = np.where(cut >= 0, cut, self.gid[jj, ii])
            m = u >= 0
            rows.append(me[m])
            cols.append(u[m])
            vals.append(w[key][m])
            m2 = gh >= 0
            grows.append(me[m2])
            gcols.append(gh[m2])
            gvals.append(w[key][m2])
        M = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.n, self.n)
        )
        B = sparse.csr_matrix(
            (np.concatenate(gvals), (np.concatenate(grows), np.concatenate(gcols))), shape=(self.n, self.ng)
        )
        return M, B

    @property
    def lu(self):
        if self._lu is None:
            self._lu = splu(self.M.tocsc())
        return self._lu

    # ---------------------------------------------------------------- data
    def boundary_values(self, g) -> np.ndarray:
        """Ghost values ``g(foot, s)`` where ``foot`` is the nearest boundary point and ``s`` its arc parameter."""
        return np.asarray(g(self.ghost_foot, self.ghost_s), dtype=float) * np.ones(self.ng)

    def arc_indicator(self, s0: float, s1: float) -> np.ndarray:
        """Ghost values of ``1_{[s0, s1]}`` in arc parameter, with halves at the endpoints."""
        return _interval_weight(self.ghost_s, s0, s1, self.domain.length)

    def ball_indicator(self, x, r: float) -> np.ndarray:
        return (np.linalg.norm(self.ghost_foot - np.asarray(x, float), axis=1) < r).astype(float)

    # ---------------------------------------------------------------- solves
    def _field(self, u_int, u_ghost=None) -> FieldSample:
        full = np.zeros(self.grid.shape)
        full[self.interior] = u_int
        if u_ghost is not None:
            full[self.ghost] = u_ghost[: self.n_node_ghosts]
        f = FieldSample(self.grid, full, self.interior)
        f.ghost = self.ghost
        f.delta = self.delta
        return f

    def solve(self, g_ghost: np.ndarray, check: bool = True) -> tuple[FieldSample, SolveReport]:
        rhs = -(self.B @ g_ghost)
        u = self.lu.solve(rhs)
        res = float(np.max(np.abs(self.M @ u - rhs))) / self.h**2 if self.n else 0.0
        if not np.all(np.isfinite(u)):
            raise SolverError("linear solve produced non-finite values", res)
        if check and res > 1e-8:
            raise SolverError(f"discrete residual {res:.3e} above 1e-8", res)
        used = np.unique(self.B.indices)
        gd = g_ghost[used] if len(used) else g_ghost
        rep = SolveReport(res, float(gd.min()), float(gd.max()), float(u.min()), float(u.max()))
        return self._field(u, g_ghost), rep

    def _node_weights(self, X):
        """Bilinear weights of ``X`` on its cell corners: (interior ids, weights), (ghost ids, weights)."""
        if not self.domain.signed_distance(np.asarray(X, float)[None])[0] > 0:
            raise PoleError("point is not inside the domain")
        g = self.grid
        fx = (X[0] - g.origin[0]) / self.h
        fy = (X[1] - g.origin[1]) / self.h
        i, j = int(math.floor(fx)), int(math.floor(fy))
        tx, ty = fx - i, fy - j
        ui, uw, gi, gw = [], [], [], []
        for dj, di, wt in ((0, 0, (1 - tx) * (1 - ty)), (0, 1, tx * (1 - ty)), (1, 0, (1 - tx) * ty), (1, 1, tx * ty)):
            if wt == 0:
                continue
            u = self.uid[j + dj, i + di]
            if u >= 0:
                ui.append(u)
                uw.append(wt)
                continue
            gh = self.gid[j + dj, i + di]
            if gh < 0:
                raise PoleError("point too close to the boundary for the grid")
            gi.append(gh)
            gw.append(wt)
        if not ui:
            raise PoleError("point has no interior cell corner")
        return (np.array(ui), np.array(uw)), (np.array(gi, dtype=np.int64), np.array(gw))

    def adjoint(self, X) -> tuple[np.ndarray, np.ndarray]:
        """``(z, w)`` with ``M^T z = e_X`` and ``u(X) = w · g`` for every boundary datum ``g``.

        ``w`` are the discrete elliptic-measure weights of the ghost nodes seen from ``X``
        and ``-z`` is the discrete ``G_L(X, ·)`` (unit mass at ``X``).
        """
        X = np.asarray(X, float)
        key = (float(X[0]), float(X[1]))
        if key in self._adj:
            return self._adj[key]
        (ui, uw), (gi, gw) = self._node_weights(X)
        e = np.zeros(self.n)
        e[ui] = uw
        z = self.lu.solve(e, trans="T")
        w = -(self.B.T @ z)
        if len(gi):
            np.add.at(w, gi, gw)
        self._adj[key] = (z, w)
        return z, w

    def interpolate(self, u_full: np.ndarray, X) -> float:
        f = FieldSample(self.grid, u_full, self.interior | self.ghost)
        return f.interpolate(np.asarray(X, float))

    def green(self, X0, transpose: bool = False) -> FieldSample:
        """Discrete ``G(·, X0)`` with ``-L_h G = δ_{X0}/h²`` at the node nearest ``X0`` and ``G = 0`` on ghosts.

        With ``transpose=True`` the operator is the exact matrix transpose, so the result is
        ``G_{L^T}(·, X0) = G_L(X0, ·)``.
        """
        X0 = np.asarray(X0, float)
        d0 = float(self.domain.signed_distance(X0[None])[0])
        if d0 < 10 * self.h:
            raise PoleError(f"pole at distance {d0:.3g} < 10h")
        j, i = self.grid.index(X0)
        k = self.uid[j, i]
        e = np.zeros(self.n)
        e[k] = 1.0
        G = -self.lu.solve(e, trans="T" if transpose else "N")
        f = self._field(G, np.zeros(self.ng))
        f.pole = self.grid.node(j, i)
        return f

    def transposed(self) -> "DirichletProblem":
        """Independent discretisation of ``L^T`` (assembled from ``A^T``)."""
        p = object.__new__(DirichletProblem)
        p.__dict__.update(self.__dict__)
        p.A = self.A.T
        p.M, p.B = self._assemble(p.A)
        p._lu = None
        p._adj = {}
        return p


def _first_crossing(domain: Domain, P: np.ndarray, Q: np.ndarray, chunk: int = 1 << 21):
    """First intersection of segments ``P→Q`` with ``∂Ω``: ``(t, point, arc parameter)``, ``t = inf`` if none."""
    a, b = domain.seg_a, domain.seg_b
    e = b - a
    t_out = np.full(len(P), np.inf)
    s_out = np.zeros(len(P))
    step = max(1, chunk // max(len(a), 1))
    for i in range(0, len(P), step):
        p, d = P[i : i + step, None, :], (Q - P)[i : i + step, None, :]
        den = d[..., 0] * e[None, :, 1] - d[..., 1] * e[None, :, 0]
        w = a[None] - p
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (w[..., 0] * e[None, :, 1] - w[..., 1] * e[None, :, 0]) / den
            u = (w[..., 0] * d[..., 1] - w[..., 1] * d[..., 0]) / den
        ok = (den != 0) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
        t = np.where(ok, t, np.inf)
        k = np.argmin(t, axis=1)
        rows = np.arange(len(k))
        t_out[i : i + step] = t[rows, k]
        s_out[i : i + step] = domain.seg_s0[k] + u[rows, k] * domain.seg_len[k]
    pt = P + np.where(np.isfinite(t_out), t_out, 0.0)[:, None] * (Q - P)
    return t_out, pt, s_out


def _interval_weight(s, s0, s1, L, tol: float = 1e-12) -> np.ndarray:
    """``1`` for ``s`` strictly inside ``[s0, s1]`` (mod ``L``), ``1/2`` at an endpoint."""
    s = np.mod(np.asarray(s, float), L)
    s0m = s0 % L
    length = s1 - s0
    if length >= L - tol * L:
        return np.ones_like(s)
    rel = np.mod(s - s0m, L)
    rel = np.where(rel > L - tol * L, rel - L, rel)
    w = ((rel > tol * L) & (rel < length - tol * L)).astype(float)
    w[np.abs(rel) <= tol * L] = 0.5
    w[np.abs(rel - length) <= tol * L] = 0.5
    return w


def solve_dirichlet(domain: Domain, A: CoefficientField | None, g, h: float):
    """Solve ``Lu = 0`` with ``u = g`` on ``∂Ω``; ``g(foot, s)`` is evaluated at nearest boundary points."""
    prob = DirichletProblem(domain, A, h)
    u, rep = prob.solve(prob.boundary_values(g))
    return u, rep


# ------------------------------------------------------------------ measures
@dataclass
class EllipticMeasureEstimate:
    pole: np.ndarray
    generation: int
    masses: dict[CubeId, float]
    stderr: dict[CubeId, float] | None = None
    total: float = 1.0
    method: str = "solver"
    h: float | None = None
    normalization: tuple[float, float] | None = None  # (C0, σ(Q0))

    def density(self, grid: DyadicGrid) -> dict[CubeId, float]:
        return {c: m / grid.sigma(c) for c, m in self.masses.items()}

    def normalized(self, grid: DyadicGrid, Q0: CubeId) -> "EllipticMeasureEstimate":
        """``ω = C0 σ(Q0) ω^X`` with ``C0 = 1/ω^X(Q0)`` so that ``ω(Q0) = σ(Q0)``."""
        m0 = cube_mass(self, grid, Q0)
        C0 = 1.0 / m0
        s0 = grid.sigma(Q0)
        return EllipticMeasureEstimate(
            self.pole,
            self.generation,
            {c: C0 * s0 * m for c, m in self.masses.items()},
            None if self.stderr is None else {c: C0 * s0 * e for c, e in self.stderr.items()},
            C0 * s0 * self.total,
            self.method,
            self.h,
            (C0, s0),
        )


def cube_mass(est: EllipticMeasureEstimate, grid: DyadicGrid, cid: CubeId) -> float:
    k = est.generation
    if cid[0] > k:
        raise ValueError("cube finer than the estimate generation")
    shift = k - cid[0]
    return float(sum(est.masses[(k, j)] for j in range(cid[1] << shift, (cid[1] + 1) << shift)))


def ghost_cube_weights(prob: DirichletProblem, grid: DyadicGrid, k: int) -> sparse.csr_matrix:
    """Matrix mapping ghost values to generation-``k`` cubes (ghosts on a cube endpoint split in half)."""
    arc = grid.arc(k)
    n = 2**k
    s = np.mod(prob.ghost_s, prob.domain.length)
    f = s / arc
    j = np.clip(np.floor(f).astype(np.int64), 0, n - 1)
    frac = f - np.floor(f)
    tol = 1e-12 * prob.domain.length / arc
    on_lo = frac <= tol
    on_hi = frac >= 1 - tol
    rows = [j]
    vals = [np.where(on_lo | on_hi, 0.5, 1.0)]
    cols = [np.arange(len(s))]
    other = np.where(on_lo, (j - 1) % n, np.where(on_hi, (j + 1) % n, -1))
    m = other >= 0
    rows.append(other[m])
    vals.append(np.full(int(m.sum()), 0.5))
    cols.append(np.nonzero(m)[0])
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, len(s)))


def elliptic_measure(prob: DirichletProblem, X, grid: DyadicGrid, k: int) -> EllipticMeasureEstimate:
    """``ω^X(Q)`` for every generation-``k`` cube from a single adjoint solve."""
    _, w = prob.adjoint(X)
    m = ghost_cube_weights(prob, grid, k) @ w
    masses = {(k, j): float(m[j]) for j in range(2**k)}
    return EllipticMeasureEstimate(np.asarray(X, float), k, masses, None, float(w.sum()), "solver", prob.h)


# ------------------------------------------------------------------ walk on spheres
@dataclass
class MonteCarloEstimate:
    value: float
    stderr: float
    n: int
    diverged: int
    samples: np.ndarray | None = field(default=None, repr=False)


def walk_on_spheres(
    domain: Domain,
    X,
    functional,
    n_walks: int = 100_000,
    seed: int = 0,
    shell: float = 1e-6,
    max_steps: int = 10_000,
    keep: bool = False,
) -> MonteCarloEstimate:
    """Estimate ``∫ f dω^X`` for ``A = I``; ``functional(foot, s)`` is evaluated at the stopping points.

    Walkers stop inside the shell ``δ < shell·diam(∂Ω)`` and are projected to the boundary.
    Walkers still running after ``max_steps`` are counted as diverged and score 0.
    """
    rng = np.random.default_rng(seed)
    eps = shell * domain.diameter
    pos = np.tile(np.asarray(X, float), (n_walks, 1))
    active = np.arange(n_walks)
    stop = np.empty((n_walks, 2))
    done = np.zeros(n_walks, dtype=bool)
    for _ in range(max_steps):
        if len(active) == 0:
            break
        d = domain.distance(pos[active])
        hit = d < eps
        if np.any(hit):
            idx = active[hit]
            stop[idx] = pos[idx]
            done[idx] = True
            active = active[~hit]
            d = d[~hit]
        if len(active) == 0:
            break
        th = rng.uniform(0.0, 2 * np.pi, len(active))
        pos[active] += d[:, None] * np.column_stack([np.cos(th), np.sin(th)])
    diverged = int((~done).sum())
    if diverged:
        warnings.warn(f"{diverged} walks exceeded the step budget", RuntimeWarning, stacklevel=2)
    vals = np.zeros(n_walks)
    if np.any(done):
        foot, s, _ = domain.project(stop[done])
        vals[done] = functional(foot, s)
    return MonteCarloEstimate(
        float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_walks)), n_walks, diverged, vals if keep else None
    )


def arc_functional(domain: Domain, s0: float, s1: float):
    return lambda foot, s: _interval_weight(s, s0, s1, domain.length)


def walk_on_spheres_ball3d(X, cap: float, n_walks: int = 100_000, seed: int = 0, shell: float = 1e-6) -> MonteCarloEstimate:
    """Harmonic measure of the cap ``{z > cap}`` of the unit sphere in ``R³`` seen from ``X``."""
    rng = np.random.default_rng(seed)
    pos = np.tile(np.asarray(X, float), (n_walks, 1))
    active = np.ones(n_walks, dtype=bool)
    while np.any(active):
        d = 1 - np.linalg.norm(pos[active], axis=1)
        near = d < shell
        idx = np.nonzero(active)[0]
        active[idx[near]] = False
        idx, d = idx[~near], d[~near]
        v = rng.normal(size=(len(idx), 3))
        v /= np.linalg.norm(v, axis=1)[:, None]
        pos[idx] += d[:, None] * v
    foot = pos / np.linalg.norm(pos, axis=1)[:, None]
    vals = (foot[:, 2] > cap).astype(float)
    return MonteCarloEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_walks)), n_walks, 0)


def cap_measure_from_center_3d(cap: float) -> float:
    """Exact ``ω^0`` of ``{z > cap}`` on the unit sphere (normalized area)."""
    return (1 - cap) / 2


# ------------------------------------------------------------------ Green function checks
def green_function(domain: Domain, A: CoefficientField | None, X0, h: float, transpose: bool = True):
    """``(G, G_T)`` where ``G = G_L(·, X0)`` and ``G_T = G_{L^T}(·, X0)``; ``G_T`` uses an independent assembly."""
    prob = DirichletProblem(domain, A, h)
    G = prob.green(X0)
    GT = prob.transposed().green(X0) if transpose else None
    return G, GT, prob


def green_symmetry(prob: DirichletProblem, pairs) -> float:
    """``max |G_L(X, Y) - G_{L^T}(Y, X)|`` over node pairs, with ``L^T`` assembled from ``A^T``."""
    pt = prob.transposed()
    worst = 0.0
    for X, Y in pairs:
        GY = prob.green(Y)  # G_L(·, Y)
        GX = pt.green(X)  # G_{L^T}(·, X)
        a = GY.values[prob.grid.index(X)]
        b = GX.values[prob.grid.index(Y)]
        worst = max(worst, abs(a - b))
    return worst


def _cell_gradient(values: np.ndarray, h: float):
    """Gradient at cell centres from the four corners; shape ``(ny-1, nx-1)``."""
    v = values
    gx = (v[:-1, 1:] - v[:-1, :-1] + v[1:, 1:] - v[1:, :-1]) / (2 * h)
    gy = (v[1:, :-1] - v[:-1, :-1] + v[1:, 1:] - v[:-1, 1:]) / (2 * h)
    return gx, gy


def _cell_centers(grid: Grid2D):
    xc = grid.x[:-1] + grid.h / 2
    yc = grid.y[:-1] + grid.h / 2
    return np.meshgrid(xc, yc)


def energy_pairing(prob: DirichletProblem, G_full: np.ndarray, A: CoefficientField, grad_phi) -> float:
    """``∬_Ω A ∇G · ∇Φ`` by the cell midpoint rule (``G`` extended by its ghost values and 0 beyond)."""
    gx, gy = _cell_gradient(G_full, prob.h)
    Xc, Yc = _cell_centers(prob.grid)
    M = A(Xc, Yc)
    px, py = grad_phi(Xc, Yc)
    fx = M[..., 0, 0] * gx + M[..., 0, 1] * gy
    fy = M[..., 1, 0] * gx + M[..., 1, 1] * gy
    inside = prob.interior
    cell_in = inside[:-1, :-1] | inside[1:, :-1] | inside[:-1, 1:] | inside[1:, 1:]
    return float(np.sum(np.where(cell_in, fx * px + fy * py, 0.0))) * prob.h**2


@dataclass
class RieszCheck:
    lhs: float
    phi_pole: float
    boundary_integral: float
    residual: float


def riesz_check(prob: DirichletProblem, X0, phi, grad_phi) -> RieszCheck:
    """Compare ``∬ A^T ∇G_T · ∇Φ`` with ``Φ(X0) - ∫ Φ dω^{X0}``."""
    X0 = np.asarray(X0, float)
    j, i = prob.grid.index(X0)
    X0 = prob.grid.node(j, i)
    z, w = prob.adjoint(X0)
    GT = np.zeros(prob.grid.shape)
    GT[prob.interior] = -z
    lhs = energy_pairing(prob, GT, prob.A.T, grad_phi)
    bnd = float(w @ phi(prob.ghost_foot[:, 0], prob.ghost_foot[:, 1]))
    p0 = float(phi(np.array(X0[0]), np.array(X0[1])))
    return RieszCheck(lhs, p0, bnd, abs(lhs - (p0 - bnd)))


# ------------------------------------------------------------------ boundary estimates
@dataclass
class BracketRecord:
    values: list[float]

    @property
    def bracket(self) -> tuple[float, float]:
        return (float(min(self.values)), float(max(self.values)))


def bourgain_check(prob: DirichletProblem, x, r: float, c: float = 0.5) -> tuple[float, float]:
    """``min_{Y ∈ B(x, cr) ∩ Ω} ω^Y(Δ(x, r))`` over grid nodes and the implied ``C = 1/min``."""
    u, _ = prob.solve(prob.ball_indicator(x, r))
    pts = prob.grid.points()
    sel = prob.interior.ravel() & (np.linalg.norm(pts - np.asarray(x, float), axis=1) < c * r)
    if not np.any(sel):
        raise PoleError("no grid nodes in B(x, cr) ∩ Ω; refine the pitch")
    m = float(u.values.ravel()[sel].min())
    return m, (1 / m if m > 0 else float("inf"))


def doubling_check(prob: DirichletProblem, x, r: float, X) -> float:
    """``ω^X(Δ(x, 2r)) / ω^X(Δ(x, r))`` for a pole ``X`` outside ``4B(x, r)``."""
    X = np.asarray(X, float)
    if np.linalg.norm(X - np.asarray(x, float)) < 4 * r:
        raise PoleError("pole must lie outside 4B")
    _, w = prob.adjoint(X)
    return float(w @ prob.ball_indicator(x, 2 * r)) / float(w @ prob.ball_indicator(x, r))


def cfms_check(prob: DirichletProblem, x, r: float, X, X_delta) -> float:
    """``G(X, X_Δ)/ω^X(Δ(x, r))`` (the factor ``r^{n-1}`` is 1 in the plane)."""
    X = np.asarray(X, float)
    if np.linalg.norm(X - np.asarray(x, float)) < 2 * r:
        raise PoleError("pole must lie outside 2B")
    z, w = prob.adjoint(X)
    G = np.zeros(prob.grid.shape)
    G[prob.interior] = -z
    g = prob.interpolate(G, X_delta)
    return g / float(w @ prob.ball_indicator(x, r))


# ------------------------------------------------------------------ reverse Hölder
@dataclass
class RHQResult:
    q: float
    rh: dict
    hyp: dict
    rh_max: float
    hyp_max: float
    ainfty_C: float
    ainfty_s: float


def rhq_fit(est: EllipticMeasureEstimate, grid: DyadicGrid, q: float = 2.0, deltas=None) -> RHQResult:
    """Reverse-Hölder and higher-integrability constants of the step density ``k = ω(Q)/σ(Q)``.

    ``deltas`` maps names to lists of finest-generation cubes (default: every cube at a
    generation not finer than the estimate, as its finest descendants).  The A∞ exponent
    ``s`` is fitted on pairs ``(σ(E)/σ(Δ), ω(E)/ω(Δ))`` for sub-cubes ``E ⊆ Δ``.
    """
    k = est.generation
    dens = {c: m / grid.sigma(c) for c, m in est.masses.items()}
    if deltas is None:
        deltas = {}
        for g in range(k + 1):
            for c in grid.generation(g):
                sh = k - g
                deltas[f"{c[0]}:{c[1]}"] = [(k, j) for j in range(c[1] << sh, (c[1] + 1) << sh)]
    rh, hyp = {}, {}
    for name, cubes in deltas.items():
        sig = np.array([grid.sigma(c) for c in cubes])
        kv = np.array([dens[c] for c in cubes])
        S = sig.sum()
        mean_k = float(np.sum(kv * sig) / S)
        mean_kq = float(np.sum(kv**q * sig) / S)
        rh[name] = mean_kq ** (1 / q) / mean_k if mean_k > 0 else float("inf")
        hyp[name] = float(np.sum(kv**q * sig)) * S ** (q - 1)
    xs, ys = [], []
    for name, cubes in deltas.items():
        if len(cubes) < 2:
            continue
        sig = np.array([grid.sigma(c) for c in cubes])
        om = np.array([est.masses[c] for c in cubes])
        if om.sum() <= 0:
            continue
        order = np.argsort(om / sig)[::-1]
        # nested subsets: the j heaviest cubes, so the fit sees the worst concentration
        cs, co = np.cumsum(sig[order]), np.cumsum(om[order])
        xs += list(cs[:-1] / sig.sum())
        ys += list(co[:-1] / om.sum())
    xs, ys = np.array(xs), np.array(ys)
    ok = (xs > 0) & (ys > 0)
    if np.sum(ok) >= 2:
        s_fit = float(np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)[0])
        s_fit = max(s_fit, 1e-6)
        C_fit = float(np.max(ys[ok] / xs[ok] ** s_fit))
    else:
        s_fit, C_fit = 1.0, 1.0
    return RHQResult(q, rh, hyp, max(rh.values()), max(hyp.values()), C_fit, s_fit)


# ------------------------------------------------------------------ interior estimates
def gradient_bound_check(u: FieldSample, delta: np.ndarray, min_delta: float | None = None) -> tuple[float, np.ndarray]:
    """``sup |∇u|·δ/u`` over nodes where the centred stencil fits and ``δ >= min_delta`` (default ``2h``)."""
    h = u.h
    md = 2 * h if min_delta is None else min_delta
    gx, gy = u.gradient()
    m = u.mask
    cen = np.zeros_like(m)
    cen[1:-1, 1:-1] = m[1:-1, 1:-1] & m[2:, 1:-1] & m[:-2, 1:-1] & m[1:-1, 2:] & m[1:-1, :-2]
    d = np.asarray(delta).reshape(u.grid.shape)
    sel = cen & (d >= md) & (u.values > 0)
    if not np.any(sel):
        raise ValueError("no admissible nodes")
    r = np.where(sel, np.hypot(gx, gy) * d / np.where(sel, u.values, 1.0), -np.inf)
    k = np.unravel_index(int(np.argmax(r)), r.shape)
    return float(r[k]), u.grid.node(*k)


def _cell_values(f: np.ndarray) -> np.ndarray:
    return 0.25 * (f[:-1, :-1] + f[1:, :-1] + f[:-1, 1:] + f[1:, 1:])


def caccioppoli2_check(u: FieldSample, lo, side: float) -> float:
    """``ℓ(I)² ∬_I |∇²u|² / ∬_{2I} |∇u|²`` by the cell-centre rule."""
    lo = np.asarray(lo, float)
    uxx, uxy, uyy = u.hessian()
    gx, gy = u.gradient()
    hess2 = _cell_values(uxx**2 + 2 * uxy**2 + uyy**2)
    grad2 = _cell_values(gx**2 + gy**2)
    Xc, Yc = _cell_centers(u.grid)
    inI = (Xc > lo[0]) & (Xc < lo[0] + side) & (Yc > lo[1]) & (Yc < lo[1] + side)
    c = lo + side / 2
    in2I = (np.abs(Xc - c[0]) < side) & (np.abs(Yc - c[1]) < side)
    if np.any(~np.isfinite(hess2[inI])) or np.any(~np.isfinite(grad2[in2I])):
        raise ValueError("box too close to the boundary for the difference stencils")
    num = side**2 * float(np.sum(hess2[inI])) * u.h**2
    den = float(np.sum(grad2[in2I])) * u.h**2
    if den == 0:
        return 0.0 if num == 0 else float("inf")
    return num / den


# ------------------------------------------------------------------ square function
@dataclass
class SquareFunctionResult:
    total: float
    per_cube: dict[CubeId, float]
    ratio: float
    sigma_root: float


def square_function_density(G: FieldSample, A: CoefficientField) -> np.ndarray:
    """``|∇(A^T ∇G)|²`` on nodes (Frobenius norm), NaN where the stencils leave the mask."""
    gx, gy = G.gradient()
    uxx, uxy, uyy = G.hessian()
    X, Y = np.meshgrid(G.grid.x, G.grid.y)
    AT = A.T(X, Y)
    dA = A.T.gradient(X, Y)
    H = np.stack([np.stack([uxx, uxy], -1), np.stack([uxy, uyy], -1)], -2)  # H[..., j, k]
    grad = np.stack([gx, gy], -1)
    # D[..., i, k] = ∂_k (A^T ∇G)_i
    D = np.einsum("...ij,...jk->...ik", AT, H) + np.einsum("...ijk,...j->...ik", dA, grad)
    return np.sum(D**2, axis=(-2, -1))


def square_function_carleson(
    G: FieldSample,
    weight: np.ndarray,
    region,
    A: CoefficientField,
    grid: DyadicGrid,
    per_cube_regions: dict | None = None,
) -> SquareFunctionResult:
    """``Υ = ∬_region |∇(A^T∇G)|² w`` and per-cube pieces over ``per_cube_regions``.

    Integrals use the cell-centre rule with integrand averaged from the four corners;
    cells whose corners lack a full difference stencil are a precondition error.
    """
    dens = square_function_density(G, A) * np.asarray(weight).reshape(G.grid.shape)
    cell = _cell_values(dens)
    Xc, Yc = _cell_centers(G.grid)
    pts = np.column_stack([Xc.ravel(), Yc.ravel()])
    pole = getattr(G, "pole", None)

    def integrate(reg) -> float:
        lo, hi = reg.wd.box(reg.boxes, reg.fat)
        box = np.all((pts > lo.min(axis=0)) & (pts < hi.max(axis=0)), axis=1)
        sel = np.zeros(len(pts), dtype=bool)
        sel[box] = reg.contains(pts[box])
        sel = sel.reshape(cell.shape)
        if pole is not None:
            near = (np.abs(Xc - pole[0]) < 3 * G.h) & (np.abs(Yc - pole[1]) < 3 * G.h)
            if np.any(sel & near):
                raise PoleError("region touches the pole cell")
        vals = cell[sel]
        if np.any(~np.isfinite(vals)):
            raise ValueError("region reaches nodes without a full difference stencil")
        return float(np.sum(vals)) * G.h**2

    total = integrate(region)
    per = {c: integrate(r) for c, r in (per_cube_regions or {}).items()}
    s = grid.sigma(region.root)
    return SquareFunctionResult(total, per, total / s, s)


def box_square_function(G: FieldSample, weight: np.ndarray, A: CoefficientField, lo, hi) -> float:
    """``∬_{[lo, hi]} |∇(A^T∇G)|² w`` by the cell-centre rule."""
    dens = square_function_density(G, A) * np.asarray(weight).reshape(G.grid.shape)
    cell = _cell_values(dens)
    Xc, Yc = _cell_centers(G.grid)
    sel = (Xc > lo[0]) & (Xc < hi[0]) & (Yc > lo[1]) & (Yc < hi[1])
    vals = cell[sel]
    if np.any(~np.isfinite(vals)):
        raise ValueError("box reaches nodes without a full difference stencil")
    return float(np.sum(vals)) * G.h**2


# ------------------------------------------------------------------ integration by parts
def smooth_bump(center, radius: float):
    """``Φ`` with ``Φ = 1`` on ``B(center, radius/2)``, ``Φ = 0`` off ``B(center, radius)``, and its gradient."""
    c = np.asarray(center, float)

    def phi(x, y):
        r = np.hypot(x - c[0], y - c[1]) / radius
        t = np.clip(2 * r - 1, 0, 1)
        return 1 - t**3 * (10 - 15 * t + 6 * t**2)

    def grad(x, y):
        dx, dy = x - c[0], y - c[1]
        rr = np.hypot(dx, dy)
        r = rr / radius
        t = np.clip(2 * r - 1, 0, 1)
        dphi = -30 * t**2 * (1 - t) ** 2 * 2 / radius
        safe = np.where(rr > 0, rr, 1.0)
        return dphi * dx / safe, dphi * dy / safe

    return phi, grad


@dataclass
class IBPResult:
    cube: CubeId
    boundary_integral: float
    I: float
    II: float
    beta: np.ndarray
    residual: float
    sigma: float
    omega_q: float
    h: float

    @property
    def tolerance(self) -> float:
        return 5 * self.h * self.sigma


def ibp_identity_check(
    prob: DirichletProblem,
    grid: DyadicGrid,
    cid: CubeId,
    X0,
    Q0: CubeId,
    u_region,
    z_point=None,
    k: int | None = None,
) -> IBPResult:
    """Split ``∫Φ dω = -∬_Ω A^T∇𝒢·∇Φ`` as ``-I + II`` around ``β = |U|^-1 ∬_U A^T∇𝒢``.

    ``𝒢 = C0 σ(Q0) G_L(X0, ·)`` and ``ω = C0 σ(Q0) ω^{X0}`` with ``C0 = 1/ω^{X0}(Q0)``;
    ``Φ`` is a bump adapted to ``B(z_Q, r_Q/4)`` and ``u_region`` is the region ``U_{Q,ε}``.
    """
    q = grid[cid]
    z = q.center if z_point is None else np.asarray(z_point, float)
    R = q.radius / 4
    phi, gphi = smooth_bump(z, R)
    X0 = np.asarray(X0, float)
    j, i = prob.grid.index(X0)
    X0 = prob.grid.node(j, i)
    if np.linalg.norm(X0 - z) < R + 2 * prob.h:
        raise PoleError("pole inside the support of Φ")
    zs, w = prob.adjoint(X0)
    kk = grid.depth if k is None else k
    est_w = ghost_cube_weights(prob, grid, kk) @ w
    shift = kk - Q0[0]
    m0 = float(est_w[Q0[1] << shift : (Q0[1] + 1) << shift].sum())
    norm = grid.sigma(Q0) / m0
    Gfull = np.zeros(prob.grid.shape)
    Gfull[prob.interior] = -zs * norm
    sq = kk - cid[0]
    omega_q = float(est_w[cid[1] << sq : (cid[1] + 1) << sq].sum()) * norm if sq >= 0 else float("nan")
    bint = norm * float(w @ phi(prob.ghost_foot[:, 0], prob.ghost_foot[:, 1]))
    gx, gy = _cell_gradient(Gfull, prob.h)
    Xc, Yc = _cell_centers(prob.grid)
    AT = prob.A.T(Xc, Yc)
    fx = AT[..., 0, 0] * gx + AT[..., 0, 1] * gy
    fy = AT[..., 1, 0] * gx + AT[..., 1, 1] * gy
    px, py = gphi(Xc, Yc)
    pts = np.column_stack([Xc.ravel(), Yc.ravel()])
    inside = prob.domain.contains(pts).reshape(Xc.shape)
    inU = u_region.contains(pts).reshape(Xc.shape) & inside
    if not np.any(inU):
        raise ValueError("U_{Q,ε} contains no cell centres; refine the pitch")
    beta = np.array([fx[inU].mean(), fy[inU].mean()])
    h2 = prob.h**2
    I = float(np.sum(np.where(inside, (fx - beta[0]) * px + (fy - beta[1]) * py, 0.0))) * h2
    II = float(np.sum(np.where(~inside, beta[0] * px + beta[1] * py, 0.0))) * h2
    res = abs(bint - (-I + II))
    return IBPResult(cid, bint, I, II, beta, res, grid.sigma(cid), omega_q, prob.h)


# ------------------------------------------------------------------ Kenig-Pipher
def carleson_box_integral(field_: FieldSample, x0: float, r: float, weight=None) -> float:
    """``(1/r) ∬_{[x0, x0+r] × (0, r)} |∇u|² t`` by the cell-centre rule with corner gradients."""
    known = field_.mask | getattr(field_, "ghost", False)
    gx, gy = _cell_gradient(np.where(known, field_.values, np.nan), field_.h)
    Xc, Yc = _cell_centers(field_.grid)
    sel = (Xc > x0) & (Xc < x0 + r) & (Yc > 0) & (Yc < r)
    vals = (gx**2 + gy**2) * Yc
    if weight is not None:
        vals = vals * weight(Xc, Yc)
    v = vals[sel]
    if np.any(~np.isfinite(v)):
        raise ValueError("Carleson box leaves the sampled field")
    return float(np.sum(v)) * field_.h**2 / r


def coefficient_carleson_norm(A: CoefficientField, ladder, x0s=None, n: int = 4096) -> float:
    """``sup_Q (1/|Q|) ∬_{R_Q} |∇A|² t`` for ``A`` depending on ``t`` only, over the ladder of sides."""
    best = 0.0
    for r in ladder:
        # |∇A|² t is independent of x, so the average over Q is a 1-D integral in t
        t = (np.arange(n) + 0.5) * (r / n)
        g = A.gradient(np.zeros_like(t), t)
        val = float(np.sum(np.sum(g**2, axis=(-3, -2, -1)) * t)) * (r / n)
        best = max(best, val)
    return best


@dataclass
class KPResult:
    sup: float
    values: dict[float, float]
    mu: float
    nu: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.sup <= self.bound


def kenig_pipher_carleson(u: FieldSample, A: CoefficientField, ladder, center: float = 0.0, drift_norm: float = 0.0, factor: float = 3.0) -> KPResult:
    """Sup over ``Q = [c - r/2, c + r/2]`` of ``(1/|Q|)∬_{R_Q}|∇u|² t`` against ``factor·(1 + ‖μ‖_C + ‖ν‖_C)``."""
    vals = u.values[u.mask]
    if np.max(np.abs(vals)) > 1 + 1e-9:
        raise ValueError("u must satisfy ‖u‖_∞ <= 1")
    values = {r: carleson_box_integral(u, center - r / 2, r) for r in ladder}
    mu = coefficient_carleson_norm(A, ladder)
    sup = max(values.values())
    return KPResult(sup, values, mu, drift_norm, factor * (1 + mu + drift_norm))
