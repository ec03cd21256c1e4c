"""Dyadic cube trees on polyline boundaries.

Cubes of generation ``k`` are the arcs ``[j, j+1]·L·2^-k`` of the concatenated
arc-length parametrization of the boundary (total length ``L``), so generation 0
is the whole boundary and every cube has exactly two children.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .geometry import Domain, point_segment_distance, segment_ball_interval, segment_rect_distance

CubeId = tuple[int, int]


class ResolutionError(ValueError):
    """The requested scale is finer than the grid (or the boundary) supports."""


@dataclass
class DyadicCube:
    id: CubeId
    sigma: float
    parent: CubeId | None = None
    children: list[CubeId] = field(default_factory=list)
    s0: float = 0.0
    s1: float = 0.0
    length: float = 0.0
    center: np.ndarray | None = None
    radius: float = 0.0
    inner: float = 0.0
    diam: float = 0.0

    @property
    def k(self) -> int:
        return self.id[0]

    @property
    def label(self) -> str:
        return f"{self.id[0]}:{self.id[1]}"


def parse_label(label: str) -> CubeId:
    k, j = label.split(":")
    return int(k), int(j)


class CubeTree:
    """Rooted tree of cubes carrying a measure ``sigma``.

    Used both for boundary grids and for purely combinatorial trees.
    """

    def __init__(self, cubes: dict[CubeId, DyadicCube], root: CubeId = (0, 0)):
        self.cubes = cubes
        self.root = root
        self.depth = max(k for k, _ in cubes)
        self._gens: dict[int, list[CubeId]] = {}
        for cid in sorted(cubes):
            self._gens.setdefault(cid[0], []).append(cid)

    def __getitem__(self, cid: CubeId) -> DyadicCube:
        return self.cubes[cid]

    def __iter__(self) -> Iterator[DyadicCube]:
        return iter(self.cubes[c] for c in sorted(self.cubes))

    def __len__(self) -> int:
        return len(self.cubes)

    def generation(self, k: int) -> list[CubeId]:
        return list(self._gens.get(k, []))

    def sigma(self, cid: CubeId) -> float:
        return self.cubes[cid].sigma

    def children(self, cid: CubeId) -> list[CubeId]:
        return self.cubes[cid].children

    def parent(self, cid: CubeId) -> CubeId | None:
        return self.cubes[cid].parent

    def descendants(self, cid: CubeId, include_self: bool = True) -> list[CubeId]:
        """``D_Q``: all cubes contained in ``cid`` (pre-order)."""
        out = []
        stack = [cid]
        while stack:
            c = stack.pop()
            out.append(c)
            stack.extend(reversed(self.cubes[c].children))
        return out if include_self else out[1:]

    def ancestors(self, cid: CubeId) -> list[CubeId]:
        out = []
        p = self.cubes[cid].parent
        while p is not None:
            out.append(p)
            p = self.cubes[p].parent
        return out

    def contains(self, big: CubeId, small: CubeId) -> bool:
        """Whether ``small ⊆ big`` in the tree."""
        kb, jb = big
        ks, js = small
        return ks >= kb and (js >> (ks - kb)) == jb if self._binary else (
            big == small or big in self.ancestors(small)
        )

    @property
    def _binary(self) -> bool:
        return getattr(self, "binary", False)

    def leaves(self) -> list[CubeId]:
        return [c for c in sorted(self.cubes) if not self.cubes[c].children]

    def postorder(self, cid: CubeId | None = None) -> list[CubeId]:
        order = self.descendants(self.root if cid is None else cid)
        return order[::-1]

    @classmethod
    def binary(cls, depth: int, sigma: float = 1.0, splits: dict | None = None) -> "CubeTree":
        """Full binary tree of the given depth; ``splits[id]`` is the left child's σ share."""
        cubes: dict[CubeId, DyadicCube] = {(0, 0): DyadicCube((0, 0), sigma)}
        for k in range(depth):
            for j in range(2**k):
                q = cubes[(k, j)]
                f = 0.5 if splits is None else splits.get((k, j), 0.5)
                for b, share in ((0, f), (1, 1 - f)):
                    cid = (k + 1, 2 * j + b)
                    cubes[cid] = DyadicCube(cid, q.sigma * share, parent=(k, j))
                    q.children.append(cid)
        t = cls(cubes)
        t.binary = True
        return t


class DyadicGrid(CubeTree):
    """Arc-length dyadic grid on the boundary of a domain.

    Attributes
    ----------
    scale : ``ℓ`` of the generation-0 cube, the diameter of ``∂Ω``; ``ℓ(Q) = scale·2^-k``.
    a0 : min over cubes of ``dist(x_Q, ∂Ω∖Q)/ℓ(Q)`` (capped at 2).
    C1 : max over cubes of ``diam(Q)/ℓ(Q)``.
    c, C : cube-ball constants with ``c·ℓ(Q) <= r_Q <= ℓ(Q)`` and ``Q ⊆ B(x_Q, C·r_Q)``.
    """

    binary = True

    def __init__(self, domain: Domain, cubes: dict[CubeId, DyadicCube]):
        super().__init__(cubes)
        self.domain = domain
        self.scale = domain.diameter
        cs = list(cubes.values())
        self.a0 = min(q.inner / q.length for q in cs)
        self.C1 = max(q.diam / q.length for q in cs)
        self.c = min(q.radius / q.length for q in cs)
        self.C = max(_max_dist(domain, q) / q.radius for q in cs) * (1 + 1e-9)

    def ell(self, k: int) -> float:
        return self.scale * 2.0**-k

    def arc(self, k: int) -> float:
        """Arc length (σ-measure) of every generation-``k`` cube."""
        return self.domain.length * 2.0**-k

    def pieces(self, cid: CubeId):
        q = self.cubes[cid]
        return self.domain.arc_pieces(q.s0, q.s1)

    def cube_of_param(self, s, k: int) -> np.ndarray:
        """Index ``j`` of the generation-``k`` cube containing arc parameter ``s``."""
        j = np.floor(np.asarray(s) / self.arc(k)).astype(int)
        return np.clip(j, 0, 2**k - 1)

    def cube_distance(self, cid: CubeId, points) -> np.ndarray:
        """Distance from points to the closed arc ``Q``."""
        a, b = self.pieces(cid)
        p = np.atleast_2d(points)[:, None, :]
        return point_segment_distance(p, a[None], b[None])[0].min(axis=1)

    def rect_distance(self, cid: CubeId, lo, hi) -> np.ndarray:
        """Distance from axis-aligned rectangles to the arc ``Q``."""
        a, b = self.pieces(cid)
        lo = np.atleast_2d(lo)[:, None, :]
        hi = np.atleast_2d(hi)[:, None, :]
        return segment_rect_distance(a[None], b[None], lo, hi).min(axis=1)

    def sample(self, cid: CubeId, n: int) -> np.ndarray:
        q = self.cubes[cid]
        return self.domain.sample_arc(q.s0, q.s1, n)

    def to_json(self) -> dict:
        def node(cid):
            q = self.cubes[cid]
            return {
                "id": q.label,
                "k": q.k,
                "sigma": q.sigma,
                "x_Q": [float(v) for v in q.center],
                "r_Q": q.radius,
                "children": [node(c) for c in q.children],
            }

        return node(self.root)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=False)


def _max_dist(domain: Domain, q: DyadicCube) -> float:
    a, b = domain.arc_pieces(q.s0, q.s1)
    v = np.vstack([a, b])
    return float(np.max(np.linalg.norm(v - q.center, axis=1)))


def _complement_pieces(domain: Domain, s0: float, s1: float):
    a1, b1 = domain.arc_pieces(0.0, s0)
    a2, b2 = domain.arc_pieces(s1, domain.length)
    return np.vstack([a1, a2]), np.vstack([b1, b2])


def build_grid(domain: Domain, depth: int) -> DyadicGrid:
    """Dyadic grid of generations ``0..depth`` on ``∂Ω``."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    L = domain.length
    if np.min(domain.component_lengths) < L * 2.0**-depth:
        raise ResolutionError("a boundary component is shorter than the finest cube length")
    cubes: dict[CubeId, DyadicCube] = {}
    scale = domain.diameter
    for k in range(depth + 1):
        n = 2**k
        ell = scale * 2.0**-k
        for j in range(n):
            s0 = L * j / n
            s1 = L * (j + 1) / n
            x = domain.point_at(0.5 * (s0 + s1))
            ca, cb = _complement_pieces(domain, s0, s1)
            if len(ca):
                rho = float(point_segment_distance(x[None], ca, cb)[0].min())
            else:
                rho = np.inf
            # r_Q = ρ/2 <= ℓ(Q)
            rho = min(rho, 2 * ell)
            a, b = domain.arc_pieces(s0, s1)
            v = np.vstack([a, b])
            diam = _pair_diameter(v)
            cid = (k, j)
            cubes[cid] = DyadicCube(
                cid,
                sigma=s1 - s0,
                parent=None if k == 0 else (k - 1, j // 2),
                children=[] if k == depth else [(k + 1, 2 * j), (k + 1, 2 * j + 1)],
                s0=s0,
                s1=s1,
                length=ell,
                center=x,
                radius=rho / 2,
                inner=rho,
                diam=diam,
            )
    return DyadicGrid(domain, cubes)


def _pair_diameter(v: np.ndarray) -> float:
    if len(v) > 1500:
        from scipy.spatial import ConvexHull

        v = v[ConvexHull(v).vertices]
    d = v[:, None, :] - v[None, :, :]
    return float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", d, d))))


# ------------------------------------------------------------------ checks
@dataclass
class GridReport:
    covering: bool
    covering_error: float
    nesting: bool
    unique_ancestor: bool
    diameter: bool
    inner_ball: bool
    cube_ball: bool
    a0: float
    C1: float
    c: float
    C: float

    @property
    def passed(self) -> bool:
        return all((self.covering, self.nesting, self.unique_ancestor, self.diameter, self.inner_ball, self.cube_ball))


def verify_grid(grid: DyadicGrid, brute_force: bool = True) -> GridReport:
    """Check covering, nesting, unique ancestry, diameter and cube-ball containment."""
    dom = grid.domain
    L = dom.length
    cov_err = max(abs(sum(grid.sigma(c) for c in grid.generation(k)) - L) / L for k in range(grid.depth + 1))
    ids = sorted(grid.cubes)
    nest = True
    uniq = True
    if brute_force:
        for q in ids:
            a = grid[q]
            for p in ids:
                if p[0] < q[0]:
                    continue
                b = grid[p]
                inside = b.s0 >= a.s0 and b.s1 <= a.s1
                apart = b.s0 >= a.s1 or b.s1 <= a.s0
                if not (inside or apart):
                    nest = False
                if inside != grid.contains(q, p):
                    nest = False
        for p in ids:
            b = grid[p]
            for k in range(p[0]):
                owners = [q for q in grid.generation(k) if grid[q].s0 <= b.s0 and b.s1 <= grid[q].s1]
                if len(owners) != 1 or owners[0] not in grid.ancestors(p):
                    uniq = False
    diam_ok = all(q.diam <= grid.C1 * q.length * (1 + 1e-12) for q in grid)
    inner_ok = True
    ball_ok = True
    tol = 1e-9 * L
    # a tangent chord has length ~ sqrt(machine eps) relative to the radius
    tangent = 1e-7 * L
    for q in grid:
        for s_lo, s_hi in dom.ball_intervals(q.center, q.inner):
            # zero-length hits are tangencies of the open ball at a cube endpoint
            if s_hi - s_lo > tangent and (s_lo < q.s0 - tol or s_hi > q.s1 + tol):
                inner_ok = False
        for s_lo, s_hi in dom.ball_intervals(q.center, 2 * q.radius):
            if s_hi - s_lo > tangent and (s_lo < q.s0 - tol or s_hi > q.s1 + tol):
                ball_ok = False
        if not (grid.c * q.length <= q.radius * (1 + 1e-12) and q.radius <= q.length):
            ball_ok = False
        if _max_dist(dom, q) >= grid.C * q.radius:
            ball_ok = False
        pts = grid.sample(q.id, 64)
        if np.any(np.linalg.norm(pts - q.center, axis=1) >= grid.C * q.radius):
            ball_ok = False
    return GridReport(
        covering=cov_err <= 1e-9,
        covering_error=cov_err,
        nesting=nest,
        unique_ancestor=uniq,
        diameter=diam_ok,
        inner_ball=inner_ok,
        cube_ball=ball_ok,
        a0=grid.a0,
        C1=grid.C1,
        c=grid.c,
        C=grid.C,
    )


def _stadium_interval(p0, p1, c0, c1, t):
    """Parameter hull on segment(s) ``p0→p1`` of points within distance ``t`` of segment(s) ``c0c1``."""
    lo = np.full(np.broadcast_shapes(p0.shape[:-1], c0.shape[:-1]), np.inf)
    hi = np.full_like(lo, -np.inf)
    for c in (c0, c1):
        a, b = segment_ball_interval(p0, p1, c, t * (1 + 1e-12))
        ok = b > a
        lo = np.where(ok, np.minimum(lo, a), lo)
        hi = np.where(ok, np.maximum(hi, b), hi)
    # the rectangle part, in the frame of c
    d = c1 - c0
    ln = np.linalg.norm(d, axis=-1)
    u = d / np.where(ln > 0, ln, 1.0)[..., None]
    w = np.stack([-u[..., 1], u[..., 0]], axis=-1)
    rel0 = p0 - c0
    rel1 = p1 - c0
    U0, U1 = np.sum(rel0 * u, -1), np.sum(rel1 * u, -1)
    V0, V1 = np.sum(rel0 * w, -1), np.sum(rel1 * w, -1)
    t0 = np.zeros_like(lo)
    t1 = np.ones_like(lo)
    # a degenerate piece is covered by its end caps alone
    ok = np.broadcast_to(ln > 0, lo.shape).copy()
    for a0, a1, bmin, bmax in ((U0, U1, 0.0, ln), (V0, V1, -t, t)):
        da = a1 - a0
        par = np.abs(da) < 1e-300
        ok &= ~(par & ((a0 < bmin) | (a0 > bmax)))
        with np.errstate(divide="ignore", invalid="ignore"):
            ra = np.where(par, -np.inf, (bmin - a0) / np.where(par, 1, da))
            rb = np.where(par, np.inf, (bmax - a0) / np.where(par, 1, da))
        t0 = np.maximum(t0, np.where(par, 0.0, np.minimum(ra, rb)))
        t1 = np.minimum(t1, np.where(par, 1.0, np.maximum(ra, rb)))
    ok &= t1 > t0
    lo = np.where(ok, np.minimum(lo, t0), lo)
    hi = np.where(ok, np.maximum(hi, t1), hi)
    return lo, hi


def collar_measure(grid: DyadicGrid, cid: CubeId, width: float) -> float:
    """Exact ``H^1({x in Q : dist(x, ∂Ω∖Q) <= width})``."""
    dom = grid.domain
    q = grid[cid]
    pa, pb = dom.arc_pieces(q.s0, q.s1)
    ca, cb = _complement_pieces(dom, q.s0, q.s1)
    if len(ca) == 0:
        return 0.0
    lo_box = np.minimum(pa, pb).min(axis=0) - width
    hi_box = np.maximum(pa, pb).max(axis=0) + width
    near = segment_rect_distance(ca, cb, lo_box, hi_box) <= width
    ca, cb = ca[near], cb[near]
    if len(ca) == 0:
        return 0.0
    lo, hi = _stadium_interval(pa[:, None, :], pb[:, None, :], ca[None], cb[None], width)
    total = 0.0
    lens = np.linalg.norm(pb - pa, axis=1)
    for i in range(len(pa)):
        iv = [(a, b) for a, b in zip(lo[i], hi[i]) if b > a]
        if not iv:
            continue
        iv.sort()
        cur_a, cur_b = iv[0]
        acc = 0.0
        for a, b in iv[1:]:
            if a <= cur_b:
                cur_b = max(cur_b, b)
            else:
                acc += cur_b - cur_a
                cur_a, cur_b = a, b
        acc += cur_b - cur_a
        total += acc * lens[i]
    return total


@dataclass
class ThinBoundaryReport:
    tau: float
    ratios: dict
    max_ratio: float


def thin_boundary_check(grid: DyadicGrid, tau: float) -> ThinBoundaryReport:
    """Per-cube ratio ``H^1({x in Q: dist(x, ∂Ω∖Q) <= τ ℓ(Q)}) / σ(Q)``."""
    if not (0 < tau < grid.a0):
        raise ValueError(f"tau must lie in (0, a0) = (0, {grid.a0:.4g})")
    ratios = {cid: collar_measure(grid, cid, tau * grid[cid].length) / grid.sigma(cid) for cid in sorted(grid.cubes)}
    return ThinBoundaryReport(tau, ratios, max(ratios.values()))


def fit_thin_boundary(grid: DyadicGrid, taus: Iterable[float]) -> tuple[float, float, list[tuple[float, float]]]:
    """Least-squares fit of ``max ratio ≈ C·τ^η``; returns ``(C, η, table)``."""
    table = [(t, thin_boundary_check(grid, t).max_ratio) for t in taus if t < grid.a0]
    pts = np.array([(np.log(t), np.log(r)) for t, r in table if r > 0])
    if len(pts) < 2:
        raise ValueError("need at least two positive ratios to fit")
    eta, logc = np.polyfit(pts[:, 0], pts[:, 1], 1)
    # smallest C making the bound hold at every tested τ
    C = max(r / t**eta for t, r in table)
    return float(C), float(eta), table


def descendants_at_scale(tree: CubeTree, cid: CubeId, eps: float) -> list[CubeId]:
    """Cubes ``Q' ⊆ Q`` with ``ℓ(Q') = ε·ℓ(Q)`` for ``ε = 2^-m``."""
    m = -np.log2(eps)
    if m < 0 or abs(m - round(m)) > 1e-12:
        raise ValueError("eps must be a power 2^-m with m >= 0")
    m = int(round(m))
    if cid[0] + m > tree.depth:
        raise ResolutionError(f"grid depth {tree.depth} too shallow for generation {cid[0] + m}")
    level = [cid]
    for _ in range(m):
        level = [c for q in level for c in tree.children(q)]
    return level
