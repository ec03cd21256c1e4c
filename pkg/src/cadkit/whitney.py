"""Whitney boxes, Whitney regions, Carleson boxes, sawtooths and the cutoff Ψ_N."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.spatial import cKDTree

from .dyadic import CubeId, DyadicGrid, ResolutionError
from .fields import FieldSample, Grid2D
from .geometry import Domain

FAT = {"": 0, "*": 1, "**": 2, "~**": 3, "***": 4}


class ParameterError(ValueError):
    pass


def _key(level, ix, iy):
    return (np.asarray(level, np.int64) << 56) | ((np.asarray(ix, np.int64) + (1 << 27)) << 28) | (np.asarray(iy, np.int64) + (1 << 27))


class WhitneyDecomposition:
    """Maximal dyadic boxes ``I ⊂ Ω`` with ``dist(I, ∂Ω) >= ratio·diam(I)``.

    Boxes finer than ``2^-finest`` are not generated; the region they would cover
    is the truncation zone next to the boundary. With ``window = (lo, hi)`` only boxes
    meeting that rectangle are kept; each kept box is the same as in the full
    decomposition because the selection rule is local to the box.
    """

    def __init__(
        self,
        domain: Domain,
        finest: int = 8,
        lam: float = 0.125,
        ratio: float = 16.0,
        window=None,
    ):
        if not domain.closed:
            raise ValueError("Whitney decomposition needs a closed domain")
        self.domain = domain
        self.lam = lam
        self.ratio = ratio
        self.finest = finest
        self.window = None if window is None else (np.asarray(window[0], float), np.asarray(window[1], float))
        self._build()
        self._adjacency()

    # ---------------------------------------------------------------- build
    def _build(self):
        dom = self.domain
        lo_b, hi_b = dom.bbox
        k = int(math.floor(-math.log2(float(np.max(hi_b - lo_b)))))
        s = 2.0**-k
        ixs = np.arange(math.floor(lo_b[0] / s), math.floor(hi_b[0] / s) + 1)
        iys = np.arange(math.floor(lo_b[1] / s), math.floor(hi_b[1] / s) + 1)
        IX, IY = np.meshgrid(ixs, iys)
        cand = np.column_stack([IX.ravel(), IY.ravel()]).astype(np.int64)
        levels, ix, iy = [], [], []
        self.coarsest = k
        while len(cand) and k <= self.finest:
            s = 2.0**-k
            diam = s * math.sqrt(2)
            lo = cand * s
            if self.window is not None:
                meet = np.all(lo < self.window[1], axis=1) & np.all(lo + s > self.window[0], axis=1)
                cand, lo = cand[meet], lo[meet]
            c = lo + s / 2
            sd = dom.signed_distance(c)
            out = sd <= -diam / 2
            need = self.ratio * diam
            acc = (sd > 0) & (sd - diam / 2 >= need)
            amb = (sd > 0) & ~acc & (sd >= need)
            if np.any(amb):
                d = dom.rect_distance(lo[amb], lo[amb] + s)
                acc[np.nonzero(amb)[0][d >= need]] = True
            levels.append(np.full(int(acc.sum()), k))
            ix.append(cand[acc, 0])
            iy.append(cand[acc, 1])
            split = ~acc & ~out
            base = 2 * cand[split]
            cand = np.concatenate([base + off for off in ((0, 0), (1, 0), (0, 1), (1, 1))])
            k += 1
        self.level = np.concatenate(levels).astype(np.int64)
        self.ix = np.concatenate(ix).astype(np.int64)
        self.iy = np.concatenate(iy).astype(np.int64)
        order = np.lexsort((self.iy, self.ix, self.level))
        self.level, self.ix, self.iy = self.level[order], self.ix[order], self.iy[order]
        self.side = 2.0 ** -self.level.astype(float)
        self.lo = np.column_stack([self.ix * self.side, self.iy * self.side])
        self.center = self.lo + self.side[:, None] / 2
        self.dist = dom.rect_distance(self.lo, self.lo + self.side[:, None])
        self.keys = _key(self.level, self.ix, self.iy)
        self._levels = np.unique(self.level)

    def __len__(self) -> int:
        return len(self.level)

    @property
    def diam(self) -> np.ndarray:
        return self.side * math.sqrt(2)

    def box(self, idx, fat: str = ""):
        """``(lo, hi)`` of the box dilated about its center by ``1 + FAT[fat]·λ``."""
        f = 1 + FAT[fat] * self.lam
        half = f * self.side[idx] / 2
        c = self.center[idx]
        return c - np.asarray(half)[..., None], c + np.asarray(half)[..., None]

    def locate(self, points) -> np.ndarray:
        """Index of the box containing each point, ``-1`` in the truncation zone or outside."""
        p = np.atleast_2d(points)
        out = np.full(len(p), -1, dtype=np.int64)
        for L in self._levels:
            s = 2.0 ** -float(L)
            kk = _key(L, np.floor(p[:, 0] / s).astype(np.int64), np.floor(p[:, 1] / s).astype(np.int64))
            pos = np.searchsorted(self.keys, kk)
            pos = np.minimum(pos, len(self.keys) - 1)
            hit = self.keys[pos] == kk
            out = np.where(hit & (out < 0), pos, out)
        return out

    def _adjacency(self, per_edge: int = 8):
        n = len(self)
        f = (np.arange(per_edge) + 0.5) / per_edge
        eps = 1e-7
        s = self.side[:, None]
        lo = self.lo
        probes, owners, face = [], [], []
        for fx, fy, dx, dy in (
            (f, np.zeros_like(f), 0, -1),
            (f, np.ones_like(f), 0, 1),
            (np.zeros_like(f), f, -1, 0),
            (np.ones_like(f), f, 1, 0),
        ):
            px = lo[:, 0:1] + s * fx[None] + dx * eps * s
            py = lo[:, 1:2] + s * fy[None] + dy * eps * s
            probes.append(np.stack([px, py], -1).reshape(-1, 2))
            owners.append(np.repeat(np.arange(n), per_edge))
            face.append(np.ones(n * per_edge, dtype=bool))
        for cx, cy in ((0, 0), (1, 0), (0, 1), (1, 1)):
            px = lo[:, 0] + s[:, 0] * cx + (2 * cx - 1) * eps * s[:, 0]
            py = lo[:, 1] + s[:, 0] * cy + (2 * cy - 1) * eps * s[:, 0]
            probes.append(np.column_stack([px, py]))
            owners.append(np.arange(n))
            face.append(np.zeros(n, dtype=bool))
        P = np.concatenate(probes)
        O = np.concatenate(owners)
        F = np.concatenate(face)
        hit = self.locate(P)
        ok = (hit >= 0) & (hit != O)
        self.touch = _sym_graph(O[ok], hit[ok], n)
        self.faces = _sym_graph(O[ok & F], hit[ok & F], n)
        self.boundary_probe = np.bincount(O[~(hit >= 0)], minlength=n) > 0

    # -------------------------------------------------------------- checks
    def check(self) -> dict:
        """Exhaustive eqWh1/eqWh2 verification with exact distances."""
        lo4, hi4 = self.center - 2 * self.side[:, None], self.center + 2 * self.side[:, None]
        d4 = self.domain.rect_distance(lo4, hi4)
        diam = self.diam
        lower = bool(np.all(4 * diam <= d4))
        upper = bool(np.all(self.dist <= 40 * diam))
        mono = bool(np.all(d4 <= self.dist))
        rows, cols = self.touch.nonzero()
        ratio = self.side[rows] / self.side[cols]
        band = self.dist / diam
        return {
            "count": len(self),
            "wh1_lower": lower,
            "wh1_upper": upper,
            "dist4_le_dist": mono,
            "max_adjacent_ratio": float(ratio.max()) if len(ratio) else 1.0,
            "wh2": bool(len(ratio) == 0 or ratio.max() <= 4),
            "band": (float(band.min()), float(band.max())),
        }

    def in_union(self, points, boxes, fat: str = "") -> np.ndarray:
        """Whether each point lies in ``∪ I^fat`` over ``boxes``.

        Unfattened boxes tile the window, so membership is that of the half-open box
        holding the point; edges shared by two member boxes then count as inside.
        A fattened box only reaches into boxes it touches, so each point is tested
        against the open box holding it and that box's neighbours.
        """
        p = np.atleast_2d(np.asarray(points, float))
        sel = np.zeros(len(self), dtype=bool)
        sel[np.asarray(boxes, dtype=np.int64)] = True
        out = np.zeros(len(p), dtype=bool)
        idx = self.locate(p)
        ok = idx >= 0
        if FAT[fat] == 0:
            out[ok] = sel[idx[ok]]
            return out
        if np.any(ok):
            M = (self.touch + sparse.identity(len(self), dtype=np.int8, format="csr")).tocsr()
            rows = M[idx[ok]]
            counts = np.diff(rows.indptr)
            pt = np.repeat(np.nonzero(ok)[0], counts)
            j = rows.indices
            keep = sel[j]
            pt, j = pt[keep], j[keep]
            lo, hi = self.box(j, fat)
            inside = np.all((p[pt] > lo) & (p[pt] < hi), axis=1)
            out[np.unique(pt[inside])] = True
        miss = ~ok
        if np.any(miss):
            # truncation zone: only boxes bordering it can reach
            near = np.nonzero(sel & self.boundary_probe)[0]
            if len(near):
                lo, hi = self.box(near, fat)
                q = p[miss]
                reach = float(np.max(hi - lo)) / math.sqrt(2)
                cand = cKDTree((lo + hi) / 2).query_ball_point(q, reach)
                counts = np.fromiter((len(c) for c in cand), dtype=np.int64, count=len(q))
                pt = np.repeat(np.arange(len(q)), counts)
                j = np.fromiter((b for c in cand for b in c), dtype=np.int64, count=int(counts.sum()))
                inside = np.all((q[pt] > lo[j]) & (q[pt] < hi[j]), axis=1)
                hit = np.zeros(len(q), dtype=bool)
                hit[pt[inside]] = True
                out[miss] = hit
        return out

    def area_in(self, lo, hi) -> float:
        """``Σ |I ∩ K|`` for the rectangle ``K = [lo, hi]``."""
        a = np.clip(np.minimum(self.lo + self.side[:, None], hi) - np.maximum(self.lo, lo), 0, None)
        return float(np.sum(a[:, 0] * a[:, 1]))

    def boxes_meeting(self, lo, hi, fat: str = "") -> np.ndarray:
        blo, bhi = self.box(np.arange(len(self)), fat)
        return np.nonzero(np.all(blo < hi, axis=1) & np.all(bhi > lo, axis=1))[0]


def _sym_graph(a, b, n):
    m = sparse.coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n)).tocsr()
    m = ((m + m.T) > 0).astype(np.int8)
    return m.tocsr()


def whitney_decompose(domain: Domain, finest: int = 8, lam: float = 0.125) -> WhitneyDecomposition:
    return WhitneyDecomposition(domain, finest=finest, lam=lam)


def _rect_rect_distance(lo1, hi1, lo2, hi2):
    gap = np.maximum(np.maximum(lo2 - hi1, lo1 - hi2), 0.0)
    return np.linalg.norm(gap, axis=-1)


# ------------------------------------------------------------------ regions
@dataclass
class SawtoothRegion:
    """Union of fattened Whitney boxes; ``boxes`` are indices into the decomposition."""

    root: CubeId
    family: list[CubeId]
    boxes: np.ndarray
    fat: str
    cubes: list[CubeId] = field(default_factory=list, repr=False)
    wd: WhitneyDecomposition | None = field(default=None, repr=False)

    def contains(self, points) -> np.ndarray:
        """Membership in the open union of the fattened boxes."""
        return self.wd.in_union(points, self.boxes, self.fat)

    def area(self) -> float:
        """Exact area of the union of the (disjoint) unfattened boxes."""
        return float(np.sum(self.wd.side[self.boxes] ** 2))

    def perimeter(self) -> float:
        """Length of the polygonal boundary of the union of unfattened boxes."""
        sel = np.zeros(len(self.wd), dtype=bool)
        sel[self.boxes] = True
        total = 0.0
        faces = self.wd.faces
        for b in self.boxes:
            nb = faces.indices[faces.indptr[b] : faces.indptr[b + 1]]
            shared = 0.0
            for j in nb:
                if sel[j]:
                    shared += _shared_edge(self.wd, b, j)
            total += 4 * self.wd.side[b] - shared
        return total

    def to_json(self) -> dict:
        return {
            "root": f"{self.root[0]}:{self.root[1]}",
            "F": [f"{c[0]}:{c[1]}" for c in sorted(self.family)],
            "boxes": [int(b) for b in sorted(self.boxes)],
            "fat": self.fat,
        }


def _shared_edge(wd, a, b) -> float:
    lo1, hi1 = wd.lo[a], wd.lo[a] + wd.side[a]
    lo2, hi2 = wd.lo[b], wd.lo[b] + wd.side[b]
    ov = np.minimum(hi1, hi2) - np.maximum(lo1, lo2)
    return float(max(ov.max(), 0.0)) if ov.min() <= 1e-12 * wd.side[a] else 0.0


class WhitneyRegions:
    """Whitney regions ``U_Q``, Carleson boxes ``T_Q`` and sawtooths on a fixed grid and decomposition.

    ``W*_Q`` collects boxes with ``|k_I - k(Q)| <= k_star`` and ``dist(I, Q) <= K0·2^{-k(Q)}``,
    and is augmented with shortest face-adjacency paths so every box connects to the box
    holding the corkscrew point ``X_Q``.

    ``k(Q) = round(-log2 ℓ(Q)) + k_shift``: with ``dist(I, ∂Ω)/diam(I) ∈ [16, 34]`` the boxes
    at distance ``≈ ℓ(Q)`` from the boundary have side ``≈ 2^-5 ℓ(Q)``, so the default shift
    is ``round(log2(1.5·√2·ratio))``.
    """

    def __init__(
        self,
        grid: DyadicGrid,
        wd: WhitneyDecomposition,
        k_star: int = 2,
        K0: float = 16.0,
        k_shift: int | None = None,
    ):
        if wd.lam >= 0.25:
            raise ParameterError("λ must be small (λ < 1/4)")
        self.grid = grid
        self.wd = wd
        self.k_star = k_star
        self.K0 = K0
        self.k_shift = int(round(math.log2(1.5 * math.sqrt(2) * wd.ratio))) if k_shift is None else k_shift
        self._W: dict[CubeId, np.ndarray] = {}
        self._X: dict[CubeId, np.ndarray] = {}
        self._T: dict[CubeId, np.ndarray] = {}
        self.truncated_X: set[CubeId] = set()

    def k_of(self, cid: CubeId) -> int:
        return int(round(-math.log2(self.grid[cid].length))) + self.k_shift

    def corkscrew(self, cid: CubeId) -> np.ndarray:
        if cid not in self._X:
            from .probe import find_corkscrew

            q = self.grid[cid]
            w = find_corkscrew(self.grid.domain, q.center, min(q.radius, 0.999 * self.grid.domain.diameter))
            if w is None:
                raise ParameterError(f"no corkscrew point for cube {cid}")
            self._X[cid] = w.center
        return self._X[cid]

    def W(self, cid: CubeId) -> np.ndarray:
        """Box indices of ``W*_Q``."""
        if cid in self._W:
            return self._W[cid]
        wd = self.wd
        k = self.k_of(cid)
        reach = self.K0 * 2.0**-k
        a, b = self.grid.pieces(cid)
        qlo = np.minimum(a, b).min(axis=0) - reach
        qhi = np.maximum(a, b).max(axis=0) + reach
        cand = np.nonzero(
            (np.abs(wd.level - k) <= self.k_star)
            & np.all(wd.lo + wd.side[:, None] > qlo, axis=1)
            & np.all(wd.lo < qhi, axis=1)
        )[0]
        if len(cand):
            d = self.grid.rect_distance(cid, wd.lo[cand], wd.lo[cand] + wd.side[cand, None])
            base = cand[d <= reach]
        else:
            base = cand
        X = self.corkscrew(cid)
        start = int(wd.locate(X[None])[0])
        if start < 0:
            # X_Q lies in the truncation zone: use the nearest box
            self.truncated_X.add(cid)
            start = int(np.argmin(np.linalg.norm(wd.center - X, axis=1)))
        members = set(base.tolist()) | {start}
        if len(base):
            order, pred = breadth_first_order(wd.faces, start, directed=False, return_predecessors=True)
            rank = np.full(len(wd), -1)
            rank[order] = np.arange(len(order))
            sub = wd.faces[base][:, base]
            ncomp, lab = connected_components(sub, directed=False)
            for c in range(ncomp):
                comp = base[lab == c]
                reach_ok = comp[rank[comp] >= 0]
                if len(reach_ok) == 0:
                    continue
                tgt = int(reach_ok[np.argmin(rank[reach_ok])])
                while tgt != start and tgt >= 0:
                    members.add(tgt)
                    tgt = int(pred[tgt])
        out = np.array(sorted(members), dtype=np.int64)
        if len(out) == 0:
            raise ParameterError("empty Whitney region; raise k_star or K0")
        self._W[cid] = out
        return out

    def U(self, cid: CubeId, fat: str = "*") -> SawtoothRegion:
        return SawtoothRegion(cid, [], self.W(cid), fat, [cid], self.wd)

    def carleson_box(self, cid: CubeId, fat: str = "*") -> SawtoothRegion:
        """``T_Q``: union of ``U_{Q'}`` over ``Q' ⊆ Q``."""
        return self.sawtooth([], cid, fat)

    def sawtooth(self, family, cid: CubeId, fat: str = "*") -> SawtoothRegion:
        """``Ω_{F,Q}``: union of ``U_{Q'}`` over ``Q' ∈ D_{F,Q}``."""
        from .carleson import _check_disjoint, sawtooth_cubes

        family = sorted(family)
        _check_disjoint(self.grid, family, cid)
        cubes = sawtooth_cubes(self.grid, family, cid)
        boxes = np.unique(np.concatenate([self.W(c) for c in cubes]))
        return SawtoothRegion(cid, family, boxes, fat, cubes, self.wd)

    def augment_family(self, family, rho: float, root: CubeId) -> list[CubeId]:
        """``F(ρ)``: maximal cubes of ``D_F`` (under ``root``) with ``ℓ(Q) <= ρ``.

        Then ``D_{F(ρ)} = {Q ∈ D_F : ℓ(Q) > ρ}``.
        """
        from .carleson import sawtooth_cubes

        saw = set(sawtooth_cubes(self.grid, family, root))
        out = set(family)
        for c in saw:
            if self.grid[c].length <= rho:
                p = self.grid.parent(c)
                if p is None or self.grid[p].length > rho and p in saw:
                    out.add(c)
        # drop family members now contained in a larger stopping cube
        fam = sorted(out)
        keep = [c for c in fam if not any(a in out for a in self.grid.ancestors(c))]
        return keep

    def u_q_eps(self, cid: CubeId, eps: float, fat: str = "*") -> SawtoothRegion:
        """``U_{Q,ε} = Ω_{F0(εℓ(Q)), Q}`` with ``F0 = ∅``."""
        m = -math.log2(eps)
        if abs(m - round(m)) > 1e-12 or m < 0:
            raise ValueError("eps must be 2^-m")
        if cid[0] + round(m) > self.grid.depth:
            raise ResolutionError("grid too shallow for this ε")
        fam = self.augment_family([], eps * self.grid[cid].length, cid)
        return self.sawtooth(fam, cid, fat)

    def kappa0(self, cubes=None, fat: str = "**") -> float:
        """Smallest ``κ0`` with ``T_Q^{fat} ⊆ κ0·B_Q`` over the given cubes."""
        cubes = sorted(self.grid.cubes) if cubes is None else cubes
        best = 0.0
        for c in cubes:
            t = self.carleson_box(c, fat)
            lo, hi = self.wd.box(t.boxes, fat)
            q = self.grid[c]
            far = np.maximum(np.abs(lo - q.center), np.abs(hi - q.center))
            best = max(best, float(np.max(np.linalg.norm(far, axis=1))) / q.radius)
        return best

    def tent_containment(self, cid: CubeId, kappa0: float) -> bool:
        """``T_Q ⊆ T_Q^* ⊆ T_Q^{**} ⊆ κ0 B_Q ∩ Ω̄`` checked on box corners and centers."""
        q = self.grid[cid]
        t = self.carleson_box(cid, "")
        ok = True
        for fat in ("", "*", "**"):
            lo, hi = self.wd.box(t.boxes, fat)
            corners = np.concatenate([lo, hi, np.column_stack([lo[:, 0], hi[:, 1]]), np.column_stack([hi[:, 0], lo[:, 1]])])
            ok &= bool(np.all(np.linalg.norm(corners - q.center, axis=1) <= kappa0 * q.radius * (1 + 1e-12)))
            ok &= bool(np.all(self.wd.domain.signed_distance(corners) >= 0))
        return ok

    def nearest_cube(self, box: int) -> CubeId:
        return nearest_cube(self.wd, box, self.grid)

    def overlap_multiplicity(self, regions: list[SawtoothRegion], probe: Grid2D) -> int:
        pts = probe.points()
        count = np.zeros(len(pts), dtype=int)
        for r in regions:
            count += r.contains(pts)
        return int(count.max()) if len(count) else 0


def nearest_cube(wd: WhitneyDecomposition, box: int, grid: DyadicGrid) -> CubeId:
    """``Q_I*``: cube with ``ℓ(Q) ≈ ℓ(I)`` containing a boundary point nearest to ``I``.

    The generation is the one whose cube length is closest to ``ℓ(I)`` in log scale;
    ties at cube endpoints go to the lowest cube id.
    """
    dom = wd.domain
    lo, hi = wd.lo[box], wd.lo[box] + wd.side[box]
    from .geometry import segment_rect_distance, point_segment_distance

    d = segment_rect_distance(dom.seg_a, dom.seg_b, lo, hi)
    j = int(np.argmin(d))
    a, b = dom.seg_a[j], dom.seg_b[j]
    corners = np.array([lo, hi, [lo[0], hi[1]], [hi[0], lo[1]]])
    cd, ct = point_segment_distance(corners, a[None], b[None])
    ends = np.array([0.0, 1.0])
    ed = np.array([segment_rect_distance(a, a, lo, hi), segment_rect_distance(b, b, lo, hi)])
    cand_t = np.concatenate([ct, ends])
    cand_d = np.concatenate([cd, ed])
    t = float(cand_t[np.argmin(cand_d)])
    s = dom.seg_s0[j] + t * dom.seg_len[j]
    k = int(np.clip(round(math.log2(grid.scale / wd.side[box])), 0, grid.depth))
    arc = grid.arc(k)
    jj = int(np.clip(math.floor(s / arc), 0, 2**k - 1))
    if jj > 0 and abs(s - jj * arc) <= 1e-12 * dom.length:
        jj -= 1
    return (k, jj)


# ------------------------------------------------------------------ cutoff
def smoothstep_c2(t):
    """C^2 transition: 1 for t <= 0, 0 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    return 1.0 - t**3 * (10 - 15 * t + 6 * t**2)


def box_bump(wd: WhitneyDecomposition, idx: int, pts: np.ndarray) -> np.ndarray:
    """Tensor bump equal to 1 on ``I**`` and 0 off ``(1+3λ)I``."""
    c = wd.center[idx]
    a = (1 + 2 * wd.lam) * wd.side[idx] / 2
    b = (1 + 3 * wd.lam) * wd.side[idx] / 2
    u = (np.abs(pts - c) - a) / (b - a)
    return smoothstep_c2(u[:, 0]) * smoothstep_c2(u[:, 1])


@dataclass
class CutoffResult:
    psi: FieldSample
    boundary_boxes: np.ndarray
    interior_boxes: np.ndarray
    lower_constant: float
    gradient_constant: float
    boundary_sum_ratio: float
    partition_error: float
    flat_gradient_max: float


def check_fattening(wd: WhitneyDecomposition, boxes=None) -> None:
    """Raise if ``(1+4λ)I`` meets ``(1+3λ)J`` for some non-touching nearby pair."""
    boxes = np.arange(len(wd)) if boxes is None else np.asarray(boxes)
    T = wd.touch
    T2 = (T @ T).tocsr()
    for i in boxes:
        ring = set(T2.indices[T2.indptr[i] : T2.indptr[i + 1]]) - set(T.indices[T.indptr[i] : T.indptr[i + 1]]) - {i}
        if not ring:
            continue
        ring = np.array(sorted(ring))
        lo1, hi1 = wd.box(i, "***")
        lo2, hi2 = wd.box(ring, "~**")
        if np.any(_rect_rect_distance(lo1, hi1, lo2, hi2) <= 0):
            raise ParameterError(f"λ = {wd.lam} too large: fattened boxes overlap around box {i}")


def cutoff_partition(region: SawtoothRegion, grid: Grid2D, sigma_root: float) -> CutoffResult:
    """``Ψ_N = Σ_{I ∈ W_N} φ_I / Σ_{I ∈ W} φ_I`` sampled on ``grid``."""
    wd = region.wd
    WN = np.asarray(region.boxes)
    inN = np.zeros(len(wd), dtype=bool)
    inN[WN] = True
    check_fattening(wd, WN)
    T = wd.touch
    nbr = np.unique(np.concatenate([T.indices[T.indptr[i] : T.indptr[i + 1]] for i in WN])) if len(WN) else WN
    involved = np.union1d(WN, nbr)
    touches_out = np.array([np.any(~inN[T.indices[T.indptr[i] : T.indptr[i + 1]]]) or wd.boundary_probe[i] for i in WN], dtype=bool)
    WS = WN[touches_out]
    Wint = WN[~touches_out]
    num = np.zeros(grid.shape)
    den = np.zeros(grid.shape)
    x, y = grid.x, grid.y
    for i in involved:
        lo, hi = wd.box(i, "~**")
        ia, ib = np.searchsorted(x, lo[0]), np.searchsorted(x, hi[0], side="right")
        ja, jb = np.searchsorted(y, lo[1]), np.searchsorted(y, hi[1], side="right")
        if ia >= ib or ja >= jb:
            continue
        X, Y = np.meshgrid(x[ia:ib], y[ja:jb])
        v = box_bump(wd, i, np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
        den[ja:jb, ia:ib] += v
        if inN[i]:
            num[ja:jb, ia:ib] += v
    psi = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    field_ = FieldSample(grid, psi)
    pts = grid.points()
    # (i) lower bound on ∪ I* over W_N
    star = SawtoothRegion(region.root, region.family, WN, "*", wd=wd).contains(pts) & (wd.domain.signed_distance(pts) > 0)
    lower = float(psi.ravel()[star].min()) if np.any(star) else float("nan")
    gx, gy = field_.gradient()
    gnorm = np.hypot(gx, gy).ravel()
    delta = np.abs(wd.domain.signed_distance(pts))
    inside = wd.domain.signed_distance(pts) > 0
    gc = float(np.nanmax(np.where(inside, gnorm * delta, 0.0)))
    # (iii) flat on I*** for interior boxes
    flat = 0.0
    if len(Wint):
        reg3 = SawtoothRegion(region.root, region.family, Wint, "***", wd=wd)
        # only nodes whose whole difference stencil stays in the flat zone
        ok = np.isfinite(gnorm) & reg3.contains(pts)
        for d in ((grid.h, 0.0), (-grid.h, 0.0), (0.0, grid.h), (0.0, -grid.h)):
            ok &= reg3.contains(pts + np.array(d))
        flat = float(np.max(gnorm[ok])) if np.any(ok) else 0.0
    bsum = float(np.sum(wd.side[WS])) / sigma_root
    # partition of unity Σ_I Φ_I = 1 on ∪ I** inside the sawtooth
    dbl = SawtoothRegion(region.root, region.family, WN, "**", wd=wd).contains(pts) & inside
    part = _partition_error(den, dbl)
    return CutoffResult(field_, WS, Wint, lower, gc, bsum, part, flat)


def _partition_error(den, sel) -> float:
    """Partition-of-unity defect on the selected nodes.

    ``Σ_J φ_J/Σφ = 1`` wherever some bump is positive, so the defect is 0 when every
    selected node is covered and ``inf`` otherwise.
    """
    d = den.ravel()[sel]
    return 0.0 if np.all(d > 0) else float("inf")


def poincare_check(region: SawtoothRegion, f: FieldSample, p: float, ell: float) -> float:
    """``‖f - mean‖_p / (ℓ(Q)·‖∇f‖_p)`` over grid nodes of the region (0 when both vanish)."""
    pts = f.grid.points()
    sel = region.contains(pts) & f.mask.ravel()
    if not np.any(sel):
        raise ValueError("region contains no grid nodes")
    v = f.values.ravel()[sel]
    gx, gy = f.gradient()
    g = np.hypot(gx.ravel()[sel], gy.ravel()[sel])
    g = np.nan_to_num(g)
    num = np.mean(np.abs(v - v.mean()) ** p) ** (1 / p)
    den = ell * np.mean(g**p) ** (1 / p)
    if den == 0:
        return 0.0 if num <= 1e-14 else float("inf")
    return float(num / den)
