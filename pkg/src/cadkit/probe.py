"""Corkscrew, exterior corkscrew and Harnack chain probes, domain classification."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .dyadic import CubeId, DyadicGrid
from .geometry import Domain

ABSENT_BELOW = 1.0 / 128
MAX_FINEST = 9  # Whitney levels beyond this are bridged, not built


@dataclass
class CorkscrewWitness:
    center: np.ndarray
    radius: float
    c: float
    x: np.ndarray
    r: float


def _disk_lattice(r: float, n: int) -> np.ndarray:
    """Offsets ``(i, j)·r/n`` with ``|offset| < r``."""
    i = np.arange(-n, n + 1)
    I, J = np.meshgrid(i, i)
    off = np.column_stack([I.ravel(), J.ravel()]) * (r / n)
    return off[np.linalg.norm(off, axis=1) < r]


def find_corkscrew(domain: Domain, x, r: float, pitch: int = 64) -> CorkscrewWitness | None:
    """Maximize ``c`` with ``B(X, c r) ⊆ B(x, r) ∩ Ω`` over candidates on a grid of pitch ``r/pitch``."""
    if not 0 < r < domain.diameter:
        raise ValueError("need 0 < r < diam(∂Ω)")
    x = np.asarray(x, dtype=float)
    off = _disk_lattice(r, pitch)
    p = x + off
    room = r - np.linalg.norm(off, axis=1)
    sd = domain.signed_distance(p)
    val = np.minimum(sd, room)
    k = int(np.argmax(val))
    c = float(val[k]) / r
    if c < ABSENT_BELOW:
        return None
    return CorkscrewWitness(p[k], c * r, c, x, r)


def verify_witness(domain: Domain, w: CorkscrewWitness, n: int = 10_000, seed: int = 0) -> bool:
    """Rejection-sample the witness ball and confirm it sits in ``B(x, r) ∩ Ω``."""
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0, 2 * np.pi, n)
    rad = w.radius * np.sqrt(rng.uniform(0, 1, n))
    pts = w.center + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    inside = domain.contains(pts) & (np.linalg.norm(pts - w.x, axis=1) < w.r)
    margin = domain.signed_distance(w.center[None])[0] >= w.radius * (1 - 1e-12)
    return bool(np.all(inside) and margin)


@dataclass
class ExteriorResult:
    cube: CubeId
    c0: float
    passed: bool
    c_achieved: float
    z: np.ndarray | None
    point: np.ndarray | None


def exterior_corkscrew_check(grid: DyadicGrid, cid: CubeId, c0: float, nz: int = 64, pitch: int = 16) -> ExteriorResult:
    """Search ``z ∈ Δ_Q`` and ``X⁻ ∈ B(z, r_Q/4) ∖ Ω̄`` maximizing the exterior ball radius over ``ℓ(Q)``.

    The search stops early once ``c0`` is reached; ``c_achieved`` is then a lower bound
    for the best value, which is enough for the verdict.
    """
    dom = grid.domain
    q = grid[cid]
    R = q.radius / 4
    zs = grid.sample(cid, max(nz, 64))
    off = _disk_lattice(R, pitch)
    room = R - np.linalg.norm(off, axis=1)
    best, bz, bx = -np.inf, None, None
    for z in zs:
        p = z + off
        val = np.minimum(-dom.signed_distance(p), room) / q.length
        k = int(np.argmax(val))
        if val[k] > best:
            best, bz, bx = float(val[k]), z, p[k]
        if best >= c0:
            break
    return ExteriorResult(cid, c0, bool(best >= c0), best, bz, bx)


def bad_cubes(grid: DyadicGrid, c0: float, cubes=None) -> set[CubeId]:
    """``B(c0)``: cubes failing the ``c0``-exterior corkscrew check."""
    cubes = sorted(grid.cubes) if cubes is None else cubes
    return {c for c in cubes if not exterior_corkscrew_check(grid, c, c0).passed}


def witness_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cube_id", "c0", "pass", "c_achieved", "x", "y"])
    for r in results:
        px, py = (r.point if r.point is not None else (float("nan"), float("nan")))
        w.writerow([f"{r.cube[0]}:{r.cube[1]}", repr(r.c0), int(r.passed), f"{r.c_achieved:.12g}", f"{px:.12g}", f"{py:.12g}"])
    return buf.getvalue()


# ------------------------------------------------------------------ Harnack
@dataclass
class HarnackChain:
    centers: np.ndarray
    radii: np.ndarray
    X: np.ndarray
    Xp: np.ndarray
    Lambda: float
    C: float
    boxes: list[int] = field(default_factory=list)

    @property
    def N(self) -> int:
        return len(self.radii)

    def valid(self, domain: Domain) -> bool:
        c, r = self.centers, self.radii
        ok = np.linalg.norm(self.X - c[0]) < r[0] and np.linalg.norm(self.Xp - c[-1]) < r[-1]
        gaps = np.linalg.norm(np.diff(c, axis=0), axis=1)
        ok &= bool(np.all(gaps < r[:-1] + r[1:]))
        d = domain.signed_distance(c) - r
        ratio = d / (2 * r)
        ok &= bool(np.all(ratio > 0) and np.all(ratio <= self.C * (1 + 1e-12)) and np.all(ratio >= (1 - 1e-12) / self.C))
        return bool(ok)


def harnack_chain(domain: Domain, X, Xp, wd=None) -> HarnackChain | None:
    """Chain of balls ``B(p, δ(p)/2)`` joining ``X`` to ``X'``.

    Waypoints are the centers of a shortest face-adjacent path of Whitney boxes; the
    chain keeps a waypoint only when the previous ball would not reach the next one.
    """
    X = np.asarray(X, float)
    Xp = np.asarray(Xp, float)
    dX, dXp = domain.signed_distance(np.vstack([X, Xp]))
    if dX <= 0 or dXp <= 0:
        raise ValueError("endpoints must lie inside the domain")
    lam = np.linalg.norm(X - Xp) / min(dX, dXp)
    if np.allclose(X, Xp):
        return HarnackChain(X[None], np.array([dX / 2]), X, Xp, 0.0, 1.0)
    if wd is None:
        from .whitney import WhitneyDecomposition

        wd = WhitneyDecomposition(domain, finest=_finest_for(domain, min(dX, dXp)))
    head, a = _bridge(domain, wd, X)
    tail, b = _bridge(domain, wd, Xp)
    path = _box_path(wd, a, b)
    if path is None:
        return None
    way = np.vstack([head, wd.center[path], tail[::-1]])
    rad = domain.signed_distance(way) / 2
    keep = [0]
    i = 0
    while i < len(way) - 1:
        reach = np.linalg.norm(way[i + 1 :] - way[i], axis=1) < rad[i] + rad[i + 1 :]
        j = i + 1 + int(np.nonzero(reach)[0].max()) if np.any(reach) else i + 1
        keep.append(j)
        i = j
    centers, radii = way[keep], rad[keep]
    # dist(B, ∂Ω) = δ/2 = radius and diam = 2·radius for every ball
    return HarnackChain(centers, radii, X, Xp, float(lam), 2.0, [int(p) for p in path])


def _finest_for(domain: Domain, delta: float) -> int:
    # boxes must exist at distance delta: side <= delta / (34·√2)
    return min(int(math.ceil(-math.log2(delta / (48 * math.sqrt(2))))) + 1, MAX_FINEST)


def _bridge(domain: Domain, wd, p, max_steps: int = 400):
    """Walk from ``p`` away from its nearest boundary point until a Whitney box is hit.

    Each step has length ``δ/2``, so consecutive balls ``B(·, δ/2)`` overlap. Returns the
    waypoints (starting with ``p``) and the box reached; if no box is reached the nearest
    box is used.
    """
    pts = [np.asarray(p, float)]
    q = pts[0]
    for _ in range(max_steps):
        b = int(wd.locate(q[None])[0])
        if b >= 0:
            return np.array(pts), b
        foot, _, d = domain.project(q[None])
        n = (q - foot[0]) / max(d[0], 1e-300)
        q = q + 0.5 * d[0] * n
        if domain.signed_distance(q[None])[0] <= 0:
            break
        pts.append(q)
    return np.array(pts[:1]), _box_of(wd, pts[0])


def _box_of(wd, p) -> int:
    b = int(wd.locate(np.asarray(p)[None])[0])
    if b < 0:
        b = int(np.argmin(np.linalg.norm(wd.center - p, axis=1)))
    return b


def _box_path(wd, a: int, b: int):
    if a == b:
        return [a]
    _, pred = shortest_path(wd.faces, method="D", unweighted=True, directed=False, indices=a, return_predecessors=True)
    if pred[b] < 0:
        return None
    path = [b]
    while path[-1] != a:
        path.append(int(pred[path[-1]]))
    return path[::-1]


# ------------------------------------------------------------------ classify
@dataclass
class Classification:
    corkscrew_constant: float
    exterior_constant: float
    harnack: list[tuple[float, int]]
    harnack_slope: float
    verdict: str
    interior_ok: bool
    exterior_ok: bool
    harnack_ok: bool
    exterior_failures: dict[int, list[CubeId]]

    def to_json(self) -> dict:
        return {
            "corkscrew_constant": self.corkscrew_constant,
            "exterior_constant": self.exterior_constant,
            "harnack": [[lam, n] for lam, n in self.harnack],
            "harnack_slope": self.harnack_slope,
            "verdict": self.verdict,
            "exterior_failures": {str(k): [f"{c[0]}:{c[1]}" for c in v] for k, v in self.exterior_failures.items()},
        }


def classify(
    domain: Domain,
    grid: DyadicGrid,
    scales,
    c0: float = 1 / 32,
    harnack_bound: float = 8.0,
    wd=None,
) -> Classification:
    """Probe corkscrews, exterior corkscrews and Harnack chains at the cube generations ``scales``.

    Interior corkscrews are tested on ``Δ(x_Q, r_Q)``. Harnack chains join corkscrew points of
    neighbouring cubes in each generation and of each cube and its parent. The chain test
    passes when every chain exists and ``N <= harnack_bound·(1 + log2(1 + Λ))``.
    """
    cork, ext = [], []
    points: dict[CubeId, np.ndarray] = {}
    failures: dict[int, list[CubeId]] = {}
    interior_ok = True
    for k in scales:
        for cid in grid.generation(k):
            q = grid[cid]
            r = min(q.radius, 0.999 * domain.diameter)
            w = find_corkscrew(domain, q.center, r)
            if w is None:
                interior_ok = False
                cork.append(0.0)
            else:
                cork.append(w.c)
                points[cid] = w.center
            res = exterior_corkscrew_check(grid, cid, c0)
            ext.append(res.c_achieved)
            if not res.passed:
                failures.setdefault(k, []).append(cid)
    if wd is None and points:
        from .whitney import WhitneyDecomposition

        dmin = float(np.min(domain.signed_distance(np.array(list(points.values())))))
        wd = WhitneyDecomposition(domain, finest=_finest_for(domain, dmin))
    table = []
    harnack_ok = True
    pairs = []
    for k in scales:
        gen = [c for c in grid.generation(k) if c in points]
        pairs += list(zip(gen, gen[1:]))
        pairs += [(c, grid.parent(c)) for c in gen if grid.parent(c) in points]
    for a, b in pairs:
        ch = harnack_chain(domain, points[a], points[b], wd)
        if ch is None:
            table.append((float("inf"), -1))
            harnack_ok = False
            continue
        table.append((ch.Lambda, ch.N))
        if ch.N > harnack_bound * (1 + math.log2(1 + ch.Lambda)):
            harnack_ok = False
    slope = 0.0
    finite = [(lam, n) for lam, n in table if n > 0]
    if len(finite) >= 2:
        xs = np.log2(1 + np.array([t[0] for t in finite]))
        ys = np.array([t[1] for t in finite], float)
        if np.ptp(xs) > 0:
            slope = float(np.polyfit(xs, ys, 1)[0])
    exterior_ok = not failures
    if interior_ok and harnack_ok:
        verdict = "CAD" if exterior_ok else "1-sided CAD"
    else:
        verdict = "neither"
    return Classification(
        float(min(cork)) if cork else float("nan"),
        float(min(ext)) if ext else float("nan"),
        table,
        slope,
        verdict,
        interior_ok,
        exterior_ok,
        harnack_ok,
        failures,
    )


def consecutive_failure_scales(failures: dict[int, list]) -> int:
    """Longest run of consecutive generations with at least one exterior failure."""
    ks = sorted(failures)
    best = run = 0
    for i, k in enumerate(ks):
        run = run + 1 if i and k == ks[i - 1] + 1 else 1
        best = max(best, run)
    return best
