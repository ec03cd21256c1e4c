"""Polyline boundaries, signed distance, surface balls and Ahlfors-regularity probes."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree


class GeometryError(ValueError):
    """Raised for malformed domains or out-of-range geometric queries."""


class InvalidDomainError(GeometryError):
    pass


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Distance from points ``p`` to segments ``[a, b]`` (broadcasting).

    Returns ``(dist, t)`` where ``t`` in [0, 1] is the foot parameter.
    """
    ab = b - a
    ap = p - a
    den = np.einsum("...i,...i->...", ab, ab)
    den = np.where(den > 0, den, 1.0)
    t = np.clip(np.einsum("...i,...i->...", ap, ab) / den, 0.0, 1.0)
    foot = a + t[..., None] * ab
    return np.linalg.norm(p - foot, axis=-1), t


def segment_rect_distance(a, b, lo, hi) -> np.ndarray:
    """Euclidean distance between segment(s) ``[a,b]`` and axis-aligned rectangle(s) ``[lo, hi]``.

    All arguments broadcast; the last axis holds coordinates.
    """
    a, b, lo, hi = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, lo, hi)))
    d = np.minimum(_point_rect_distance(a, lo, hi), _point_rect_distance(b, lo, hi))
    corners = (
        lo,
        hi,
        np.stack([lo[..., 0], hi[..., 1]], axis=-1),
        np.stack([hi[..., 0], lo[..., 1]], axis=-1),
    )
    for c in corners:
        d = np.minimum(d, point_segment_distance(c, a, b)[0])
    hit = _segment_hits_rect(a, b, lo, hi)
    return np.where(hit, 0.0, d)


def _point_rect_distance(p, lo, hi):
    q = np.maximum(np.maximum(lo - p, p - hi), 0.0)
    return np.linalg.norm(q, axis=-1)


def _segment_hits_rect(a, b, lo, hi):
    # Liang-Barsky clipping
    d = b - a
    t0 = np.zeros(a.shape[:-1])
    t1 = np.ones(a.shape[:-1])
    ok = np.ones(a.shape[:-1], dtype=bool)
    for i in range(2):
        for p, q in ((-d[..., i], a[..., i] - lo[..., i]), (d[..., i], hi[..., i] - a[..., i])):
            par = p == 0
            ok &= ~(par & (q < 0))
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(par, 0.0, q / np.where(par, 1.0, p))
            t0 = np.where(~par & (p < 0), np.maximum(t0, r), t0)
            t1 = np.where(~par & (p > 0), np.minimum(t1, r), t1)
    return ok & (t0 <= t1)


def segment_ball_interval(a, b, x, r):
    """Parameter interval ``(t0, t1)`` of segment points inside the open ball ``B(x, r)``.

    Empty intersections give ``t0 >= t1``.
    """
    d = b - a
    f = a - x
    A = np.einsum("...i,...i->...", d, d)
    B = 2.0 * np.einsum("...i,...i->...", f, d)
    C = np.einsum("...i,...i->...", f, f) - r * r
    disc = B * B - 4 * A * C
    ok = (disc > 0) & (A > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    A_ = np.where(A > 0, A, 1.0)
    t0 = np.clip((-B - sq) / (2 * A_), 0.0, 1.0)
    t1 = np.clip((-B + sq) / (2 * A_), 0.0, 1.0)
    t0 = np.where(ok, t0, 1.0)
    t1 = np.where(ok, t1, 0.0)
    return t0, t1


@dataclass(frozen=True)
class SurfaceBall:
    center: np.ndarray
    radius: float
    arcs: list = field(repr=False)
    measure: float


@dataclass
class ARReport:
    lower: float
    upper: float
    passed: bool
    radii: np.ndarray
    lower_per_radius: np.ndarray
    upper_per_radius: np.ndarray


class Domain:
    """A planar domain bounded by closed polylines.

    The interior is defined by even-odd ray parity over all components. Open
    curves are accepted (``closed=False``) for boundary-only computations such as
    surface balls and dyadic grids; interior queries then raise.

    Parameters
    ----------
    components : sequence of (m, 2) arrays
        Vertex lists; for closed curves the last vertex connects back to the first.
    closed : bool
        Whether components are closed curves.
    interior_hint : optional point expected to lie inside.
    name : label used in reports.
    truncated : flag marking a bounded proxy of an unbounded domain.
    """

    ambient_dim = 2

    def __init__(
        self,
        components: Sequence[np.ndarray],
        closed: bool = True,
        interior_hint=None,
        name: str = "domain",
        truncated: bool = False,
    ):
        comps = [np.asarray(c, dtype=float) for c in components]
        if not comps:
            raise InvalidDomainError("no boundary components")
        for c in comps:
            if c.ndim != 2 or c.shape[1] != 2 or len(c) < 2:
                raise InvalidDomainError("component must be an (m, 2) vertex array with m >= 2")
            if closed and len(c) < 3:
                raise InvalidDomainError("closed component needs at least 3 vertices")
        self.components = comps
        self.closed = closed
        self.name = name
        self.truncated = truncated
        a, b, comp = [], [], []
        for k, c in enumerate(comps):
            nxt = np.roll(c, -1, axis=0) if closed else c[1:]
            cur = c if closed else c[:-1]
            a.append(cur)
            b.append(nxt)
            comp.append(np.full(len(cur), k))
        self.seg_a = np.concatenate(a)
        self.seg_b = np.concatenate(b)
        self.seg_comp = np.concatenate(comp)
        self.seg_len = np.linalg.norm(self.seg_b - self.seg_a, axis=1)
        comp_len = np.bincount(self.seg_comp, weights=self.seg_len, minlength=len(comps))
        if np.any(comp_len <= 0) or np.any(self.seg_len <= 0):
            raise InvalidDomainError("degenerate boundary: zero-length segment or component")
        self.component_lengths = comp_len
        self.seg_s0 = np.concatenate([[0.0], np.cumsum(self.seg_len)[:-1]])
        self.length = float(self.seg_len.sum())
        verts = np.concatenate(comps)
        self.bbox = (verts.min(axis=0), verts.max(axis=0))
        self.diameter = _vertex_diameter(verts)
        self._build_index()
        self.interior_hint = None if interior_hint is None else np.asarray(interior_hint, float)
        if closed and self.interior_hint is not None:
            if not self.contains(self.interior_hint[None])[0]:
                raise InvalidDomainError("interior_hint is not inside the domain")

    # ------------------------------------------------------------------ index
    def _build_index(self):
        # split long segments into short pieces indexed by their midpoints
        piece = self.length / 512
        counts = np.maximum(1, np.ceil(self.seg_len / piece).astype(int))
        seg_id = np.repeat(np.arange(len(self.seg_len)), counts)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        local = np.arange(len(seg_id)) - np.repeat(starts, counts)
        n = np.repeat(counts, counts)
        self._p_t0 = local / n
        self._p_t1 = (local + 1) / n
        d = self.seg_b[seg_id] - self.seg_a[seg_id]
        self._p_a = self.seg_a[seg_id] + self._p_t0[:, None] * d
        self._p_b = self.seg_a[seg_id] + self._p_t1[:, None] * d
        self._p_seg = seg_id
        self._p_half = float(np.max(np.linalg.norm(self._p_b - self._p_a, axis=1))) / 2
        self._tree = cKDTree((self._p_a + self._p_b) / 2)

    # -------------------------------------------------------------- distance
    def closest(self, points):
        """Nearest boundary data for each point.

        Returns ``(dist, seg, t)`` with segment index and foot parameter in [0, 1].
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        m = len(p)
        dist = np.full(m, np.inf)
        seg = np.zeros(m, dtype=int)
        tpar = np.zeros(m)
        todo = np.arange(m)
        npieces = self._tree.n
        if len(self.seg_a) <= 32:
            return self._closest_brute(p)
        for k in (16, 96):
            if len(todo) == 0:
                break
            k = min(k, npieces)
            dk, ik = self._tree.query(p[todo], k=k, workers=-1)
            dk = dk.reshape(len(todo), k)
            ik = ik.reshape(len(todo), k)
            dd, tt = point_segment_distance(p[todo][:, None, :], self._p_a[ik], self._p_b[ik])
            j = np.argmin(dd, axis=1)
            rows = np.arange(len(todo))
            best = dd[rows, j]
            # pieces outside the k nearest midpoints are at least dk[-1] - half away
            good = (dk[:, -1] - self._p_half > best) | (k == npieces)
            pc = ik[rows, j]
            sel = todo[good]
            dist[sel] = best[good]
            seg[sel] = self._p_seg[pc][good]
            t0, t1 = self._p_t0[pc], self._p_t1[pc]
            tpar[sel] = (t0 + tt[rows, j] * (t1 - t0))[good]
            todo = todo[~good]
        if len(todo):
            d2, s2, t2 = self._closest_brute(p[todo])
            dist[todo], seg[todo], tpar[todo] = d2, s2, t2
        return dist, seg, tpar

    def _closest_brute(self, p):
        n = len(self.seg_a)
        chunk = max(1, 2_000_000 // n)
        out_d = np.empty(len(p))
        out_s = np.empty(len(p), dtype=int)
        out_t = np.empty(len(p))
        for i in range(0, len(p), chunk):
            q = p[i : i + chunk, None, :]
            dd, tt = point_segment_distance(q, self.seg_a[None], self.seg_b[None])
            j = np.argmin(dd, axis=1)
            rows = np.arange(len(j))
            out_d[i : i + chunk] = dd[rows, j]
            out_s[i : i + chunk] = j
            out_t[i : i + chunk] = tt[rows, j]
        return out_d, out_s, out_t

    def rect_distance(self, lo, hi) -> np.ndarray:
        """Exact distance from axis-aligned rectangles ``[lo, hi]`` to the boundary."""
        lo = np.atleast_2d(np.asarray(lo, float))
        hi = np.atleast_2d(np.asarray(hi, float))
        m = len(lo)
        out = np.full(m, np.inf)
        todo = np.arange(m)
        if len(self.seg_a) > 32:
            c = 0.5 * (lo + hi)
            rad = 0.5 * np.linalg.norm(hi - lo, axis=1)
            for k in (16, 96):
                if len(todo) == 0:
                    break
                k = min(k, self._tree.n)
                dk, ik = self._tree.query(c[todo], k=k, workers=-1)
                dk = dk.reshape(len(todo), k)
                ik = ik.reshape(len(todo), k)
                dd = segment_rect_distance(self._p_a[ik], self._p_b[ik], lo[todo][:, None], hi[todo][:, None])
                best = dd.min(axis=1)
                good = (dk[:, -1] - self._p_half - rad[todo] >= best) | (k == self._tree.n)
                out[todo[good]] = best[good]
                todo = todo[~good]
        n = len(self.seg_a)
        chunk = max(1, 1_000_000 // n)
        for i in range(0, len(todo), chunk):
            t = todo[i : i + chunk]
            dd = segment_rect_distance(self.seg_a[None], self.seg_b[None], lo[t][:, None], hi[t][:, None])
            out[t] = dd.min(axis=1)
        return out

    def distance(self, points) -> np.ndarray:
        """Unsigned distance to the boundary."""
        return self.closest(points)[0]

    def distance_brute(self, points) -> np.ndarray:
        return self._closest_brute(np.atleast_2d(np.asarray(points, float)))[0]

    def project(self, points):
        """Nearest boundary points and their arc-length parameters."""
        d, s, t = self.closest(points)
        foot = self.seg_a[s] + t[:, None] * (self.seg_b[s] - self.seg_a[s])
        return foot, self.seg_s0[s] + t * self.seg_len[s], d

    def contains(self, points) -> np.ndarray:
        """Even-odd ray-casting test (ray towards +x)."""
        if not self.closed:
            raise GeometryError("interior undefined for open curves")
        p = np.atleast_2d(np.asarray(points, dtype=float))
        ys, inv = np.unique(p[:, 1], return_inverse=True)
        inv = inv.ravel()
        ay, by = self.seg_a[:, 1], self.seg_b[:, 1]
        if len(ys) * 4 <= len(p):
            out = np.zeros(len(p), dtype=bool)
            order = np.argsort(inv, kind="stable")
            bounds = np.searchsorted(inv[order], np.arange(len(ys) + 1))
            for r, y in enumerate(ys):
                idx = order[bounds[r] : bounds[r + 1]]
                cross = (ay > y) != (by > y)
                if not np.any(cross):
                    continue
                a, b = self.seg_a[cross], self.seg_b[cross]
                xs = np.sort(a[:, 0] + (y - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1]))
                n_right = len(xs) - np.searchsorted(xs, p[idx, 0], side="right")
                out[idx] = (n_right % 2) == 1
            return out
        n = len(self.seg_a)
        chunk = max(1, 2_000_000 // n)
        out = np.empty(len(p), dtype=bool)
        for i in range(0, len(p), chunk):
            q = p[i : i + chunk]
            y = q[:, 1:2]
            cross = (ay[None] > y) != (by[None] > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = self.seg_a[None, :, 0] + (y - ay[None]) * (
                    (self.seg_b[None, :, 0] - self.seg_a[None, :, 0]) / (by - ay)[None]
                )
            out[i : i + chunk] = (np.sum(cross & (q[:, 0:1] < xint), axis=1) % 2) == 1
        return out

    def signed_distance(self, points) -> np.ndarray:
        """Signed distance: positive in the domain, negative outside its closure."""
        d = self.distance(points)
        inside = self.contains(points)
        return np.where(inside, d, -d)

    # ------------------------------------------------------------ arc length
    def point_at(self, s) -> np.ndarray:
        """Boundary point at arc-length parameter ``s`` (concatenated over components)."""
        s = np.asarray(s, dtype=float)
        j = np.clip(np.searchsorted(self.seg_s0, s, side="right") - 1, 0, len(self.seg_s0) - 1)
        t = np.clip((s - self.seg_s0[j]) / self.seg_len[j], 0.0, 1.0)
        return self.seg_a[j] + t[..., None] * (self.seg_b[j] - self.seg_a[j])

    def arc_pieces(self, s0: float, s1: float) -> tuple[np.ndarray, np.ndarray]:
        """Sub-segments covering the arc-length interval ``[s0, s1]``."""
        j0 = max(0, int(np.searchsorted(self.seg_s0, s0, side="right")) - 1)
        j1 = max(j0, int(np.searchsorted(self.seg_s0, s1, side="left")) - 1)
        js = np.arange(j0, j1 + 1)
        lo = np.clip((s0 - self.seg_s0[js]) / self.seg_len[js], 0.0, 1.0)
        hi = np.clip((s1 - self.seg_s0[js]) / self.seg_len[js], 0.0, 1.0)
        keep = hi > lo
        js, lo, hi = js[keep], lo[keep], hi[keep]
        d = self.seg_b[js] - self.seg_a[js]
        return self.seg_a[js] + lo[:, None] * d, self.seg_a[js] + hi[:, None] * d

    def sample_arc(self, s0: float, s1: float, n: int) -> np.ndarray:
        """``n`` midpoint samples of the arc ``[s0, s1]`` by arc length."""
        s = s0 + (np.arange(n) + 0.5) * (s1 - s0) / n
        return self.point_at(s)

    def on_boundary(self, x, tol: float = 1e-9) -> bool:
        return bool(self.distance(np.asarray(x, float)[None])[0] <= tol)

    # ------------------------------------------------------------ surface balls
    def ball_measure(self, x, r: float) -> float:
        """σ(B(x, r) ∩ ∂Ω) without range checks."""
        t0, t1 = segment_ball_interval(self.seg_a, self.seg_b, np.asarray(x, float), r)
        return float(np.sum(np.maximum(t1 - t0, 0.0) * self.seg_len))

    def ball_intervals(self, x, r: float) -> list[tuple[float, float]]:
        """Arc-length intervals of ``B(x, r) ∩ ∂Ω``, merged and sorted."""
        t0, t1 = segment_ball_interval(self.seg_a, self.seg_b, np.asarray(x, float), r)
        hit = np.nonzero(t1 > t0)[0]
        iv = [(self.seg_s0[j] + t0[j] * self.seg_len[j], self.seg_s0[j] + t1[j] * self.seg_len[j]) for j in hit]
        return _merge(iv)

    def to_json(self) -> dict:
        if not self.closed:
            raise GeometryError("only closed domains can be serialized")
        return {
            "dim": 2,
            "components": [c.tolist() for c in self.components],
            "interior_hint": None if self.interior_hint is None else self.interior_hint.tolist(),
        }


def _merge(iv, tol: float = 1e-12):
    iv = sorted(iv)
    out: list[tuple[float, float]] = []
    for a, b in iv:
        if out and a <= out[-1][1] + tol:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def _vertex_diameter(v: np.ndarray) -> float:
    if len(v) > 2000:
        from scipy.spatial import ConvexHull

        try:
            v = v[ConvexHull(v).vertices]
        except Exception:
            pass
    d2 = 0.0
    for i in range(0, len(v), 512):
        diff = v[i : i + 512, None, :] - v[None, :, :]
        d2 = max(d2, float(np.max(np.einsum("ijk,ijk->ij", diff, diff))))
    return math.sqrt(d2)


def surface_ball(domain: Domain, x, r: float) -> SurfaceBall:
    """Exact ``Δ(x, r) = B(x, r) ∩ ∂Ω`` as a list of sub-segments."""
    x = np.asarray(x, dtype=float)
    if not domain.on_boundary(x):
        raise GeometryError(f"center {x.tolist()} is not on the boundary")
    if not (0 < r < domain.diameter):
        raise GeometryError(f"radius {r} outside (0, diam) = (0, {domain.diameter})")
    t0, t1 = segment_ball_interval(domain.seg_a, domain.seg_b, x, r)
    hit = np.nonzero(t1 > t0)[0]
    d = domain.seg_b - domain.seg_a
    arcs = [(domain.seg_a[j] + t0[j] * d[j], domain.seg_a[j] + t1[j] * d[j]) for j in hit]
    measure = float(np.sum((t1[hit] - t0[hit]) * domain.seg_len[hit]))
    return SurfaceBall(center=x, radius=float(r), arcs=arcs, measure=measure)


def ar_check(domain: Domain, centers, radii) -> ARReport:
    """Sample ``σ(Δ(x, r)) / r^n`` (n = 1) over centers and a radius ladder."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.asarray(radii, dtype=float)
    if len(centers) < 32:
        raise GeometryError("ar_check needs at least 32 centers")
    if np.any(radii <= 0) or np.any(radii >= domain.diameter):
        raise GeometryError("radii must lie in (0, diam)")
    if np.any(domain.distance(centers) > 1e-9):
        raise GeometryError("all centers must lie on the boundary")
    ratios = np.empty((len(radii), len(centers)))
    for i, r in enumerate(radii):
        for j, x in enumerate(centers):
            ratios[i, j] = domain.ball_measure(x, r) / r
    lo = ratios.min(axis=1)
    hi = ratios.max(axis=1)
    lower, upper = float(lo.min()), float(hi.max())
    passed = bool(lower > 0 and np.isfinite(upper))
    return ARReport(lower, upper, passed, radii, lo, hi)


# --------------------------------------------------------------------- loaders
def load_domain(path) -> Domain:
    """Read the JSON domain format ``{"dim", "components", "interior_hint"}``."""
    data = json.loads(Path(path).read_text())
    return domain_from_json(data, name=Path(path).stem)


def domain_from_json(data: dict, name: str = "domain") -> Domain:
    if data.get("dim", 2) != 2:
        raise InvalidDomainError("only dim = 2 domain files are supported")
    comps = []
    for c in data["components"]:
        c = np.asarray(c, dtype=float)
        if len(c) >= 2 and np.allclose(c[0], c[-1]):
            c = c[:-1]
        elif len(c) >= 2:
            raise InvalidDomainError("open polyline: first and last vertex must coincide")
        comps.append(c)
    return Domain(comps, closed=True, interior_hint=data.get("interior_hint"), name=name)


def save_domain(domain: Domain, path) -> None:
    data = domain.to_json()
    data["components"] = [c + c[:1] for c in data["components"]]
    Path(path).write_text(json.dumps(data))


# -------------------------------------------------------------------- shapes
def regular_polygon(n: int = 256, radius: float = 1.0, center=(0.0, 0.0), phase: float = 0.0) -> np.ndarray:
    th = phase + 2 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])


def disk(n: int = 256, radius: float = 1.0) -> Domain:
    return Domain([regular_polygon(n, radius)], interior_hint=(0.0, 0.0), name="disk")


def unit_square() -> Domain:
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return Domain([v], interior_hint=(0.5, 0.5), name="square")


def half_plane_box(half_width: float = 8.0, height: float = 16.0) -> Domain:
    """Bounded proxy of the upper half-plane; the floor is the parameter range ``[0, 2·half_width]``."""
    w = half_width
    v = np.array([[-w, 0.0], [w, 0.0], [w, height], [-w, height]])
    return Domain([v], interior_hint=(0.0, height / 2), name="half_plane", truncated=True)


def segment(a=(0.0, 0.0), b=(1.0, 0.0)) -> Domain:
    return Domain([np.array([a, b], dtype=float)], closed=False, name="segment")


def koch_snowflake(level: int = 3, size: float = 1.0) -> Domain:
    z = regular_polygon(3, size / math.sqrt(3), phase=np.pi / 2) @ np.array([1.0, 1j])
    rot = np.exp(-1j * np.pi / 3)
    for _ in range(level):
        d = (np.roll(z, -1) - z) / 3
        z = np.stack([z, z + d, z + d + d * rot, z + 2 * d], axis=1).ravel()
    return Domain([np.column_stack([z.real, z.imag])], interior_hint=(0.0, 0.0), name=f"koch{level}")


def lipschitz_graph_domain(slope: float = 0.5, teeth: int = 4, half_width: float = 1.0, height: float = 1.0) -> Domain:
    """Region above a zigzag graph of slope ``±slope`` over ``[-w, w]`` capped by a flat top."""
    xs = np.linspace(-half_width, half_width, 2 * teeth + 1)
    amp = slope * (xs[1] - xs[0])
    ys = np.where(np.arange(len(xs)) % 2 == 1, amp, 0.0)
    floor = np.column_stack([xs, ys])
    top = np.array([[half_width, height], [-half_width, height]])
    return Domain([np.vstack([floor, top])], interior_hint=(0.0, height / 2), name="lipschitz")


def cusp_domain(size: float = 1.0, width: float = 0.05, power: float = 2.0, n: int = 96) -> Domain:
    """Square ``(-size, size)^2`` minus a thin exterior spike entering from the right side.

    The spike occupies ``{0 <= x <= size, |y| <= width * x^power}`` so the complement
    has density zero at the tip (origin).
    """
    s = np.concatenate([[0.0], np.geomspace(1e-4, 1.0, n)]) * size
    half = width * size * (s / size) ** power
    lower = np.column_stack([s[::-1], -half[::-1]])
    upper = np.column_stack([s[1:], half[1:]])
    v = np.vstack([[[size, -size]], lower, upper, [[size, size], [-size, size], [-size, -size]]])
    return Domain([v], interior_hint=(-size / 2, 0.0), name="cusp")


def slit_disk(n: int = 256, gap: float = 2e-3, depth: float = 0.5) -> Domain:
    """Unit disk with a thin radial notch along the positive x-axis ending at ``(1 - depth, 0)``."""
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    ang = math.asin(gap / 2)
    keep = (th > ang) & (th < 2 * np.pi - ang)
    arc = np.column_stack([np.cos(th[keep]), np.sin(th[keep])])
    tip = 1.0 - depth
    notch = np.array([
        [math.cos(-ang), math.sin(-ang)],
        [tip, -gap / 2],
        [tip, gap / 2],
        [math.cos(ang), math.sin(ang)],
    ])
    v = np.vstack([notch[2:], arc, notch[:2]])
    return Domain([v], interior_hint=(-0.5, 0.0), name="slit_disk")


def two_disks(n: int = 128, radius: float = 1.0, separation: float = 3.0) -> Domain:
    a = regular_polygon(n, radius, center=(-separation / 2, 0.0))
    b = regular_polygon(n, radius, center=(separation / 2, 0.0))
    return Domain([a, b], interior_hint=(-separation / 2, 0.0), name="two_disks")


SHAPES = {
    "disk": disk,
    "square": unit_square,
    "half_plane": half_plane_box,
    "koch": koch_snowflake,
    "lipschitz": lipschitz_graph_domain,
    "cusp": cusp_domain,
    "slit_disk": slit_disk,
    "two_disks": two_disks,
}
