"""Uniform node grids and sampled fields with finite-difference access."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_MAGIC = b"CADKITF1"


@dataclass(frozen=True)
class Grid2D:
    """Nodes ``(ox + i h, oy + j h)`` for ``0 <= i < nx``, ``0 <= j < ny``; arrays are indexed ``[j, i]``."""

    origin: tuple[float, float]
    h: float
    shape: tuple[int, int]  # (ny, nx)

    @classmethod
    def covering(cls, lo, hi, h: float, pad: int = 2) -> "Grid2D":
        """Lattice ``hZ^2`` nodes covering ``[lo, hi]`` with ``pad`` extra layers."""
        i0 = int(np.floor(lo[0] / h)) - pad
        j0 = int(np.floor(lo[1] / h)) - pad
        i1 = int(np.ceil(hi[0] / h)) + pad
        j1 = int(np.ceil(hi[1] / h)) + pad
        return cls((i0 * h, j0 * h), h, (j1 - j0 + 1, i1 - i0 + 1))

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.h * np.arange(self.shape[1])

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.h * np.arange(self.shape[0])

    def points(self) -> np.ndarray:
        X, Y = np.meshgrid(self.x, self.y)
        return np.column_stack([X.ravel(), Y.ravel()])

    def index(self, p) -> tuple[int, int]:
        """Nearest node ``(j, i)``."""
        return int(round((p[1] - self.origin[1]) / self.h)), int(round((p[0] - self.origin[0]) / self.h))

    def node(self, j: int, i: int) -> np.ndarray:
        return np.array([self.origin[0] + i * self.h, self.origin[1] + j * self.h])


class FieldSample:
    """Scalar field on the nodes of ``grid`` restricted to ``mask``.

    Derivatives use centered differences whose stencils stay inside ``mask``;
    where a centered stencil is unavailable a one-sided difference is used, and
    where neither fits the derivative is NaN.
    """

    def __init__(self, grid: Grid2D, values: np.ndarray, mask: np.ndarray | None = None):
        self.grid = grid
        self.values = np.asarray(values, dtype=float).reshape(grid.shape)
        self.mask = np.ones(grid.shape, dtype=bool) if mask is None else np.asarray(mask, bool).reshape(grid.shape)

    @classmethod
    def from_function(cls, grid: Grid2D, f, mask=None) -> "FieldSample":
        p = grid.points()
        return cls(grid, f(p[:, 0], p[:, 1]).reshape(grid.shape), mask)

    @property
    def h(self) -> float:
        return self.grid.h

    def masked(self) -> np.ndarray:
        return np.where(self.mask, self.values, np.nan)

    def gradient(self) -> tuple[np.ndarray, np.ndarray]:
        """``(∂x u, ∂y u)`` on the node grid."""
        return _diff(self.values, self.mask, self.h, axis=1), _diff(self.values, self.mask, self.h, axis=0)

    def hessian(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(u_xx, u_xy, u_yy)`` from three-point and four-corner stencils fully inside ``mask``."""
        u, m, h = self.values, self.mask, self.h
        uxx = np.full(u.shape, np.nan)
        uyy = np.full(u.shape, np.nan)
        uxy = np.full(u.shape, np.nan)
        ok = m[1:-1, 1:-1] & m[1:-1, 2:] & m[1:-1, :-2]
        uxx[1:-1, 1:-1] = np.where(ok, (u[1:-1, 2:] - 2 * u[1:-1, 1:-1] + u[1:-1, :-2]) / h**2, np.nan)
        ok = m[1:-1, 1:-1] & m[2:, 1:-1] & m[:-2, 1:-1]
        uyy[1:-1, 1:-1] = np.where(ok, (u[2:, 1:-1] - 2 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / h**2, np.nan)
        ok = m[1:-1, 1:-1] & m[2:, 2:] & m[:-2, :-2] & m[2:, :-2] & m[:-2, 2:]
        uxy[1:-1, 1:-1] = np.where(ok, (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4 * h**2), np.nan)
        return uxx, uxy, uyy

    def interpolate(self, p) -> float:
        """Bilinear interpolation at ``p`` (NaN if a corner node is outside ``mask``)."""
        g = self.grid
        fx = (p[0] - g.origin[0]) / g.h
        fy = (p[1] - g.origin[1]) / g.h
        i, j = int(np.floor(fx)), int(np.floor(fy))
        tx, ty = fx - i, fy - j
        if not (0 <= i < g.shape[1] - 1 and 0 <= j < g.shape[0] - 1):
            return float("nan")
        blk = self.masked()[j : j + 2, i : i + 2]
        w = np.array([[(1 - tx) * (1 - ty), tx * (1 - ty)], [(1 - tx) * ty, tx * ty]])
        use = w > 1e-14
        return float(np.sum(np.where(use, blk, 0.0) * w)) if not np.any(np.isnan(blk[use])) else float("nan")

    # ------------------------------------------------------------------ io
    def write(self, path) -> None:
        """Binary grid field: magic, ``ny, nx`` (int32), ``h, ox, oy`` (float64), row-major doubles."""
        g = self.grid
        head = _MAGIC + struct.pack("<iiddd", g.shape[0], g.shape[1], g.h, g.origin[0], g.origin[1])
        Path(path).write_bytes(head + self.masked().astype("<f8").tobytes(order="C"))

    @classmethod
    def read(cls, path) -> "FieldSample":
        data = Path(path).read_bytes()
        if data[:8] != _MAGIC:
            raise ValueError("not a grid field file")
        ny, nx, h, ox, oy = struct.unpack("<iiddd", data[8:40])
        vals = np.frombuffer(data[40:], dtype="<f8").reshape(ny, nx).copy()
        mask = ~np.isnan(vals)
        return cls(Grid2D((ox, oy), h, (ny, nx)), np.nan_to_num(vals), mask)


def _diff(u: np.ndarray, m: np.ndarray, h: float, axis: int) -> np.ndarray:
    out = np.full(u.shape, np.nan)
    fwd = np.zeros(u.shape, dtype=bool)
    bwd = np.zeros(u.shape, dtype=bool)
    sl = [slice(None)] * 2

    def s(a, b):
        sl2 = list(sl)
        sl2[axis] = slice(a, b)
        return tuple(sl2)

    fwd[s(0, -1)] = m[s(0, -1)] & m[s(1, None)]
    bwd[s(1, None)] = m[s(1, None)] & m[s(0, -1)]
    up = np.roll(u, -1, axis=axis)
    dn = np.roll(u, 1, axis=axis)
    cen = fwd & bwd
    out = np.where(cen, (up - dn) / (2 * h), out)
    out = np.where(fwd & ~bwd, (up - u) / h, out)
    out = np.where(bwd & ~fwd, (u - dn) / h, out)
    return np.where(m, out, np.nan)
