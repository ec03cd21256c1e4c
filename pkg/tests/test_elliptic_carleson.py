import numpy as np
import pytest

from cadkit import elliptic as E
from cadkit.fields import FieldSample, Grid2D

KP_EXACT = (0.5 * np.log(5) + 2 * np.arctan(0.5)) / np.pi**2


def halfplane_green(pole):
    """Green function of the upper half-plane with pole ``pole`` and its exact Hessian."""
    a, b = pole

    def G(x, y):
        return (np.log(np.hypot(x - a, y + b)) - np.log(np.hypot(x - a, y - b))) / (2 * np.pi)

    def hess(x, y):
        out = np.zeros(np.shape(x) + (2, 2))
        for sgn, py in ((1, -b), (-1, b)):
            dx, dy = x - a, y - py
            r2 = dx * dx + dy * dy
            out[..., 0, 0] += sgn * (dy * dy - dx * dx) / r2**2
            out[..., 1, 1] += sgn * (dx * dx - dy * dy) / r2**2
            out[..., 0, 1] += sgn * (-2 * dx * dy) / r2**2
        out[..., 1, 0] = out[..., 0, 1]
        return out / (2 * np.pi)

    return G, hess


def gauss_box(f, lo, hi, n=24):
    """Tensor Gauss–Legendre rule on ``[lo, hi]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    xs = lo[0] + (x + 1) * (hi[0] - lo[0]) / 2
    ys = lo[1] + (x + 1) * (hi[1] - lo[1]) / 2
    X, Y = np.meshgrid(xs, ys)
    W = np.outer(w, w) * (hi[0] - lo[0]) * (hi[1] - lo[1]) / 4
    return float(np.sum(W * f(X, Y)))


@pytest.mark.parametrize("lo, side", [((0.5, 0.25), 0.125), ((-1.0, 0.5), 0.25), ((0.0, 0.0625), 0.03125)])
def test_box_square_function_vs_quadrature(lo, side):
    G, hess = halfplane_green((0.0, 4.0))
    lo = np.array(lo)
    hi = lo + side
    h = side / 64
    g = Grid2D.covering(lo - side, hi + side, h)
    u = FieldSample.from_function(g, G)
    t = g.points()[:, 1].reshape(g.shape)
    num = E.box_square_function(u, t, E.identity(), lo, hi)
    exact = gauss_box(lambda x, y: np.sum(hess(x, y) ** 2, axis=(-2, -1)) * y, lo, hi)
    assert num == pytest.approx(exact, rel=0.05)


def test_constant_coefficient_density():
    g = Grid2D.covering((-1, -1), (1, 1), 1 / 16)
    u = FieldSample.from_function(g, lambda x, y: x * x + x * y)
    d = E.square_function_density(u, E.diag(2, 1))
    # A^T ∇²u = diag(2, 1) [[2, 1], [1, 0]]
    assert np.allclose(d[2:-2, 2:-2], 16 + 4 + 1)
    di = E.square_function_density(u, E.identity())
    assert np.allclose(di[2:-2, 2:-2], 4 + 1 + 1)


def test_kp_constant_field():
    g = Grid2D.covering((-4, 0), (4, 4), 1 / 32)
    u = FieldSample.from_function(g, lambda x, y: 1 + 0 * x)
    res = E.kenig_pipher_carleson(u, E.identity(), [0.5, 1, 2])
    assert res.sup == 0 and res.mu == 0 and res.holds


def test_kp_half_line_closed_form():
    u_fn = lambda x, y: np.arctan2(y, x) / np.pi
    for r in (2.0**-3, 1.0, 2.0**3):
        h = r / 256
        g = Grid2D.covering((-r, 0), (r, r), h, pad=1)
        X, Y = np.meshgrid(g.x, g.y)
        u = FieldSample.from_function(g, u_fn, Y > 0)
        u.ghost = Y <= 0
        v = E.carleson_box_integral(u, -r / 2, r)
        assert v == pytest.approx(KP_EXACT, rel=0.02)
        assert v <= 2


def test_kp_rejects_large_u():
    g = Grid2D.covering((0, 0), (1, 1), 0.25)
    with pytest.raises(ValueError):
        E.kenig_pipher_carleson(FieldSample.from_function(g, lambda x, y: 2 + 0 * x), E.identity(), [0.5])


def test_coefficient_carleson_profile():
    A = E.kp_t_profile()
    ladder = 2.0 ** np.arange(-3, 4)
    mu = E.coefficient_carleson_norm(A, ladder)
    assert 0 < mu < 5
    assert E.coefficient_carleson_norm(E.identity(), ladder) == 0
