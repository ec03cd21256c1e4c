"""Acceptance criteria AC1-AC12; each test records one PASS/FAIL line."""

import time

import numpy as np
import pytest

from _acceptance import verdict
from cadkit import elliptic as E
from cadkit import geometry as geo
from cadkit.carleson import (
    brute_force_maximal,
    carleson_norm,
    corkscrew_from_packing,
    packing_test,
    sawtooth_cubes,
    sawtooth_to_carleson,
    stopping_k1,
    stopping_time,
)
from cadkit.dyadic import CubeTree, build_grid, fit_thin_boundary, verify_grid
from cadkit.probe import bad_cubes
from cadkit.whitney import WhitneyDecomposition, WhitneyRegions, whitney_decompose


# ------------------------------------------------------------------ AC1
def test_ac1_dyadic_axioms():
    rows, ok = [], True
    for name, dom in [("segment", geo.segment()), ("circle", geo.disk(256)), ("koch3", geo.koch_snowflake(3))]:
        t0 = time.perf_counter()
        grid = build_grid(dom, 6)
        rep = verify_grid(grid)
        _, eta, _ = fit_thin_boundary(grid, [2.0**-j for j in range(2, 7)])
        dt = time.perf_counter() - t0
        good = rep.passed and rep.covering_error <= 1e-9 and rep.nesting and eta > 0 and dt < 10
        ok &= good
        rows.append(f"{name} cover={rep.covering_error:.1e} eta={eta:.2f} {dt:.1f}s")
    verdict("AC1", ok, "; ".join(rows))
    assert ok


# ------------------------------------------------------------------ AC2
def test_ac2_whitney_constants():
    rows, ok = [], True
    for dom, finest in [(geo.disk(256), 7), (geo.lipschitz_graph_domain(), 8)]:
        t0 = time.perf_counter()
        wd = whitney_decompose(dom, finest=finest)
        chk = wd.check()
        # independent exhaustive pass with exact polygon distances
        diam = wd.side * np.sqrt(2)
        c = wd.lo + wd.side[:, None] / 2
        lo4, hi4 = c - 2 * wd.side[:, None], c + 2 * wd.side[:, None]
        d4 = dom.rect_distance(lo4, hi4)
        d1 = dom.rect_distance(wd.lo, wd.lo + wd.side[:, None])
        dt = time.perf_counter() - t0
        good = bool(np.all(4 * diam <= d4) and np.all(d1 <= 40 * diam) and chk["max_adjacent_ratio"] <= 4 and chk["wh2"] and dt < 5)
        ok &= good
        rows.append(f"{dom.name} boxes={len(wd)} max_dist/diam={np.max(d1 / diam):.1f} adj={chk['max_adjacent_ratio']:.0f} {dt:.1f}s")
    verdict("AC2", ok, "; ".join(rows))
    assert ok


# ------------------------------------------------------------------ AC3
def test_ac3_harmonic_measure_oracles():
    t0 = time.perf_counter()
    disk = geo.disk(256)
    mc = E.walk_on_spheres(disk, (0.0, 0.0), E.arc_functional(disk, 0.0, disk.length / 4), n_walks=100_000, seed=0)
    ok_disk = abs(mc.value - 0.25) <= 3 * mc.stderr
    hp = geo.half_plane_box(8, 16)
    h = 1 / 32
    prob = E.DirichletProblem(hp, None, h)
    grid = build_grid(hp, 4)
    est = E.elliptic_measure(prob, (0.0, 1.0), grid, 4)
    # [-1, 1] is arc parameter [7, 9]: cubes of length 4 do not resolve it, so weight the ghosts directly
    _, w = prob.adjoint((0.0, 1.0))
    m = float(w @ prob.arc_indicator(7.0, 9.0))
    ok_hp = abs(m - 0.5) <= 3 * h
    mc_hp = E.walk_on_spheres(hp, (0.0, 1.0), E.arc_functional(hp, 7.0, 9.0), n_walks=100_000, seed=1)
    ok_hp_mc = abs(mc_hp.value - 0.5) <= max(3 * mc_hp.stderr, 3 * h)
    dt = time.perf_counter() - t0
    ok = ok_disk and ok_hp and ok_hp_mc and est.total <= 1 + 1e-9 and dt < 30
    verdict(
        "AC3",
        ok,
        f"disk quarter {mc.value:.4f}±{mc.stderr:.4f}; half-plane solver {m:.4f} (3h={3 * h:.3f}), "
        f"walks {mc_hp.value:.4f}±{mc_hp.stderr:.4f}; {dt:.1f}s",
    )
    assert ok


# ------------------------------------------------------------------ AC4
def test_ac4_boundary_estimates():
    from cadkit.probe import find_corkscrew

    t0 = time.perf_counter()
    scales = [2.0**-j for j in range(2, 6)]
    rows, ok = [], True
    cases = [(geo.disk(256), (1.0, 0.0), (-0.6, 0.0)), (geo.lipschitz_graph_domain(), (-0.375, 0.0625), (0.5, 0.8))]
    for dom, x, X in cases:
        brackets = {}
        for h in (1 / 128, 1 / 256):
            p = E.DirichletProblem(dom, None, h)
            vals = {"bourgain": [], "doubling": [], "cfms": []}
            for r in scales:
                vals["bourgain"].append(E.bourgain_check(p, x, r)[0])
                vals["doubling"].append(E.doubling_check(p, x, r, X))
                vals["cfms"].append(E.cfms_check(p, x, r, X, find_corkscrew(dom, x, r).center))
            brackets[h] = {k: (min(v), max(v)) for k, v in vals.items()}
        for name in ("bourgain", "doubling", "cfms"):
            (a0, b0), (a1, b1) = brackets[1 / 128][name], brackets[1 / 256][name]
            drift = max(abs(a0 - a1) / a1, abs(b0 - b1) / b1)
            good = a1 > 0 and np.isfinite(b1) and drift <= 0.2
            ok &= good
            rows.append(f"{dom.name} {name} [{a1:.3g}, {b1:.3g}] drift {drift:.1%}")
    dt = time.perf_counter() - t0
    ok &= dt < 300
    verdict("AC4", ok, "; ".join(rows) + f"; {dt:.0f}s")
    assert ok


# ------------------------------------------------------------------ AC5
def test_ac5_stopping_time_exact():
    from _synth import brute_maximal_naive, cascade_measure

    t0 = time.perf_counter()
    t = CubeTree.binary(6)
    rng = np.random.default_rng(5)
    K0, theta = 4.0, 0.25
    K1 = (4 * K0) ** (1 / theta)
    ok, nonempty = True, 0
    for _ in range(40):
        mu = cascade_measure(t, rng, rng.uniform(0.2, 0.7))
        fam = stopping_time(t, mu, t.root, K0, theta, check=True)
        ok &= fam.K1 == K1 == stopping_k1(K0, theta)
        ok &= fam.family == brute_force_maximal(t, mu, t.root, K0, theta)
        ok &= fam.family == brute_maximal_naive(t, mu, t.root, 0.5, K0 * K1)
        ok &= sorted(fam.sawtooth) == sawtooth_cubes(t, fam.family, t.root)
        # ample contact and sawtooth density bounds, recomputed from scratch
        free = t.sigma(t.root) - sum(t.sigma(c) for c in fam.family)
        ok &= free / t.sigma(t.root) >= 1 / K1
        ok &= all(0.5 <= mu[c] / t.sigma(c) <= K0 * K1 for c in fam.sawtooth)
        nonempty += bool(fam.family)
    # small K0·K1 without the hypothesis gate: stops above the band as well
    upper = 0
    for K0s, th in [(1.0, 1.0), (1.0, 0.5), (1.5, 1.0)]:
        for _ in range(20):
            mu = cascade_measure(t, rng, rng.uniform(0.3, 0.9))
            fam = stopping_time(t, mu, t.root, K0s, th, check=False)
            top = K0s * stopping_k1(K0s, th)
            ok &= fam.family == brute_maximal_naive(t, mu, t.root, 0.5, top)
            ok &= all(0.5 <= mu[c] / t.sigma(c) <= top for c in fam.sawtooth)
            upper += sum(mu[c] / t.sigma(c) > top for c in fam.family)
    dt = time.perf_counter() - t0
    ok &= nonempty > 0 and upper > 0 and dt < 1
    verdict("AC5", ok, f"40 gated cascades ({nonempty} stop), K1={K1:.0f}; 60 ungated with {upper} upper stops; {dt:.2f}s")
    assert ok


# ------------------------------------------------------------------ AC6
def test_ac6_carleson_amplification():
    from _synth import random_family, sparse_alpha

    t0 = time.perf_counter()
    t = CubeTree.binary(8)
    rng = np.random.default_rng(6)
    ok, worst = True, 0.0
    for _ in range(100):
        alpha = sparse_alpha(t, rng, density=rng.uniform(0.1, 0.6))
        K1 = float(rng.uniform(1.5, 8))
        fams = {q: random_family(t, q, K1, rng, p=rng.uniform(0.1, 0.5)) for q in t.descendants(t.root)}
        M1 = max(sum(alpha.get(c, 0.0) for c in sawtooth_cubes(t, fams[q], q)) / t.sigma(q) for q in fams)
        cert = sawtooth_to_carleson(t, alpha, fams.get, K1, M1)
        direct = carleson_norm(t, alpha)[0]
        ok &= cert.holds and not cert.truncated and direct <= cert.bound * (1 + 1e-12)
        worst = max(worst, direct / cert.bound)
    dt = time.perf_counter() - t0
    ok &= dt < 10
    verdict("AC6", ok, f"100 instances, max norm/bound {worst:.3f}; {dt:.1f}s")
    assert ok


# ------------------------------------------------------------------ AC7
def test_ac7_packing_dichotomy():
    t0 = time.perf_counter()
    lip, cusp = geo.lipschitz_graph_domain(), geo.cusp_domain()
    c0 = 1 / 32
    ok = True
    lip_m = []
    for d in (5, 6, 7):
        grid = build_grid(lip, d)
        bad = bad_cubes(grid, c0)
        M1 = packing_test(grid, bad)[0]
        lip_m.append(M1)
        wits = [corkscrew_from_packing(grid, c, M1, bad, c0) for c in grid.generation(2)]
        ok &= M1 <= 3 and len(wits) == 4 and all(w.good not in bad for w in wits)
    cusp_m = []
    for d in (5, 7):
        grid = build_grid(cusp, d)
        cusp_m.append(packing_test(grid, bad_cubes(grid, c0))[0])
    ok &= cusp_m[1] >= 1.5 * cusp_m[0]
    dt = time.perf_counter() - t0
    ok &= dt < 600
    verdict("AC7", ok, f"lipschitz M1_hat {lip_m}; cusp depth 5 -> 7: {cusp_m[0]:g} -> {cusp_m[1]:g}; {dt:.0f}s")
    assert ok


# ------------------------------------------------------------------ AC8
def test_ac8_gradient_bound():
    from cadkit.fields import FieldSample, Grid2D

    t0 = time.perf_counter()

    def poisson(x, y):  # Poisson extension of 1_[-1,1]
        return (np.arctan((1 - x) / y) - np.arctan((-1 - x) / y)) / np.pi

    sups, lin = [], []
    for h in (1 / 64, 1 / 128):
        g = Grid2D.covering((-3, 0), (3, 3), h, pad=0)
        X, Y = np.meshgrid(g.x, g.y)
        m = Y > 1e-12
        Ys = np.where(m, Y, 1.0)
        sups.append(E.gradient_bound_check(FieldSample(g, np.where(m, poisson(X, Ys), 0.0), m), Y)[0])
        lin.append(E.gradient_bound_check(FieldSample(g, Y.copy(), m), Y)[0])
    hp = geo.half_plane_box(8, 16)
    fd = []
    for h in (1 / 16, 1 / 32):
        p = E.DirichletProblem(hp, None, h)
        u, _ = p.solve(p.arc_indicator(7.0, 9.0))
        fd.append(E.gradient_bound_check(u, p.delta)[0])
    change = abs(sups[0] - sups[1]) / sups[1]
    fd_change = abs(fd[0] - fd[1]) / fd[1]
    dt = time.perf_counter() - t0
    ok = max(sups + fd) <= 5 and change < 0.1 and fd_change < 0.1 and all(abs(v - 1) <= 1e-6 for v in lin) and dt < 60
    verdict(
        "AC8",
        ok,
        f"closed form sup {sups[1]:.4f} (change {change:.2%}); solver box sup {fd[1]:.4f} (change {fd_change:.2%}); "
        f"u=t sup {lin[1]:.8f}; {dt:.1f}s",
    )
    assert ok


# ------------------------------------------------------------------ AC9
def _image_green(a, b):
    """Green function of ``{y > -1}`` with pole ``(a, b)`` and its exact Hessian."""

    def G(x, y):
        with np.errstate(divide="ignore"):
            return (np.log(np.hypot(x - a, y + 2 + b)) - np.log(np.hypot(x - a, y - b))) / (2 * np.pi)

    def hess_sq(x, y):
        H = np.zeros(np.shape(x) + (3,))
        for sgn, py in ((1, -2 - b), (-1, b)):
            dx, dy = x - a, y - py
            r4 = (dx * dx + dy * dy) ** 2
            H[..., 0] += sgn * (dy * dy - dx * dx) / r4
            H[..., 1] += sgn * (-2 * dx * dy) / r4
        H /= 2 * np.pi
        return 2 * H[..., 0] ** 2 + 2 * H[..., 1] ** 2  # uyy = -uxx

    return G, hess_sq


def _gauss_box(f, lo, hi, n=16):
    x, w = np.polynomial.legendre.leggauss(n)
    xs = lo[0] + (x + 1) * (hi[0] - lo[0]) / 2
    ys = lo[1] + (x + 1) * (hi[1] - lo[1]) / 2
    X, Y = np.meshgrid(xs, ys)
    return float(np.sum(np.outer(w, w) * f(X, Y)) * (hi[0] - lo[0]) * (hi[1] - lo[1]) / 4)


def test_ac9_square_function_carleson():
    from cadkit.fields import FieldSample

    t0 = time.perf_counter()
    dom = geo.lipschitz_graph_domain()
    grid = build_grid(dom, 8)
    Q0 = (2, 0)
    wd = WhitneyDecomposition(dom, finest=12, window=((-1, 0), (0.6, 0.7)))
    R = WhitneyRegions(grid, wd)
    h = 1 / 512
    p = E.DirichletProblem(dom, None, h)
    X0 = np.array([0.75, 0.75])
    est = E.elliptic_measure(p, X0, grid, 8)
    Gs = p.green(X0, transpose=True)
    Gs.values *= grid.sigma(Q0) / E.cube_mass(est, grid, Q0)
    ratios, regs = [], {}
    for N in (3, 4, 5):
        fam = [c for c in grid.descendants(Q0) if c[0] == Q0[0] + N]
        regs[N] = R.sawtooth(fam, Q0)
        ratios.append(E.square_function_carleson(Gs, Gs.values, regs[N], p.A, grid).ratio)
    inc = np.diff(ratios)
    trend_ok = max(ratios) / min(ratios) < 2 and inc[1] <= inc[0] + 1e-12
    # per-cube oracle: Υ_Q over the unfattened U_Q for an explicit harmonic function with
    # exact Hessian, against Gauss-Legendre on every Whitney box with the true δ weight
    G, hsq = _image_green(0.75, 0.75)
    u = FieldSample.from_function(p.grid, G)
    delta = dom.signed_distance(p.grid.points()).reshape(p.grid.shape)
    cubes = [c for c in grid.descendants(Q0) if 3 <= c[0] <= 5][::2]
    regs_q = {c: R.U(c, "") for c in cubes}
    per = E.square_function_carleson(u, delta, R.U(Q0, ""), E.identity(), grid, regs_q).per_cube

    def weighted(x, y):
        return hsq(x, y) * dom.signed_distance(np.column_stack([x.ravel(), y.ravel()])).reshape(x.shape)

    errs = []
    for c, reg in regs_q.items():
        lo, hi = wd.box(np.array(sorted(reg.boxes)), "")
        ref = sum(_gauss_box(weighted, a, b, 6) for a, b in zip(lo, hi))
        errs.append(abs(per[c] - ref) / ref)
    dt = time.perf_counter() - t0
    ok = trend_ok and max(errs) <= 0.05 and dt < 600
    verdict(
        "AC9",
        ok,
        f"ratios N=3,4,5: {', '.join(f'{r:.3f}' for r in ratios)}; {len(errs)} cubes vs quadrature, max err {max(errs):.2%}; {dt:.0f}s",
    )
    assert ok


# ------------------------------------------------------------------ AC10
def test_ac10_ibp_identity_disk():
    from cadkit.whitney import WhitneyRegions

    t0 = time.perf_counter()
    disk = geo.disk(256)
    grid = build_grid(disk, 6)
    R = WhitneyRegions(grid, WhitneyDecomposition(disk, finest=9))
    p = E.DirichletProblem(disk, None, 1 / 256)
    rows, ok = [], True
    for cid in [(2, 0), (2, 1), (3, 0), (3, 3), (3, 5)]:
        r = E.ibp_identity_check(p, grid, cid, (0.0, 0.0), (2, 0), R.u_q_eps(cid, 0.25))
        ok &= abs(r.residual) <= 5 * p.h * grid.sigma(cid)
        rows.append(f"{cid[0]}:{cid[1]} res {r.residual:.1e}/{5 * p.h * grid.sigma(cid):.1e}")
    dt = time.perf_counter() - t0
    ok &= dt < 120
    verdict("AC10", ok, "disk " + "; ".join(rows) + f"; {dt:.0f}s")
    assert ok


@pytest.mark.xfail(strict=True, reason="bounded proxy with a finite pole: II is not identically zero")
def test_ac10_ibp_second_term_half_plane():
    from cadkit.whitney import WhitneyRegions

    hp = geo.half_plane_box(8, 16)
    grid = build_grid(hp, 9)
    R = WhitneyRegions(grid, WhitneyDecomposition(hp, finest=9, window=((-3, 0), (3, 4))))
    p = E.DirichletProblem(hp, None, 1 / 32)
    # floor cubes over [-2, 2]; the floor is the arc-length cube (2, 0)
    II = {cid: E.ibp_identity_check(p, grid, cid, (0.0, 2.0), (2, 0), R.u_q_eps(cid, 0.25)).II for cid in [(5, 3), (5, 4), (6, 7), (6, 8)]}
    ok = all(v == 0.0 for v in II.values())
    verdict("AC10", ok, "half-plane II = " + ", ".join(f"{v:.3g}" for v in II.values()) + " (expected exactly 0)")
    assert ok


# ------------------------------------------------------------------ AC11
def test_ac11_kenig_pipher():
    from cadkit.fields import FieldSample, Grid2D

    t0 = time.perf_counter()
    ladder = [2.0**k for k in range(-3, 4)]
    hp = geo.half_plane_box(8, 16)
    rows, ok = [], True
    for A in (E.identity(), E.kp_t_profile()):
        p = E.DirichletProblem(hp, A, 1 / 32)
        u, _ = p.solve(p.boundary_values(lambda f, s: ((f[:, 1] < 1e-12) & (f[:, 0] < 0)).astype(float)))
        kp = E.kenig_pipher_carleson(u, A, ladder)
        ok &= kp.holds
        rows.append(f"{A.name} sup {kp.sup:.3f} <= {kp.bound:.2f}")
    # A = I on the half-line data: u = arg(x + it)/π and the box integral is explicit
    exact = (0.5 * np.log(5) + 2 * np.arctan(0.5)) / np.pi**2
    errs = []
    for r in ladder:
        h = r / 256
        g = Grid2D.covering((-r, 0), (r, r), h, pad=1)
        _, Y = np.meshgrid(g.x, g.y)
        u = FieldSample.from_function(g, lambda x, y: np.arctan2(y, x) / np.pi, Y > 0)
        u.ghost = Y <= 0
        errs.append(abs(E.carleson_box_integral(u, -r / 2, r) - exact) / exact)
    dt = time.perf_counter() - t0
    ok &= max(errs) <= 0.02 and dt < 300
    verdict("AC11", ok, "; ".join(rows) + f"; closed form max err {max(errs):.2%} over 7 scales; {dt:.0f}s")
    assert ok


# ------------------------------------------------------------------ AC12
def test_ac12_reverse_holder():
    t0 = time.perf_counter()
    disk = geo.disk(256)
    grid = build_grid(disk, 4)
    rh_disk = E.rhq_fit(E.elliptic_measure(E.DirichletProblem(disk, None, 1 / 64), (0.0, 0.0), grid, 3), grid, 2.0).rh_max
    ok_disk = abs(rh_disk - 1) <= 1e-9

    # half-plane, pole (0, 1): dyadic Δ ⊆ [-1, 1] are floor cubes inside arc [7, 9]
    hp = geo.half_plane_box(8, 16)
    hp_vals = []
    for k, est in _half_plane_estimates(hp):
        g = build_grid(hp, k)
        deltas = {}
        for gen in range(6, k + 1):
            for j in range(2**gen):
                q = g[(gen, j)]
                if q.s0 >= 7 - 1e-12 and q.s1 <= 9 + 1e-12:
                    sh = k - gen
                    deltas[f"{gen}:{j}"] = [(k, i) for i in range(j << sh, (j + 1) << sh)]
        hp_vals.append(E.rhq_fit(est, g, 2.0, deltas).rh_max)
    ok_hp = max(hp_vals) <= 2

    cusp = geo.cusp_domain()
    k = 9
    g = build_grid(cusp, k)
    p = E.DirichletProblem(cusp, None, 1 / 256)
    est = E.elliptic_measure(p, (-0.5, 0.0), g, k)
    s_tip = cusp.project(np.array([[0.0, 0.0]]))[1][0]
    s_flat = cusp.project(np.array([[-1.0, 0.0]]))[1][0]
    tip, flat = (k, int(g.cube_of_param(s_tip, k))), (k, int(g.cube_of_param(s_flat, k)))
    fit = E.rhq_fit(est, g, 2.0, deltas={"tip": [tip], "flat": [flat]})
    ratio = fit.hyp["tip"] / fit.hyp["flat"]
    ok_cusp = ratio >= 10
    dt = time.perf_counter() - t0
    ok = ok_disk and ok_hp and ok_cusp and dt < 300
    verdict(
        "AC12",
        ok,
        f"disk RH_2 {rh_disk:.12f}; half-plane max RH_2 closed form {hp_vals[0]:.4f}, solver {hp_vals[1]:.4f}; "
        f"cusp tip/flat at generation {k}: {ratio:.1f}x; {dt:.0f}s",
    )
    assert ok


def _half_plane_estimates(hp):
    """Closed-form Poisson masses on generation 10 and solver masses on generation 8."""
    k = 10
    g = build_grid(hp, k)
    masses = {}
    for j in range(2**k):
        q = g[(k, j)]
        if q.s1 <= 16 + 1e-12:  # floor: x = s - 8
            masses[(k, j)] = float((np.arctan(q.s1 - 8) - np.arctan(q.s0 - 8)) / np.pi)
        else:
            masses[(k, j)] = 0.0
    yield k, E.EllipticMeasureEstimate(np.array([0.0, 1.0]), k, masses, None, 1.0, "closed form", None)
    k = 8
    yield k, E.elliptic_measure(E.DirichletProblem(hp, None, 1 / 32), (0.0, 1.0), build_grid(hp, k), k)
