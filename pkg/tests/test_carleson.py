import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _synth import brute_maximal_naive, cascade_measure, random_family, sparse_alpha
from cadkit import geometry as geo
from cadkit.carleson import (
    CertificationError,
    ContradictionError,
    DiscreteMeasure,
    PreconditionError,
    brute_force_maximal,
    carleson_norm,
    check_ainfty_hypothesis,
    corkscrew_from_packing,
    maximal_subcube_in_ball,
    packing_test,
    sawtooth_cubes,
    sawtooth_to_carleson,
    stopping_k1,
    stopping_time,
    subtree_sums,
    truncation_norms,
)
from cadkit.dyadic import CubeTree, build_grid


@pytest.fixture(scope="module")
def t8():
    return CubeTree.binary(8)


def test_norm_full_generations():
    m = 5
    t = CubeTree.binary(m)
    alpha = {c: t.sigma(c) for c in t.descendants(t.root)}
    norm, arg = carleson_norm(t, alpha)
    assert norm == pytest.approx(m + 1) and arg == (0, 0)


def test_norm_single_cube(t8):
    norm, arg = carleson_norm(t8, {(4, 3): 3 * t8.sigma((4, 3))})
    assert norm == pytest.approx(3.0) and arg == (4, 3)


def test_norm_matches_enumeration(t8, rng):
    alpha = sparse_alpha(t8, rng)
    cubes = list(t8.descendants(t8.root))
    assert len(cubes) == 2**9 - 1
    brute = max(sum(alpha.get(d, 0.0) for d in t8.descendants(c)) / t8.sigma(c) for c in cubes)
    assert carleson_norm(t8, alpha)[0] == pytest.approx(brute, rel=1e-12)


def test_truncations_monotone(t8, rng):
    tn = truncation_norms(t8, sparse_alpha(t8, rng))
    assert len(tn) == 9
    assert all(b >= a - 1e-15 for a, b in zip(tn, tn[1:]))


def test_measure_csv_roundtrip(rng):
    t = CubeTree.binary(4)
    m = DiscreteMeasure(sparse_alpha(t, rng))
    assert DiscreteMeasure.from_csv(m.to_csv()).alpha == m.alpha
    with pytest.raises(ValueError):
        DiscreteMeasure({(0, 0): -1.0})


def test_k1_formula():
    assert stopping_k1(1, 1) == pytest.approx(4.0)
    assert stopping_k1(4, 0.5) == pytest.approx(256.0)


def test_uniform_measure_never_stops():
    t = CubeTree.binary(6)
    mu = {c: t.sigma(c) for c in t.descendants(t.root)}
    fam = stopping_time(t, mu, t.root, K0=2, theta=0.5)
    assert fam.family == [] and fam.ample_fraction == 1.0


def test_branch_concentration():
    t = CubeTree.binary(6)
    leaf = {c: (0.1 / 63 if c != (6, 0) else 0.9) for c in t.leaves()}
    mu = {c: sum(leaf[d] for d in t.descendants(c) if d[0] == 6) for c in t.descendants(t.root)}
    # θ small enough that the single heavy leaf satisfies the A_inf-type hypothesis
    K0, theta = 4.0, 0.25
    fam = stopping_time(t, mu, t.root, K0, theta, check=True)
    assert (1, 1) in fam.family
    assert fam.family == brute_force_maximal(t, mu, t.root, K0, theta)
    lo, hi = 0.5, K0 * stopping_k1(K0, theta)
    assert fam.family == brute_maximal_naive(t, mu, t.root, lo, hi)
    assert fam.ample_fraction >= 1 / fam.K1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.2, 0.9))
def test_stopping_equals_brute(seed, spread):
    t = CubeTree.binary(6)
    mu = cascade_measure(t, np.random.default_rng(seed), spread)
    fam = stopping_time(t, mu, t.root, K0=1.0, theta=1.0, check=False)
    assert fam.family == brute_maximal_naive(t, mu, t.root, 0.5, 4.0)
    assert sorted(fam.sawtooth) == sorted(sawtooth_cubes(t, fam.family, t.root))


def test_precondition_raised():
    t = CubeTree.binary(4)
    mu = {c: t.sigma(c) for c in t.descendants(t.root)}
    mu = {c: 10 * v for c, v in mu.items()}
    with pytest.raises(PreconditionError):
        stopping_time(t, mu, t.root, K0=2, theta=1)


def test_ainfty_hypothesis_check():
    t = CubeTree.binary(4)
    mu = {c: t.sigma(c) for c in t.descendants(t.root)}
    assert check_ainfty_hypothesis(t, mu, t.root, K0=1, theta=1) == pytest.approx(1.0)
    heavy = dict(mu)
    for c in t.ancestors((4, 0)) + [(4, 0)]:
        heavy[c] = mu[c] + 0.5
    with pytest.raises(PreconditionError) as exc:
        check_ainfty_hypothesis(t, heavy, t.root, K0=1.2, theta=1)
    assert exc.value.family


def test_certificate_zero():
    t = CubeTree.binary(4)
    cert = sawtooth_to_carleson(t, {}, lambda q: [], K1=2, M1=0.0)
    assert cert.bound == 0 and cert.holds


def test_certificate_half_families():
    t = CubeTree.binary(6)
    g = 3
    alpha = {c: t.sigma(c) for c in t.generation(g)}

    def oracle(q):
        ch = t.children(q)
        return ch[1:] if ch else []

    cert = sawtooth_to_carleson(t, alpha, oracle, K1=2, M1=1)
    assert cert.holds and cert.norm <= 2


def test_mass_below_family_excluded():
    t = CubeTree.binary(6)
    stop = (2, 1)
    alpha = {c: 100 * t.sigma(c) for c in t.descendants(stop, include_self=False)}
    below = lambda q: ([stop] if q == t.root else None)
    cert = sawtooth_to_carleson(t, alpha, below, K1=2, M1=0.0)
    rec = cert.records[0]
    assert rec["mass_residual"] == 0.0 and cert.truncated
    with pytest.raises(CertificationError):
        sawtooth_to_carleson(t, alpha, lambda q: [], K1=2, M1=1.0)


def test_family_must_be_disjoint():
    t = CubeTree.binary(4)
    with pytest.raises(ValueError):
        sawtooth_to_carleson(t, {}, lambda q: [(1, 0), (2, 0)] if q == t.root else [], K1=4, M1=1)


def test_random_certificates(t8, rng):
    for _ in range(10):
        alpha = sparse_alpha(t8, rng)
        K1 = 3.0
        fams = {q: random_family(t8, q, K1, rng) for q in t8.descendants(t8.root)}
        M1 = max(sum(alpha.get(c, 0) for c in sawtooth_cubes(t8, fams[q], q)) / t8.sigma(q) for q in fams)
        cert = sawtooth_to_carleson(t8, alpha, fams.get, K1, M1)
        assert cert.norm <= cert.bound * (1 + 1e-12)


def test_packing_basics():
    t = CubeTree.binary(5)
    assert packing_test(t, [])[0] == 0
    assert packing_test(t, t.generation(3))[0] == pytest.approx(1.0)
    full = [c for k in range(3) for c in t.generation(k)]
    assert packing_test(t, full)[0] == pytest.approx(3.0)


@pytest.fixture(scope="module")
def seg_grid():
    return build_grid(geo.segment(), 6)


def test_corkscrew_from_packing(seg_grid):
    q1 = maximal_subcube_in_ball(seg_grid, (1, 0))
    w = corkscrew_from_packing(seg_grid, (1, 0), 0.5, [], c0=1 / 32)
    assert w.good == q1 and w.c0_prime == pytest.approx(seg_grid.c / 32)
    bad = [q1] + seg_grid.children(q1)
    w = corkscrew_from_packing(seg_grid, (1, 0), 2.0, bad, 1 / 32)
    assert w.good[0] == q1[0] + 2 and w.generations == 2


def test_packing_contradiction(seg_grid):
    q1 = maximal_subcube_in_ball(seg_grid, (1, 0))
    bad = [c for c in seg_grid.descendants(q1) if c[0] <= q1[0] + 2]
    with pytest.raises(ContradictionError):
        corkscrew_from_packing(seg_grid, (1, 0), 2.0, bad, 1 / 32)


def test_subtree_sums_additive(t8, rng):
    alpha = sparse_alpha(t8, rng)
    s = subtree_sums(t8, alpha)
    for c in itertools.islice(t8.descendants(t8.root), 100):
        ch = t8.children(c)
        if ch:
            assert s[c] == pytest.approx(alpha.get(c, 0) + sum(s[d] for d in ch))
