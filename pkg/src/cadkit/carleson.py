"""Discrete Carleson measures on cube trees, stopping times and packing tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

from .dyadic import CubeId, CubeTree, DyadicGrid, ResolutionError


class PreconditionError(ValueError):
    """Input measure violates the stopping-time hypotheses."""

    def __init__(self, message: str, family=None):
        super().__init__(message)
        self.family = family


class PostconditionError(RuntimeError):
    pass


class CertificationError(RuntimeError):
    def __init__(self, message: str, cube: CubeId | None = None):
        super().__init__(message)
        self.cube = cube


class ContradictionError(RuntimeError):
    """No good cube where the packing bound says there must be one."""


@dataclass
class DiscreteMeasure:
    alpha: dict[CubeId, float]
    root: CubeId = (0, 0)

    def __post_init__(self):
        if any(v < 0 for v in self.alpha.values()):
            raise ValueError("alpha must be nonnegative")

    def __getitem__(self, cid: CubeId) -> float:
        return self.alpha.get(cid, 0.0)

    def mass(self, cubes) -> float:
        """``m_α(D')`` for a collection ``D'``."""
        return float(sum(self.alpha.get(c, 0.0) for c in cubes))

    def to_csv(self) -> str:
        lines = ["cube_id,alpha"]
        for cid in sorted(self.alpha):
            lines.append(f"{cid[0]}:{cid[1]},{self.alpha[cid]!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "DiscreteMeasure":
        alpha = {}
        for line in text.strip().splitlines()[1:]:
            cid, val = line.split(",")
            k, j = cid.split(":")
            alpha[(int(k), int(j))] = float(val)
        return cls(alpha)


def subtree_sums(tree: CubeTree, alpha: Mapping[CubeId, float], root: CubeId | None = None) -> dict[CubeId, float]:
    """``m_α(D_Q)`` for every ``Q`` below ``root`` by post-order accumulation."""
    root = tree.root if root is None else root
    acc: dict[CubeId, float] = {}
    for c in tree.postorder(root):
        acc[c] = alpha.get(c, 0.0) + sum(acc[ch] for ch in tree.children(c))
    return acc


def carleson_norm(tree: CubeTree, alpha, root: CubeId | None = None) -> tuple[float, CubeId]:
    """``sup_{Q ⊆ root} m_α(D_Q)/σ(Q)`` and a cube attaining it (lowest id on ties)."""
    a = alpha.alpha if isinstance(alpha, DiscreteMeasure) else alpha
    sums = subtree_sums(tree, a, root)
    best, arg = -1.0, None
    for c in sorted(sums):
        v = sums[c] / tree.sigma(c)
        if v > best:
            best, arg = v, c
    return best, arg


def truncation_norms(tree: CubeTree, alpha: Mapping[CubeId, float], root: CubeId | None = None) -> list[float]:
    """Norms of ``α`` restricted to generations ``<= k0 + N`` for ``N = 0..depth``."""
    root = tree.root if root is None else root
    out = []
    for n in range(root[0], tree.depth + 1):
        cut = {c: v for c, v in alpha.items() if c[0] <= n}
        out.append(carleson_norm(tree, cut, root)[0])
    return out


# ----------------------------------------------------------------- stopping
def _dyadic(x: float) -> bool:
    return Fraction(x).denominator <= 2**40


class _Cmp:
    """Threshold comparisons: exact on dyadic rationals, 1e-12 slack otherwise."""

    def __init__(self, values):
        self.exact = all(_dyadic(v) for v in values)

    def below(self, mu: float, sigma: float, t: float) -> bool:
        if self.exact:
            return Fraction(mu) < Fraction(t) * Fraction(sigma)
        return mu / sigma < t - 1e-12

    def above(self, mu: float, sigma: float, t: float) -> bool:
        if self.exact:
            return Fraction(mu) > Fraction(t) * Fraction(sigma)
        return mu / sigma > t * (1 + 1e-12)


@dataclass
class StoppingFamily:
    root: CubeId
    family: list[CubeId]
    K0: float
    theta: float
    K1: float
    ample_fraction: float
    density_range: tuple[float, float]
    sawtooth: list[CubeId] = field(repr=False, default_factory=list)


def stopping_k1(K0: float, theta: float) -> float:
    return (4 * K0) ** (1 / theta)


def measure_of_cubes(tree: CubeTree, mu_leaf_or_cube: Mapping[CubeId, float]) -> dict[CubeId, float]:
    """Extend a measure given on leaves to every cube (sums over children)."""
    out = dict(mu_leaf_or_cube)
    for c in tree.postorder():
        if c not in out:
            out[c] = sum(out[ch] for ch in tree.children(c))
    return out


def check_ainfty_hypothesis(tree: CubeTree, mu: Mapping[CubeId, float], Q0: CubeId, K0: float, theta: float, levels: int = 4):
    """Verify ``μ(F) <= K0 (σ(F)/σ(Q0))^θ σ(Q0)`` over all unions of cubes of depth ``<= levels`` below ``Q0``.

    Returns the worst slack ratio ``μ(F) / bound``; raises on violation.
    """
    m = min(levels, tree.depth - Q0[0])
    base = [Q0]
    for _ in range(m):
        base = [c for q in base for c in tree.children(q)]
    s0 = tree.sigma(Q0)
    sig = np.array([tree.sigma(c) for c in base])
    mus = np.array([mu[c] for c in base])
    n = len(base)
    masks = np.arange(1, 2**n, dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
    sF = bits @ sig
    mF = bits @ mus
    bound = K0 * (sF / s0) ** theta * s0
    ratio = mF / bound
    worst = int(np.argmax(ratio))
    if ratio[worst] > 1 + 1e-12:
        fam = [base[i] for i in range(n) if bits[worst, i]]
        raise PreconditionError(f"A_inf-type hypothesis fails for F = {fam}", family=fam)
    return float(ratio[worst])


def stopping_time(
    tree: CubeTree,
    mu: Mapping[CubeId, float],
    Q0: CubeId,
    K0: float,
    theta: float,
    check: bool = True,
    levels: int = 4,
) -> StoppingFamily:
    """Maximal cubes ``Q ⊊ Q0`` with ``μ(Q)/σ(Q) < 1/2`` or ``> K0·K1``, ``K1 = (4K0)^{1/θ}``."""
    if not (0 < theta <= 1) or K0 < 1:
        raise ValueError("need K0 >= 1 and 0 < theta <= 1")
    K1 = stopping_k1(K0, theta)
    top = K0 * K1
    cmp = _Cmp([tree.sigma(c) for c in tree.descendants(Q0)] + [mu[c] for c in tree.descendants(Q0)] + [top])
    if check:
        r = mu[Q0] / tree.sigma(Q0)
        if cmp.below(mu[Q0], tree.sigma(Q0), 1.0) or cmp.above(mu[Q0], tree.sigma(Q0), K0):
            raise PreconditionError(f"μ(Q0)/σ(Q0) = {r} outside [1, K0]", family=[Q0])
        check_ainfty_hypothesis(tree, mu, Q0, K0, theta, levels)
    family: list[CubeId] = []
    saw: list[CubeId] = [Q0]
    stack = list(reversed(tree.children(Q0)))
    while stack:
        c = stack.pop()
        m, s = mu[c], tree.sigma(c)
        if cmp.below(m, s, 0.5) or cmp.above(m, s, top):
            family.append(c)
        else:
            saw.append(c)
            stack.extend(reversed(tree.children(c)))
    family.sort()
    s0 = tree.sigma(Q0)
    ample = (s0 - sum(tree.sigma(c) for c in family)) / s0
    dens = [mu[c] / tree.sigma(c) for c in saw]
    res = StoppingFamily(Q0, family, K0, theta, K1, ample, (min(dens), max(dens)), sorted(saw))
    if check:
        if ample < 1 / K1 - 1e-12:
            raise PostconditionError(f"ample contact fails: {ample} < 1/K1 = {1 / K1}")
        if any(cmp.below(mu[c], tree.sigma(c), 0.5) or cmp.above(mu[c], tree.sigma(c), top) for c in saw):
            raise PostconditionError("density bounds fail on the sawtooth")
    return res


def brute_force_maximal(tree: CubeTree, mu: Mapping[CubeId, float], Q0: CubeId, K0: float, theta: float) -> list[CubeId]:
    """Reference: all stopped cubes with no stopped ancestor strictly below ``Q0``."""
    top = K0 * stopping_k1(K0, theta)
    stopped = {c for c in tree.descendants(Q0, include_self=False) if mu[c] / tree.sigma(c) < 0.5 or mu[c] / tree.sigma(c) > top}
    out = []
    for c in stopped:
        anc = [a for a in tree.ancestors(c) if tree.contains(Q0, a) and a != Q0]
        if not any(a in stopped for a in anc):
            out.append(c)
    return sorted(out)


def sawtooth_cubes(tree: CubeTree, family, Q0: CubeId) -> list[CubeId]:
    """``D_{F,Q0}``: cubes of ``D_{Q0}`` not contained in any member of ``F``."""
    fam = set(family)
    out = []
    stack = [Q0]
    while stack:
        c = stack.pop()
        if c in fam:
            continue
        out.append(c)
        stack.extend(tree.children(c))
    return sorted(out)


# ---------------------------------------------------------- amplification
@dataclass
class Certificate:
    bound: float
    norm: float
    K1: float
    M1: float
    holds: bool
    truncated: bool
    records: list[dict]

    def to_json(self) -> dict:
        return {
            "bound": self.bound,
            "norm": self.norm,
            "K1": self.K1,
            "M1": self.M1,
            "holds": self.holds,
            "truncated": self.truncated,
            "roots": self.records,
        }


def sawtooth_to_carleson(
    tree: CubeTree,
    alpha,
    oracle: Callable[[CubeId], list[CubeId] | None],
    K1: float,
    M1: float,
    root: CubeId | None = None,
) -> Certificate:
    """Certify ``‖m_α‖ <= K1·M1`` from per-root families with ample contact and sawtooth mass ``<= M1 σ(Q0)``."""
    a = alpha.alpha if isinstance(alpha, DiscreteMeasure) else dict(alpha)
    root = tree.root if root is None else root
    norm, _ = carleson_norm(tree, a, root)
    sums = subtree_sums(tree, a, root)
    records = []
    truncated = False
    for Q0 in sorted(tree.descendants(root)):
        fam = oracle(Q0)
        if fam is None:
            truncated = True
            continue
        fam = sorted(fam)
        _check_disjoint(tree, fam, Q0)
        s0 = tree.sigma(Q0)
        contact = (s0 - sum(tree.sigma(c) for c in fam)) / s0
        saw = sawtooth_cubes(tree, fam, Q0)
        saw_mass = sum(a.get(c, 0.0) for c in saw)
        r_ample = contact - 1 / K1
        r_mass = M1 - saw_mass / s0
        if r_ample < -1e-12:
            raise CertificationError(f"ample contact fails at {Q0}: {contact} < 1/K1", Q0)
        if r_mass < -1e-12:
            raise CertificationError(f"sawtooth mass exceeds M1 at {Q0}", Q0)
        below = sum(sums[c] for c in fam)
        chain = below <= (1 - 1 / K1) * norm * s0 * (1 + 1e-12) + 1e-300
        records.append(
            {
                "Q0": f"{Q0[0]}:{Q0[1]}",
                "family": [f"{c[0]}:{c[1]}" for c in fam],
                "ample_residual": r_ample,
                "mass_residual": r_mass,
                "chain_holds": bool(chain),
            }
        )
    bound = K1 * M1
    holds = norm <= bound * (1 + 1e-12)
    if not holds and not truncated:
        raise CertificationError(f"norm {norm} exceeds certified bound {bound}")
    return Certificate(bound, norm, K1, M1, holds, truncated, records)


def _check_disjoint(tree: CubeTree, fam, Q0):
    for i, a in enumerate(fam):
        if not tree.contains(Q0, a):
            raise ValueError(f"family member {a} is not inside {Q0}")
        for b in fam[i + 1 :]:
            if tree.contains(a, b) or tree.contains(b, a):
                raise ValueError(f"family not disjoint: {a}, {b}")


# --------------------------------------------------------------- packing
def packing_test(tree: CubeTree, bad, root: CubeId | None = None) -> tuple[float, dict[CubeId, float]]:
    """``M1_hat = sup_Q Σ_{Q' ∈ B, Q' ⊆ Q} σ(Q')/σ(Q)`` with the per-cube profile."""
    alpha = {c: tree.sigma(c) for c in bad}
    sums = subtree_sums(tree, alpha, root)
    profile = {c: sums[c] / tree.sigma(c) for c in sorted(sums)}
    return (max(profile.values()) if profile else 0.0), profile


@dataclass
class PackingWitness:
    Q: CubeId
    Q1: CubeId
    good: CubeId
    c0_prime: float
    generations: int


def maximal_subcube_in_ball(grid: DyadicGrid, cid: CubeId) -> CubeId:
    """Largest descendant of ``Q`` lying inside ``Δ_Q = B(x_Q, r_Q) ∩ ∂Ω``, following ``x_Q``."""
    q = grid[cid]
    s = 0.5 * (q.s0 + q.s1)
    for k in range(cid[0], grid.depth + 1):
        # candidates at this generation in id order: the one holding x_Q first
        j_center = int(grid.cube_of_param(s, k))
        js = sorted(j for j in range(2**k) if grid.contains(cid, (k, j)))
        js.sort(key=lambda j: (j != j_center, j))
        for j in js:
            a, b = grid.pieces((k, j))
            v = np.vstack([a, b])
            if np.all(np.linalg.norm(v - q.center, axis=1) < q.radius):
                return (k, j)
    raise ResolutionError(f"no descendant of {cid} fits inside its surface ball at this depth")


def corkscrew_from_packing(grid: DyadicGrid, cid: CubeId, M1: float, bad, c0: float) -> PackingWitness:
    """Find ``Q' ∈ D_{Q1} ∖ B`` with ``ℓ(Q') >= 2^{-⌊M1⌋} ℓ(Q1)``; ``c0' = c0·c·2^{-⌊M1⌋}``."""
    bad = set(bad)
    q1 = maximal_subcube_in_ball(grid, cid)
    m = int(math.floor(M1))
    level = [q1]
    for g in range(m + 1):
        for c in sorted(level):
            if c not in bad:
                return PackingWitness(cid, q1, c, c0 * grid.c * 2.0**-m, g)
        if g == m:
            break
        if q1[0] + g + 1 > grid.depth:
            raise ResolutionError("grid too shallow to finish the packing search")
        level = [ch for c in level for ch in grid.children(c)]
    raise ContradictionError(f"all cubes within {m} generations below {q1} are bad; packing bound {M1} is inconsistent")
