"""Artin transfer maps, transfer kernel types, and pattern canonicalization.

For a 3-group G with elementary commutator quotient of rank d in {2,3}, the
maximal subgroups are the preimages of the hyperplanes of G/Phi(G).  The
transfer to each maximal subgroup is computed by the coset formula; kernels
are recorded as projective line indices of F3^d (0 when the kernel is larger
than a line).

Rank 3 indexing: maximal subgroups are ordered by the canonical normal
vector of their plane (13 planes), kernels by line index (13 lines).
Rank 2 indexing: a hyperplane of F3^2 is itself a line, so maximal subgroups
and kernels share one index set (4 lines), which is what makes fixed points
of kappa meaningful there.
"""

from __future__ import annotations

import itertools
import json
import random as _random
import re
from dataclasses import dataclass
from functools import lru_cache

from . import linalg3, pcgroup
from .pcgroup import PcPresentation, Subgroup


class RankError(ValueError):
    """Commutator quotient rank outside the supported range {2,3}."""


# ---------------------------------------------------------------------------
# maximal subgroups

def commutator_quotient_rank(pres: PcPresentation):
    ab = pcgroup.abelian_invariants(pres)
    return len(ab), ab


def _check_rank(pres: PcPresentation) -> int:
    rank, ab = commutator_quotient_rank(pres)
    if rank not in (2, 3) or any(x != 1 for x in ab):
        raise RankError(
            f"commutator quotient {ab} not elementary of rank 2 or 3"
        )
    if rank != pres.d:
        raise RankError("generator rank does not match commutator quotient rank")
    return rank


def _hyperplane_subgroup(pres: PcPresentation, normal) -> Subgroup:
    c = pres.collector
    d = pres.d
    phi_gens = [pres.generator(k) for k in range(d, pres.n)]
    gens = list(phi_gens)
    for v in linalg3.nullspace((normal,), d):
        x = pres.identity
        for i in range(d):
            if v[i]:
                x = c.mult(x, c.power(pres.generator(i), v[i]))
        gens.append(x)
    return pcgroup.subgroup_from_generators(pres, gens, normal_under=pres.generators())


def maximal_subgroups(pres: PcPresentation) -> list[Subgroup]:
    """All (3^d-1)/2 maximal subgroups, in canonical label order.

    d=3: subgroup j has plane normal linalg3.line_reps(3)[j-1].
    d=2: subgroup j *is* the line linalg3.line_reps(2)[j-1] of G/Phi(G).
    """
    d = _check_rank(pres)
    if d == 3:
        return [_hyperplane_subgroup(pres, u) for u in linalg3.line_reps(3)]
    # d == 2: order subgroups by the line they project to
    out = []
    for v in linalg3.line_reps(2):
        normal = next(u for u in linalg3.line_reps(2) if linalg3.dot(u, v) == 0)
        out.append(_hyperplane_subgroup(pres, normal))
    return out


# ---------------------------------------------------------------------------
# transfers

@dataclass
class TransferMap:
    """Transfer G/G' -> M/M', stored by images of the generator classes."""

    pres: PcPresentation
    target: Subgroup
    target_derived: Subgroup
    images: tuple[bytes, ...]   # transfer of a_1..a_d, reduced mod M'

    def image_of_class(self, v) -> bytes:
        c = self.pres.collector
        x = self.pres.identity
        for img, e in zip(self.images, v):
            if e:
                x = c.mult(x, c.power(img, e))
        return self.target_derived.sift(x)

    def kernel_classes(self):
        d = self.pres.d
        return [
            v
            for v in itertools.product((0, 1, 2), repeat=d)
            if not any(self.image_of_class(v))
        ]

    def kernel_subspace(self):
        ker = [v for v in self.kernel_classes() if any(v)]
        return linalg3.rref(ker) if ker else ()


def _transversal(pres: PcPresentation, sub: Subgroup, rng=None):
    """A transversal (1, t, t^2) of a maximal subgroup."""
    c = pres.collector
    if rng is None:
        t = next(g for g in pres.generators() if not sub.contains(g))
    else:
        while True:
            t = bytes(rng.randrange(3) for _ in range(pres.n))
            if not sub.contains(t):
                break
    return [pres.identity, t, c.power(t, 2)]


def transfer(pres: PcPresentation, sub: Subgroup, rng=None) -> TransferMap:
    """Artin transfer to a maximal subgroup via the coset formula.

    With rng given, a random transversal is used (the result is transversal
    independent; this is exercised by the property tests).
    """
    if sub.log_order != pres.n - 1:
        raise ValueError("transfer target must be a maximal subgroup")
    c = pres.collector
    trans = _transversal(pres, sub, rng)
    trans_inv = [c.inverse(t) for t in trans]
    der = pcgroup.derived_subgroup(pres, sub)
    images = []
    for i in range(pres.d):
        g = pres.generator(i)
        total = pres.identity
        for t in trans:
            x = c.mult(t, g)
            for tj_inv in trans_inv:
                m = c.mult(x, tj_inv)
                if sub.contains(m):
                    total = c.mult(total, m)
                    break
            else:
                raise RuntimeError("transversal does not cover the group")
        images.append(der.sift(total))
    return TransferMap(pres, sub, der, tuple(images))


# ---------------------------------------------------------------------------
# patterns

@dataclass
class ArtinPattern:
    rank: int
    kappa: tuple[int, ...]          # 0 = kernel of dimension >= 2
    kappa_dims: tuple[int, ...]     # dimension of each kernel
    alpha: tuple[tuple[int, ...], ...]
    taussky: str
    alpha2: tuple[tuple[tuple[int, ...], ...], ...] | None = None
    canonical: bool = False

    def to_json_dict(self) -> dict:
        return {
            "rank": self.rank,
            "kappa": list(self.kappa),
            "kappa_dims": list(self.kappa_dims),
            "alpha": [list(p) for p in self.alpha],
            "alpha_shorthand": [pcgroup.partition_shorthand(p) for p in self.alpha],
            "taussky": self.taussky,
            "alpha2": None
            if self.alpha2 is None
            else [[list(p) for p in block] for block in self.alpha2],
            "alpha2_shorthand": None if self.alpha2 is None else format_alpha2(self),
            "canonical": self.canonical,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ArtinPattern":
        return cls(
            rank=d["rank"],
            kappa=tuple(d["kappa"]),
            kappa_dims=tuple(d["kappa_dims"]),
            alpha=tuple(tuple(p) for p in d["alpha"]),
            taussky=d["taussky"],
            alpha2=None
            if d.get("alpha2") is None
            else tuple(tuple(tuple(p) for p in block) for block in d["alpha2"]),
            canonical=d.get("canonical", False),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    def key(self):
        return (self.rank, self.kappa, self.alpha, self.taussky, self.alpha2)


def transfer_kernel_type(pres: PcPresentation, maximals=None, rng=None):
    """kappa sequence plus kernel dimensions."""
    d = _check_rank(pres)
    if maximals is None:
        maximals = maximal_subgroups(pres)
    kappa, dims = [], []
    for sub in maximals:
        ker = transfer(pres, sub, rng=rng).kernel_subspace()
        dim = len(ker)
        dims.append(dim)
        kappa.append(linalg3.line_index(ker[0]) if dim == 1 else 0)
    return tuple(kappa), tuple(dims)


def taussky_types(pres: PcPresentation, kappa=None, dims=None) -> str:
    """Type A when the kernel meets the maximal subgroup nontrivially."""
    d = _check_rank(pres)
    if kappa is None:
        kappa, dims = transfer_kernel_type(pres)
    out = []
    for j, (k, dim) in enumerate(zip(kappa, dims)):
        if dim >= 2:
            out.append("A")  # any >=2-dim subspace meets every hyperplane
            continue
        line = linalg3.line_vector(d, k)
        if d == 3:
            normal = linalg3.line_reps(3)[j]
            out.append("A" if linalg3.dot(normal, line) == 0 else "B")
        else:
            out.append("A" if k == j + 1 else "B")
    return "".join(out)


def first_order_pattern(pres: PcPresentation, with_alpha2: bool = False) -> ArtinPattern:
    d = _check_rank(pres)
    maximals = maximal_subgroups(pres)
    kappa, dims = transfer_kernel_type(pres, maximals)
    alpha = tuple(pcgroup.abelian_invariants(pres, m) for m in maximals)
    taussky = taussky_types(pres, kappa, dims)
    alpha2 = second_order_blocks(pres, maximals) if with_alpha2 else None
    return ArtinPattern(d, kappa, dims, alpha, taussky, alpha2)


def second_order_blocks(pres: PcPresentation, maximals=None):
    """Per maximal subgroup, the sorted AQIs of its maximal subgroups."""
    if maximals is None:
        maximals = maximal_subgroups(pres)
    blocks = []
    for m in maximals:
        second = pcgroup.maximal_subgroups_of(pres, m)
        aqis = sorted(
            (pcgroup.abelian_invariants(pres, h) for h in second), reverse=True
        )
        blocks.append(tuple(aqis))
    return tuple(blocks)


def second_order_pattern(pres: PcPresentation) -> ArtinPattern:
    return first_order_pattern(pres, with_alpha2=True)


def expected_second_layer_count(alpha_j) -> int:
    """n_j: 4, 13 or 40 according to the rank of the first-layer AQI."""
    return (3 ** len(alpha_j) - 1) // 2


# ---------------------------------------------------------------------------
# shorthand formatting for second-order patterns

def format_alpha2(pattern: ArtinPattern) -> str:
    """Bracket shorthand [(a);(b1)(b2)^e...]^mult, deterministically ordered."""
    if pattern.alpha2 is None:
        raise ValueError("pattern has no second-order data")
    blocks = {}
    for a, inner in zip(pattern.alpha, pattern.alpha2):
        key = (a, inner)
        blocks[key] = blocks.get(key, 0) + 1
    out = []
    for (a, inner), mult in sorted(blocks.items(), reverse=True):
        inner_parts = []
        for p, grp in itertools.groupby(inner):
            cnt = len(list(grp))
            s = f"({pcgroup.partition_shorthand(p)})"
            inner_parts.append(s + (f"^{cnt}" if cnt > 1 else ""))
        head = f"({pcgroup.partition_shorthand(a)})"
        out.append(
            f"[{head};{''.join(inner_parts)}]" + (f"^{mult}" if mult > 1 else "")
        )
    return "".join(out)


_A2_BLOCK = re.compile(r"\[\(([^)]*)\);((?:\([^)]*\)(?:\^\d+)?)*)\](?:\^(\d+))?")
_A2_INNER = re.compile(r"\(([^)]*)\)(?:\^(\d+))?")


def parse_alpha2(s: str):
    """Parse bracket shorthand into a multiset {(alpha, inner): multiplicity}."""
    s = s.replace(" ", "")
    blocks = {}
    consumed = 0
    for m in _A2_BLOCK.finditer(s):
        consumed += len(m.group(0))
        a = pcgroup.parse_partition(m.group(1))
        inner = []
        for im in _A2_INNER.finditer(m.group(2)):
            inner.extend([pcgroup.parse_partition(im.group(1))] * int(im.group(2) or 1))
        inner = tuple(sorted(inner, reverse=True))
        mult = int(m.group(3) or 1)
        key = (a, inner)
        blocks[key] = blocks.get(key, 0) + mult
    if consumed != len(s):
        raise ValueError(f"unparsed second-order shorthand: {s!r}")
    return blocks


def alpha2_multiset(pattern: ArtinPattern):
    blocks = {}
    for a, inner in zip(pattern.alpha, pattern.alpha2):
        key = (a, inner)
        blocks[key] = blocks.get(key, 0) + 1
    return blocks


# ---------------------------------------------------------------------------
# rank distribution / HBC

SCENARIOS = {(1, 12): 1, (4, 9): 2, (7, 6): 3}


def rank_distribution(alpha):
    """(a, b) with a rank-3 and b rank-2 entries, plus a scenario label."""
    a = sum(1 for p in alpha if len(p) >= 3)
    b = sum(1 for p in alpha if len(p) == 2)
    label = f"(3^{a},2^{b})"
    scenario = SCENARIOS.get((a, b))
    return {
        "rank3": a,
        "rank2": b,
        "label": label,
        "scenario": scenario if scenario is not None else "non-HBC scenario",
    }


def kappa_is_permutation(kappa) -> bool:
    return 0 not in kappa and len(set(kappa)) == len(kappa)


def is_hbc(pres: PcPresentation, pattern: ArtinPattern | None = None) -> bool:
    """All 13 transfer kernels are lines and kappa is a permutation."""
    if pattern is None:
        pattern = first_order_pattern(pres)
    if pattern.rank != 3:
        raise RankError("harmonically balanced capitulation is a rank-3 notion")
    return kappa_is_permutation(pattern.kappa)


# ---------------------------------------------------------------------------
# canonical forms under GL(d,3) relabeling

@lru_cache(maxsize=None)
def _relabel_tables(d: int):
    """For each g in GL(d,3): (plane permutation, line permutation), 0-based.

    Lines transform by v -> g v, planes (via normal vectors) by u -> g^-T u.
    """
    lines = linalg3.line_reps(d)
    tables = []
    for g in linalg3.gl3_elements(d):
        ginv_t = linalg3.mat_transpose(linalg3.mat_inverse(g))
        line_perm = tuple(
            linalg3.line_index(linalg3.mat_vec(g, v)) - 1 for v in lines
        )
        if d == 3:
            plane_perm = tuple(
                linalg3.line_index(linalg3.mat_vec(ginv_t, u)) - 1 for u in lines
            )
        else:
            # rank 2: maximal subgroups are labeled by the line they contain
            plane_perm = line_perm
        tables.append((plane_perm, line_perm))
    return tuple(tables)


_canonical_cache: dict = {}


def canonical_pattern(pattern: ArtinPattern) -> ArtinPattern:
    """Minimum of the pattern over the simultaneous GL(d,3) relabeling action.

    Two groups have GL-equivalent patterns iff their canonical forms coincide;
    the map is idempotent and constant on orbits.
    """
    cached = _canonical_cache.get(pattern.key())
    if cached is not None:
        return cached
    d = pattern.rank
    m = len(pattern.kappa)
    best = None
    for plane_perm, line_perm in _relabel_tables(d):
        kappa = [0] * m
        dims = [0] * m
        alpha = [None] * m
        taussky = [""] * m
        alpha2 = [None] * m if pattern.alpha2 is not None else None
        for j in range(m):
            j2 = plane_perm[j]
            k = pattern.kappa[j]
            kappa[j2] = line_perm[k - 1] + 1 if k else 0
            dims[j2] = pattern.kappa_dims[j]
            alpha[j2] = pattern.alpha[j]
            taussky[j2] = pattern.taussky[j]
            if alpha2 is not None:
                alpha2[j2] = pattern.alpha2[j]
        cand = (
            tuple(kappa),
            tuple(alpha),
            "".join(taussky),
            tuple(dims),
            None if alpha2 is None else tuple(alpha2),
        )
        if best is None or cand < best:
            best = cand
    result = ArtinPattern(
        rank=d,
        kappa=best[0],
        kappa_dims=best[3],
        alpha=best[1],
        taussky=best[2],
        alpha2=best[4],
        canonical=True,
    )
    _canonical_cache[pattern.key()] = result
    _canonical_cache[result.key()] = result
    return result


def patterns_equivalent(p1: ArtinPattern, p2: ArtinPattern) -> bool:
    return canonical_pattern(p1).key() == canonical_pattern(p2).key()


def relabel_pattern(pattern: ArtinPattern, g) -> ArtinPattern:
    """Apply one GL(d,3) relabeling (used by the orbit-constancy tests)."""
    d = pattern.rank
    lines = linalg3.line_reps(d)
    ginv_t = linalg3.mat_transpose(linalg3.mat_inverse(g))
    line_perm = [linalg3.line_index(linalg3.mat_vec(g, v)) - 1 for v in lines]
    if d == 3:
        plane_perm = [linalg3.line_index(linalg3.mat_vec(ginv_t, u)) - 1 for u in lines]
    else:
        plane_perm = line_perm
    m = len(pattern.kappa)
    kappa = [0] * m
    dims = [0] * m
    alpha = [None] * m
    taussky = [""] * m
    alpha2 = [None] * m if pattern.alpha2 is not None else None
    for j in range(m):
        j2 = plane_perm[j]
        k = pattern.kappa[j]
        kappa[j2] = line_perm[k - 1] + 1 if k else 0
        dims[j2] = pattern.kappa_dims[j]
        alpha[j2] = pattern.alpha[j]
        taussky[j2] = pattern.taussky[j]
        if alpha2 is not None:
            alpha2[j2] = pattern.alpha2[j]
    return ArtinPattern(
        rank=d,
        kappa=tuple(kappa),
        kappa_dims=tuple(dims),
        alpha=tuple(alpha),
        taussky="".join(taussky),
        alpha2=None if alpha2 is None else tuple(alpha2),
    )


# ---------------------------------------------------------------------------
# relation-rank bounds from field invariants

@dataclass(frozen=True)
class ShafarevichInput:
    rho: int                      # 3-class rank
    r: int                        # torsion-free unit rank
    theta: int = 0                # 1 iff the field contains a primitive cube root of unity
    signature: tuple[int, int] | None = None

    def __post_init__(self):
        if self.rho < 0 or self.r < 0 or self.theta not in (0, 1):
            raise ValueError("invalid bound inputs")
        if self.signature is not None:
            r1, r2 = self.signature
            if r1 + r2 - 1 != self.r:
                raise ValueError("unit rank does not match signature")


def shafarevich_bounds(inp: ShafarevichInput) -> tuple[int, int]:
    """(lower, upper) bounds for the relation rank of the tower group."""
    return inp.rho, inp.rho + inp.r + inp.theta
