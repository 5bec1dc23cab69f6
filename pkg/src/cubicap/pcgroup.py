"""Weighted power-commutator presentations of finite 3-groups.

A group of order 3^n is presented on generators a1..an with relations
    a_i^3     = P_i      (normal word on generators > i)
    [a_j,a_i] = C_{j,i}  (normal word on generators > j, for j > i)
and a weight function w(a_i) giving the depth of a_i in the lower
exponent-3 central series.  Generators of weight 1 are the d minimal
generators; every generator of weight >= 2 carries a definition: a relation
whose tail is `prefix * a_k` with prefix supported on lower indices.

Elements are exponent vectors (bytes of length n, entries 0..2); collection
is delegated to the selected kernel.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from functools import cached_property

from ._kernels import Collector
from . import linalg3


class PresentationError(ValueError):
    pass


# definitions: ("p", i) means a_k is defined by the relation a_i^3 = ...,
# ("c", j, i) by [a_j, a_i] = ...; indices 0-based.
Definition = tuple


@dataclass(frozen=True)
class PcPresentation:
    n: int
    d: int
    weights: tuple[int, ...]
    pow_tails: tuple[bytes, ...]                 # index i -> tail of a_i^3
    comm_tails: tuple[tuple[bytes, ...], ...]    # [j][i] -> tail of [a_j,a_i], j > i
    definitions: dict[int, Definition] = field(default=None, compare=False, hash=False)

    prime = 3

    def __post_init__(self):
        n = self.n
        if len(self.weights) != n or len(self.pow_tails) != n:
            raise PresentationError("inconsistent table sizes")
        for i, t in enumerate(self.pow_tails):
            if len(t) != n or any(t[k] for k in range(i + 1)):
                raise PresentationError(f"power tail of a{i+1} not supported above a{i+1}")
        for j in range(n):
            for i in range(j):
                t = self.comm_tails[j][i]
                if len(t) != n or any(t[k] for k in range(j + 1)):
                    raise PresentationError(f"commutator tail [a{j+1},a{i+1}] not above a{j+1}")
        if any(self.weights[i] > self.weights[j] for i in range(n) for j in range(i + 1, n)):
            raise PresentationError("generators must be sorted by weight")
        if self.d != sum(1 for w in self.weights if w == 1):
            raise PresentationError("d must equal the number of weight-1 generators")

    # -- basics ---------------------------------------------------------------

    @cached_property
    def collector(self) -> Collector:
        return Collector(self.n, self.pow_tails, self.comm_tails)

    @property
    def order(self) -> int:
        return 3**self.n

    @property
    def identity(self) -> bytes:
        return bytes(self.n)

    def generator(self, i: int) -> bytes:
        v = bytearray(self.n)
        v[i] = 1
        return bytes(v)

    def generators(self):
        return [self.generator(i) for i in range(self.n)]

    def elements(self):
        """All 3^n elements (use only for small n)."""
        for tup in itertools.product((0, 1, 2), repeat=self.n):
            yield bytes(tup)

    def is_central_trivial(self, k: int) -> bool:
        """Generator commutes with everything and has trivial cube."""
        if any(self.pow_tails[k]):
            return False
        for j in range(k + 1, self.n):
            if any(self.comm_tails[j][k]):
                return False
        return not any(any(self.comm_tails[k][i]) for i in range(k))

    @cached_property
    def exponent_class(self) -> int:
        return max(self.weights) if self.n else 0

    def get_definitions(self) -> dict[int, Definition]:
        if self.definitions is not None:
            return self.definitions
        defs = infer_definitions(self)
        object.__setattr__(self, "definitions", defs)
        return defs


def collect(word, pres: PcPresentation) -> bytes:
    """Normal form of a word given as (generator_index, exponent) pairs (0-based)."""
    for i, _ in word:
        if not 0 <= i < pres.n:
            raise PresentationError(f"generator index {i} out of range")
    return pres.collector.word(word)


# -- consistency ---------------------------------------------------------------


def consistency_violations(pres: PcPresentation, skip_central: bool = True):
    """All violated overlap test words.

    Returns a list of (tag, indices, lhs, rhs).  Tests whose highest letter is
    central with trivial cube are provably satisfied for any tail data and are
    skipped unless skip_central=False.
    """
    c = pres.collector
    n = pres.n
    gens = pres.generators()
    inert = [pres.is_central_trivial(k) for k in range(n)]
    bad = []

    def check(tag, idx, lhs, rhs):
        if lhs != rhs:
            bad.append((tag, idx, lhs, rhs))

    for k in range(n):
        for j in range(k):
            if skip_central and inert[k]:
                continue
            # a_k (a_j^3)  vs  (a_k a_j) a_j^2
            lhs = c.mult(gens[k], pres.pow_tails[j])
            rhs = c.mult_gen_pow(c.mult(gens[k], gens[j]), j, 2)
            check("pow_right", (k, j), lhs, rhs)
            # (a_k^3) a_j  vs  a_k^2 (a_k a_j)
            lhs = c.mult(pres.pow_tails[k], gens[j])
            rhs = c.mult(c.mult_gen_pow(c.identity, k, 2), c.mult(gens[k], gens[j]))
            check("pow_left", (k, j), lhs, rhs)
            for i in range(j):
                # a_k (a_j a_i)  vs  (a_k a_j) a_i
                lhs = c.mult(gens[k], c.mult(gens[j], gens[i]))
                rhs = c.mult(c.mult(gens[k], gens[j]), gens[i])
                check("assoc", (k, j, i), lhs, rhs)
    for i in range(n):
        if skip_central and inert[i]:
            continue
        # a_i (a_i^3) vs (a_i^3) a_i
        lhs = c.mult(gens[i], pres.pow_tails[i])
        rhs = c.mult(pres.pow_tails[i], gens[i])
        check("pow_self", (i,), lhs, rhs)
    return bad


def consistency_check(pres: PcPresentation, full: bool = False):
    """List of violated test words; empty iff the presentation is consistent."""
    return consistency_violations(pres, skip_central=not full)


# -- subgroups ------------------------------------------------------------------


@dataclass
class Subgroup:
    parent: PcPresentation
    igs: tuple[bytes, ...]            # echelonized, leading exponent 1, pivots increasing

    @property
    def pivot_list(self) -> tuple[int, ...]:
        return tuple(next(j for j in range(self.parent.n) if g[j]) for g in self.igs)

    @property
    def order(self) -> int:
        return 3 ** len(self.igs)

    @property
    def log_order(self) -> int:
        return len(self.igs)

    def sift(self, x: bytes) -> bytes:
        """Reduce x from the left; identity iff x is a member."""
        c = self.parent.collector
        piv = self.pivot_list
        for g, p in zip(self.igs, piv):
            e = x[p]
            if e:
                # left-multiply by g^{-e}: kills position p, never touches below
                ge = c.power(g, e)
                x = c.mult(c.inverse(ge), x)
        return x

    def contains(self, x: bytes) -> bool:
        return not any(self.sift(x))

    def elements(self):
        c = self.parent.collector
        for exps in itertools.product((0, 1, 2), repeat=len(self.igs)):
            x = self.parent.identity
            for g, e in zip(self.igs, exps):
                x = c.mult(x, c.power(g, e))
            yield x

    def coset_coords(self, x: bytes) -> tuple[int, ...]:
        """Exponents of x along the igs (x must be a member)."""
        c = self.parent.collector
        out = []
        for g, p in zip(self.igs, self.pivot_list):
            e = x[p]
            out.append(e)
            if e:
                x = c.mult(c.inverse(c.power(g, e)), x)
        if any(x):
            raise ValueError("element not in subgroup")
        return tuple(out)


class _Echelon:
    """Mutable echelon structure used while spinning up a subgroup."""

    def __init__(self, pres: PcPresentation):
        self.pres = pres
        self.rows: dict[int, bytes] = {}

    def sift(self, x: bytes) -> bytes:
        c = self.pres.collector
        while True:
            p = next((j for j in range(self.pres.n) if x[j]), None)
            if p is None or p not in self.rows:
                return x
            g = self.rows[p]
            x = c.mult(c.inverse(c.power(g, x[p])), x)

    def add(self, x: bytes) -> bytes | None:
        """Sift and insert; returns the new row or None if x was already inside."""
        x = self.sift(x)
        p = next((j for j in range(self.pres.n) if x[j]), None)
        if p is None:
            return None
        c = self.pres.collector
        if x[p] == 2:
            x = c.power(x, 2)  # (g^2)^2 = g^4 = g * g^3: leading exponent becomes 1
            assert x[p] == 1
        self.rows[p] = x
        return x

    def subgroup(self) -> Subgroup:
        return Subgroup(self.pres, tuple(self.rows[p] for p in sorted(self.rows)))


def subgroup_from_generators(pres: PcPresentation, gens, normal_under=None) -> Subgroup:
    """Subgroup generated by `gens`, as an induced generating sequence.

    With normal_under = iterable of elements, the result is closed under
    conjugation by them (pass the pc generators for a normal closure in G).
    """
    c = pres.collector
    ech = _Echelon(pres)
    conjugators = list(normal_under) if normal_under is not None else None
    queue = [bytes(g) for g in gens]
    while queue:
        x = queue.pop()
        new = ech.add(x)
        if new is None:
            continue
        rows = list(ech.rows.values())
        queue.append(c.power(new, 3))
        for g in rows:
            if g != new:
                queue.append(c.commutator(new, g))
        if conjugators is not None:
            for t in conjugators:
                queue.append(c.conjugate(new, t))
    return ech.subgroup()


def normal_closure(pres: PcPresentation, gens) -> Subgroup:
    return subgroup_from_generators(pres, gens, normal_under=pres.generators())


def whole_group(pres: PcPresentation) -> Subgroup:
    return Subgroup(pres, tuple(pres.generators()))


def trivial_subgroup(pres: PcPresentation) -> Subgroup:
    return Subgroup(pres, ())


def derived_subgroup(pres: PcPresentation, sub: Subgroup) -> Subgroup:
    """[H,H] for H given by an igs (closed under conjugation by H)."""
    c = pres.collector
    comms = [
        c.commutator(g, h)
        for g, h in itertools.combinations(sub.igs, 2)
    ]
    return subgroup_from_generators(pres, comms, normal_under=sub.igs)


def frattini_subgroup(pres: PcPresentation, sub: Subgroup) -> Subgroup:
    """H^3 [H,H] for a subgroup of a 3-group."""
    c = pres.collector
    der = derived_subgroup(pres, sub)
    gens = list(der.igs) + [c.power(g, 3) for g in sub.igs]
    return subgroup_from_generators(pres, gens, normal_under=sub.igs)


def maximal_subgroups_of(pres: PcPresentation, sub: Subgroup) -> list[Subgroup]:
    """Index-3 subgroups of H, one per hyperplane of H/Phi(H)."""
    c = pres.collector
    phi = frattini_subgroup(pres, sub)
    basis = [g for g, p in zip(sub.igs, sub.pivot_list) if p not in phi.pivot_list]
    r = len(basis)
    out = []
    for normal in linalg3.line_reps(r):
        gens = list(phi.igs)
        # kernel of the functional <normal, .> on H/Phi(H)
        for v in linalg3.nullspace((normal,), r):
            x = pres.identity
            for b, e in zip(basis, v):
                x = c.mult(x, c.power(b, e))
            gens.append(x)
        out.append(subgroup_from_generators(pres, gens, normal_under=sub.igs))
    return out


# -- quotient invariants ---------------------------------------------------------


def abelian_invariants_of_quotient(pres: PcPresentation, sub: Subgroup, modulus: Subgroup):
    """Logarithmic type of the abelian quotient H/K (K must contain [H,H])."""
    c = pres.collector
    ranks = []
    current = sub
    k = 0
    while current.order > modulus.order:
        cubes = [c.power(g, 3) for g in current.igs]
        nxt = subgroup_from_generators(
            pres, list(modulus.igs) + cubes, normal_under=sub.igs
        )
        ranks.append(current.log_order - nxt.log_order)
        current = nxt
        k += 1
        if k > 40:
            raise RuntimeError("abelian invariant chain did not terminate")
    # ranks[k] = number of cyclic factors of order > 3^k; conjugate partition
    parts = []
    for k, r in enumerate(ranks):
        parts.extend([k + 1] * (r - (ranks[k + 1] if k + 1 < len(ranks) else 0)))
    return tuple(sorted(parts, reverse=True))


def abelian_invariants(pres: PcPresentation, sub: Subgroup | None = None):
    """Logarithmic abelian invariants of H/[H,H]; (2,1,1) means (9,3,3)."""
    if sub is None:
        sub = whole_group(pres)
    der = derived_subgroup(pres, sub)
    return abelian_invariants_of_quotient(pres, sub, der)


def partition_shorthand(p) -> str:
    """Exponent shorthand: (2,1,1) -> '21^2', () -> '0'."""
    if not p:
        return "0"
    out = []
    for val, grp in itertools.groupby(p):
        cnt = len(list(grp))
        out.append(f"{val}" + (f"^{cnt}" if cnt > 1 else ""))
    return "".join(out)


def parse_partition(s: str):
    """Inverse of partition_shorthand ('21^2' -> (2,1,1))."""
    s = s.strip().strip("()")
    if s in ("", "0"):
        return ()
    parts = []
    for m in re.finditer(r"(\d)(?:\^(\d+))?", s):
        parts.extend([int(m.group(1))] * int(m.group(2) or 1))
    return tuple(sorted(parts, reverse=True))


# -- series -----------------------------------------------------------------------


def lower_central_series(pres: PcPresentation) -> list[Subgroup]:
    c = pres.collector
    series = [whole_group(pres)]
    while series[-1].order > 1:
        cur = series[-1]
        comms = [c.commutator(g, a) for g in cur.igs for a in pres.generators()]
        nxt = subgroup_from_generators(pres, comms, normal_under=pres.generators())
        if nxt.order == cur.order:
            raise RuntimeError("lower central series stalled; presentation not nilpotent?")
        series.append(nxt)
    return series


def lower_exponent3_central_series(pres: PcPresentation) -> list[Subgroup]:
    c = pres.collector
    series = [whole_group(pres)]
    while series[-1].order > 1:
        cur = series[-1]
        gens = [c.commutator(g, a) for g in cur.igs for a in pres.generators()]
        gens += [c.power(g, 3) for g in cur.igs]
        nxt = subgroup_from_generators(pres, gens, normal_under=pres.generators())
        if nxt.order == cur.order:
            raise RuntimeError("exponent-3 central series stalled")
        series.append(nxt)
    return series


def derived_series(pres: PcPresentation) -> list[Subgroup]:
    series = [whole_group(pres)]
    while series[-1].order > 1:
        nxt = derived_subgroup(pres, series[-1])
        if nxt.order == series[-1].order:
            raise RuntimeError("derived series stalled; presentation not soluble?")
        series.append(nxt)
    return series


def series(pres: PcPresentation, kind: str) -> list[Subgroup]:
    if kind == "lower-central":
        return lower_central_series(pres)
    if kind == "lower-exponent-3-central":
        return lower_exponent3_central_series(pres)
    if kind == "derived":
        return derived_series(pres)
    raise ValueError(f"unknown series kind {kind!r}")


def nilpotency_class(pres: PcPresentation) -> int:
    return len(lower_central_series(pres)) - 1


def derived_length(pres: PcPresentation) -> int:
    return len(derived_series(pres)) - 1


def is_metabelian(pres: PcPresentation) -> bool:
    return derived_length(pres) <= 2


# -- construction helpers ------------------------------------------------------------


def elementary_abelian(d: int) -> PcPresentation:
    zero = bytes(d)
    return PcPresentation(
        n=d,
        d=d,
        weights=(1,) * d,
        pow_tails=(zero,) * d,
        comm_tails=tuple(tuple(zero for _ in range(j)) for j in range(d)),
        definitions={},
    )


def cyclic(log_order: int) -> PcPresentation:
    """Cyclic group of order 3^log_order as a pc group."""
    n = log_order
    pow_tails = []
    for i in range(n):
        t = bytearray(n)
        if i + 1 < n:
            t[i + 1] = 1
        pow_tails.append(bytes(t))
    return PcPresentation(
        n=n,
        d=1,
        weights=tuple(range(1, n + 1)),
        pow_tails=tuple(pow_tails),
        comm_tails=tuple(tuple(bytes(n) for _ in range(j)) for j in range(n)),
        definitions={i: ("p", i - 1) for i in range(1, n)},
    )


def infer_definitions(pres: PcPresentation) -> dict[int, Definition]:
    """Assign to each non-minimal generator a defining relation.

    Requires standard form: some relation's tail is `prefix * a_k` with the
    prefix supported on lower indices and a_k carrying exponent 1.  Every
    presentation produced by the descendant machinery has this shape.
    """
    defs: dict[int, Definition] = {}
    used = set()

    def tail_defines(tail: bytes, k: int) -> bool:
        return tail[k] == 1 and not any(tail[m] for m in range(k + 1, pres.n))

    for k in range(pres.d, pres.n):
        found = None
        for i in range(pres.n):
            if ("p", i) not in used and tail_defines(pres.pow_tails[i], k):
                found = ("p", i)
                break
        if found is None:
            for j in range(pres.n):
                for i in range(j):
                    if ("c", j, i) not in used and tail_defines(pres.comm_tails[j][i], k):
                        found = ("c", j, i)
                        break
                if found:
                    break
        if found is None:
            raise PresentationError(
                f"no standard-form defining relation for generator a{k+1}"
            )
        used.add(found)
        defs[k] = found
    return defs


# -- .pc3 text format -----------------------------------------------------------------

_WORD_RE = re.compile(r"a(\d+)(?:\^(\d+))?$")


def _format_word(vec: bytes) -> str:
    parts = []
    for i, e in enumerate(vec):
        if e:
            parts.append(f"a{i+1}" + (f"^{e}" if e > 1 else ""))
    return "*".join(parts)


def _parse_word(s: str, n: int) -> bytes:
    v = bytearray(n)
    s = s.strip()
    if not s:
        return bytes(v)
    for token in s.split("*"):
        m = _WORD_RE.match(token.strip())
        if not m:
            raise PresentationError(f"bad word token {token!r}")
        idx = int(m.group(1)) - 1
        if not 0 <= idx < n:
            raise PresentationError(f"generator a{idx+1} out of range")
        v[idx] = (v[idx] + int(m.group(2) or 1)) % 3
    return bytes(v)


def to_pc3(pres: PcPresentation) -> str:
    """Serialize; trivial tails are omitted.

    Grammar:
        header   := "p=3 n=<n> d=<d>"
        weights  := "w = <w1> <w2> ... <wn>"
        powline  := "a<i>^3 = <word>"
        commline := "[a<j>,a<i>] = <word>"
        word     := "" | term ("*" term)*     term := "a<k>" | "a<k>^<e>"
    """
    lines = [f"p=3 n={pres.n} d={pres.d}"]
    lines.append("w = " + " ".join(str(w) for w in pres.weights))
    for i in range(pres.n):
        if any(pres.pow_tails[i]):
            lines.append(f"a{i+1}^3 = {_format_word(pres.pow_tails[i])}")
    for j in range(pres.n):
        for i in range(j):
            if any(pres.comm_tails[j][i]):
                lines.append(f"[a{j+1},a{i+1}] = {_format_word(pres.comm_tails[j][i])}")
    return "\n".join(lines) + "\n"


_HEADER_RE = re.compile(r"p=3\s+n=(\d+)\s+d=(\d+)$")
_POW_RE = re.compile(r"a(\d+)\^3\s*=\s*(.*)$")
_COMM_RE = re.compile(r"\[a(\d+),a(\d+)\]\s*=\s*(.*)$")


def from_pc3(text: str) -> PcPresentation:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise PresentationError("empty .pc3 input")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise PresentationError(f"bad header {lines[0]!r}")
    n, d = int(m.group(1)), int(m.group(2))
    weights = None
    pow_tails = [bytes(n)] * n
    comm_tails = [[bytes(n)] * j for j in range(n)]
    for ln in lines[1:]:
        if ln.startswith("w"):
            weights = tuple(int(x) for x in ln.split("=", 1)[1].split())
            continue
        m = _POW_RE.match(ln)
        if m:
            i = int(m.group(1)) - 1
            pow_tails[i] = _parse_word(m.group(2), n)
            continue
        m = _COMM_RE.match(ln)
        if m:
            j, i = int(m.group(1)) - 1, int(m.group(2)) - 1
            if not j > i:
                raise PresentationError(f"commutator indices must decrease: {ln!r}")
            comm_tails[j][i] = _parse_word(m.group(3), n)
            continue
        raise PresentationError(f"unrecognized line {ln!r}")
    if weights is None:
        raise PresentationError("missing weights line")
    if len(weights) != n:
        raise PresentationError("weights length mismatch")
    return PcPresentation(
        n=n,
        d=d,
        weights=weights,
        pow_tails=tuple(pow_tails),
        comm_tails=tuple(tuple(row) for row in comm_tails),
    )


# -- brute-force oracles (test support) ------------------------------------------------


def multiplication_table(pres: PcPresentation):
    """Explicit table {(x, y): xy} for |G| <= 3^5."""
    if pres.n > 5:
        raise ValueError("multiplication table oracle limited to order 3^5")
    els = list(pres.elements())
    c = pres.collector
    return els, {(x, y): c.mult(x, y) for x in els for y in els}
