"""3-covering groups, automorphism lifting, and descendant trees.

The cover of a consistent weighted presentation is built by adding one new
central generator of exponent 3 per non-defining relation and then imposing
the overlap consistency relations, which are linear in the new generators.
The multiplicator is the span of the surviving new generators; the nucleus is
the deepest term of the lower exponent-3 central series of the cover.

Immediate descendants of step s are quotients of the cover by one orbit
representative per orbit of allowable subgroups (codimension s supplements of
the nucleus) under the action of the automorphism group; the automorphism
group of the child is generated by the lifted stabilizer of its subgroup
together with the central shifts on the new layer.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

from . import linalg3, pcgroup, artin
from .pcgroup import PcPresentation, PresentationError, Subgroup


class BudgetExceededError(RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


# ---------------------------------------------------------------------------
# automorphisms

@dataclass(frozen=True)
class Automorphism:
    pres: PcPresentation
    images: tuple[bytes, ...]

    def apply(self, x: bytes) -> bytes:
        c = self.pres.collector
        out = self.pres.identity
        for img, e in zip(self.images, x):
            if e:
                out = c.mult(out, c.power(img, e))
        return out

    def compose(self, other: "Automorphism") -> "Automorphism":
        """self after other."""
        return Automorphism(
            self.pres, tuple(self.apply(img) for img in other.images)
        )

    @property
    def is_identity(self) -> bool:
        return self.images == tuple(self.pres.generators())

    def frattini_matrix(self):
        d = self.pres.d
        return tuple(
            tuple(self.images[c][r] for c in range(d)) for r in range(d)
        )

    def preserves_relations(self) -> bool:
        pres, c = self.pres, self.pres.collector
        if linalg3.rank(self.frattini_matrix()) != pres.d:
            return False
        for i in range(pres.n):
            if c.power(self.images[i], 3) != self.apply(pres.pow_tails[i]):
                return False
            for j in range(i + 1, pres.n):
                comm = c.commutator(self.images[j], self.images[i])
                if comm != self.apply(pres.comm_tails[j][i]):
                    return False
        return True


def identity_automorphism(pres: PcPresentation) -> Automorphism:
    return Automorphism(pres, tuple(pres.generators()))


def automorphism_from_minimal_images(pres: PcPresentation, minimal_images) -> Automorphism:
    """Propagate images of a_1..a_d through the definitions.

    The result is an automorphism iff it preserves all relations (checked by
    the callers that lift candidates).
    """
    c = pres.collector
    defs = pres.get_definitions()
    imgs: list[bytes] = list(minimal_images)
    for k in range(pres.d, pres.n):
        rel = defs[k]
        if rel[0] == "p":
            i = rel[1]
            val = c.power(imgs[i], 3)
            tail = pres.pow_tails[i]
        else:
            _, j, i = rel
            val = c.commutator(imgs[j], imgs[i])
            tail = pres.comm_tails[j][i]
        # tail = prefix * a_k with prefix on lower indices
        prefix = bytearray(tail)
        assert prefix[k] == 1 and not any(prefix[k + 1 :])
        prefix[k] = 0
        pref_img = pres.identity
        for m in range(k):
            if prefix[m]:
                pref_img = c.mult(pref_img, c.power(imgs[m], prefix[m]))
        imgs.append(c.mult(c.inverse(pref_img), val))
    return Automorphism(pres, tuple(imgs))


def automorphism_from_matrix(pres: PcPresentation, mat) -> Automorphism:
    """Candidate automorphism inducing `mat` on the minimal generators."""
    c = pres.collector
    d = pres.d
    minimal = []
    for col in range(d):
        x = pres.identity
        for row in range(d):
            e = mat[row][col]
            if e:
                x = c.mult(x, c.power(pres.generator(row), e))
        minimal.append(x)
    return automorphism_from_minimal_images(pres, minimal)


def aut_inverse(phi: Automorphism) -> Automorphism:
    """Inverse automorphism, solved layer by layer along the weights."""
    pres, c = phi.pres, phi.pres.collector
    layers: dict[int, list[int]] = {}
    for k, w in enumerate(pres.weights):
        layers.setdefault(w, []).append(k)
    layer_mats = {
        w: tuple(
            tuple(phi.images[q][p] for q in idxs) for p in idxs
        )
        for w, idxs in layers.items()
    }
    images = []
    for i in range(pres.n):
        target = pres.generator(i)
        x = pres.identity
        for w in sorted(layers):
            rem = c.mult(c.inverse(phi.apply(x)), target)
            if not any(rem):
                break
            idxs = layers[w]
            rho = tuple(rem[p] for p in idxs)
            if not any(rho):
                continue
            gamma = linalg3.solve(layer_mats[w], rho)
            if gamma is None:
                raise RuntimeError("automorphism layer matrix not invertible")
            for q, e in zip(idxs, gamma):
                if e:
                    x = c.mult(x, c.power(pres.generator(q), e))
        rem = c.mult(c.inverse(phi.apply(x)), target)
        if any(rem):
            raise RuntimeError("automorphism inversion failed")
        images.append(x)
    return Automorphism(pres, tuple(images))


@dataclass
class AutGroup:
    pres: PcPresentation
    gens: list[Automorphism]
    order: int
    full_gl: bool = False   # Aut = GL(d,3) acting on an elementary abelian group

    @cached_property
    def induced_image(self):
        """Closure of the induced action on G/Phi(G) inside GL(d,3)."""
        if self.full_gl:
            return set(linalg3.gl3_elements(self.pres.d))
        mats = [g.frattini_matrix() for g in self.gens]
        return linalg3.mat_group_closure(mats)

    def contains_inversion(self) -> bool:
        d = self.pres.d
        neg = tuple(tuple((2 if i == j else 0) for j in range(d)) for i in range(d))
        return neg in self.induced_image

    def has_subgroup_of_order(self, k: int) -> bool:
        """Existence of a subgroup of order k in the induced image.

        Searched over cyclic subgroups and two-generated closures, which
        suffices for the small orders exercised here.
        """
        img = sorted(self.induced_image)
        if len(img) % k:
            return False
        if k == 1:
            return True
        singles = {}
        for a in img:
            cl = frozenset(linalg3.mat_group_closure([a]))
            singles[a] = cl
            if len(cl) == k:
                return True
        for i, a in enumerate(img):
            if k % len(singles[a]):
                continue
            for b in img[i + 1 :]:
                if len(singles[a]) * len(singles[b]) > 4 * k:
                    continue
                cl = linalg3.mat_group_closure([a, b], cap=4 * k)
                if len(cl) == k:
                    return True
        return False


def full_gl_aut(pres: PcPresentation) -> AutGroup:
    """Aut of an elementary abelian group: GL(d,3) by two standard generators."""
    assert pres.n == pres.d
    d = pres.d
    if d == 1:
        gens_mats = [((2,),)]
    else:
        cycle = tuple(
            tuple(1 if c == (r + 1) % d else 0 for c in range(d)) for r in range(d)
        )
        trans = tuple(
            tuple(1 if r == c else (1 if (r, c) == (0, 1) else 0) for c in range(d))
            for r in range(d)
        )
        scal = tuple(
            tuple((2 if (r, c) == (0, 0) else (1 if r == c else 0)) for c in range(d))
            for r in range(d)
        )
        gens_mats = [cycle, trans, scal]
    assert len(linalg3.mat_group_closure(gens_mats)) == linalg3.gl_order(d)
    gens = [automorphism_from_matrix(pres, m) for m in gens_mats]
    return AutGroup(pres, gens, linalg3.gl_order(d), full_gl=True)


# ---------------------------------------------------------------------------
# the 3-cover

RELATION_ORDER_NOTE = "powers a_i^3 ascending, then commutators [a_j,a_i] by (j,i)"


def _all_relations(n: int):
    rels = [("p", i) for i in range(n)]
    rels += [("c", j, i) for j in range(n) for i in range(j)]
    return rels


@dataclass
class CoverData:
    parent: PcPresentation
    cover: PcPresentation
    mu: int
    nu: int
    nucleus_rows: tuple            # RREF rows in multiplicator coordinates
    sources: tuple                 # per multiplicator generator: its relation
    _gl_action: dict = field(default_factory=dict, repr=False)

    @property
    def mult_start(self) -> int:
        return self.parent.n

    def multiplicator_subgroup(self) -> Subgroup:
        return Subgroup(
            self.cover,
            tuple(self.cover.generator(k) for k in range(self.parent.n, self.cover.n)),
        )

    def nucleus_subgroup(self) -> Subgroup:
        igs = []
        for row in self.nucleus_rows:
            v = bytearray(self.cover.n)
            for t, e in enumerate(row):
                v[self.parent.n + t] = e
            igs.append(bytes(v))
        return Subgroup(self.cover, tuple(igs))


def p_cover(pres: PcPresentation) -> CoverData:
    """Largest central exponent-3 extension restricting to the presentation."""
    bad = pcgroup.consistency_check(pres)
    if bad:
        raise PresentationError(f"presentation inconsistent: {bad[:3]}")
    n, d = pres.n, pres.d
    defs = pres.get_definitions()
    defining = set(defs.values())
    new_rels = [r for r in _all_relations(n) if r not in defining]
    m0 = len(new_rels)
    big = n + m0
    w_new = pres.exponent_class + 1

    pow_tails = []
    for i in range(n):
        t = bytearray(big)
        t[:n] = pres.pow_tails[i]
        pow_tails.append(t)
    comm_tails = [[bytearray(big) for _ in range(j)] for j in range(big)]
    for j in range(n):
        for i in range(j):
            comm_tails[j][i][:n] = pres.comm_tails[j][i]
    for t, rel in enumerate(new_rels):
        if rel[0] == "p":
            pow_tails[rel[1]][n + t] = 1
        else:
            comm_tails[rel[1]][rel[2]][n + t] = 1
    for k in range(n, big):
        pow_tails.append(bytearray(big))

    tentative = PcPresentation(
        n=big,
        d=d,
        weights=pres.weights + (w_new,) * m0,
        pow_tails=tuple(bytes(t) for t in pow_tails),
        comm_tails=tuple(tuple(bytes(t) for t in row) for row in comm_tails),
        definitions={**defs, **{n + t: new_rels[t] for t in range(m0)}},
    )

    violations = pcgroup.consistency_violations(tentative)
    rows = []
    for _tag, _idx, lhs, rhs in violations:
        if lhs[:n] != rhs[:n]:
            raise RuntimeError("consistency violation outside the central layer")
        rows.append(tuple((lhs[k] - rhs[k]) % 3 for k in range(n, big)))
    relations = linalg3.rref(rows) if rows else ()
    piv = set(linalg3.pivots(relations)) if relations else set()
    survivors = [t for t in range(m0) if t not in piv]
    mu = len(survivors)

    def compress(vec) -> bytes:
        tail = tuple(vec[n + t] for t in range(m0))
        if relations:
            tail = linalg3.reduce_mod_rowspace(tail, relations)
        out = bytearray(n + mu)
        out[:n] = vec[:n]
        for s, t in enumerate(survivors):
            out[n + s] = tail[t]
        return bytes(out)

    small = n + mu
    new_pow = [compress(pow_tails[i]) for i in range(n)] + [bytes(small)] * mu
    new_comm = [
        [compress(comm_tails[j][i]) for i in range(j)] for j in range(n)
    ] + [[bytes(small)] * j for j in range(n, small)]
    cover = PcPresentation(
        n=small,
        d=d,
        weights=pres.weights + (w_new,) * mu,
        pow_tails=tuple(new_pow),
        comm_tails=tuple(tuple(row) for row in new_comm),
        definitions={**defs, **{n + s: new_rels[survivors[s]] for s in range(mu)}},
    )
    leftover = pcgroup.consistency_check(cover)
    if leftover:
        raise RuntimeError(f"cover still inconsistent: {leftover[:3]}")

    # nucleus: deepest lower exponent-3 central term of the cover
    cls = pres.exponent_class
    ser = pcgroup.lower_exponent3_central_series(cover)
    nucleus = ser[cls] if cls < len(ser) else pcgroup.trivial_subgroup(cover)
    nuc_rows = []
    for g in nucleus.igs:
        if any(g[:n]):
            raise RuntimeError("nucleus not inside the multiplicator")
        nuc_rows.append(tuple(g[n + s] for s in range(mu)))
    nuc_rows = linalg3.rref(nuc_rows) if nuc_rows else ()
    return CoverData(
        parent=pres,
        cover=cover,
        mu=mu,
        nu=len(nuc_rows),
        nucleus_rows=nuc_rows,
        sources=tuple(new_rels[t] for t in survivors),
    )


_cover_cache: dict = {}


def cached_cover(pres: PcPresentation) -> CoverData:
    key = (pres.n, pres.d, pres.weights, pres.pow_tails, pres.comm_tails)
    cd = _cover_cache.get(key)
    if cd is None:
        cd = p_cover(pres)
        _cover_cache[key] = cd
    return cd


def generator_rank(pres: PcPresentation) -> int:
    return pres.d


def relation_rank(pres: PcPresentation) -> int:
    return cached_cover(pres).mu


def schur_multiplier_rank(pres: PcPresentation) -> int:
    return relation_rank(pres) - generator_rank(pres)


def is_closed_group(pres: PcPresentation) -> bool:
    """Balanced presentation: relation rank equals generator rank."""
    return relation_rank(pres) == generator_rank(pres)


# ---------------------------------------------------------------------------
# action on the multiplicator

def multiplicator_matrix(cd: CoverData, phi: Automorphism):
    """Induced mu x mu matrix of a parent automorphism on the multiplicator.

    The parent automorphism lifts to the cover by propagating its images of
    the minimal generators through the cover's definitions; the lift is
    unique up to central corrections which the multiplicator columns do not
    see.
    """
    pres, cover = cd.parent, cd.cover
    n, mu = pres.n, cd.mu
    mins = [phi.images[i] + bytes(mu) for i in range(pres.d)]
    lifted = automorphism_from_minimal_images(cover, mins)
    cols = []
    for t in range(mu):
        delta = lifted.images[n + t]
        if any(delta[:n]):
            raise RuntimeError("multiplicator image escaped the central layer")
        cols.append(tuple(delta[n + s] for s in range(mu)))
    return tuple(tuple(cols[c_][r] for c_ in range(mu)) for r in range(mu))


def _transport(rows, act):
    if not rows:
        return ()
    return linalg3.rref([linalg3.mat_vec(act, r) for r in rows])


def _normalized_coeffs(k: int):
    """Coefficient tuples with first nonzero entry 1: one per line of F3^k."""
    out = []
    for lead in range(k):
        for rest in itertools.product((0, 1, 2), repeat=k - lead - 1):
            out.append((0,) * lead + (1,) + rest)
    return out


@lru_cache(maxsize=None)
def _coeff_table(k: int):
    return tuple(_normalized_coeffs(k))


def _line_key(rows, mu: int):
    """Sorted tuple of indices of the lines inside the row space."""
    if not rows:
        return ()
    k = len(rows)
    idxs = []
    for coeffs in _coeff_table(k):
        v = [0] * mu
        for c, row in zip(coeffs, rows):
            if c:
                for m in range(mu):
                    v[m] = (v[m] + c * row[m]) % 3
        idxs.append(linalg3.line_index(tuple(v)))
    idxs.sort()
    return tuple(idxs)


@lru_cache(maxsize=4096)
def _line_permutation(act, mu: int):
    """Permutation induced on line indices by a matrix action (1-based)."""
    lines = linalg3.line_reps(mu)
    perm = [0] * (len(lines) + 1)
    for i, v in enumerate(lines, start=1):
        perm[i] = linalg3.line_index(linalg3.mat_vec(act, v))
    return tuple(perm)


def _dual_mats(act_mats):
    """Inverse-transpose matrices: the action on orthogonal complements."""
    return [linalg3.mat_transpose(linalg3.mat_inverse(a)) for a in act_mats]


def action_generators(cd: CoverData, aut: AutGroup):
    """(carrier, multiplicator matrix) pairs generating the acting group.

    For a full-GL automorphism group the carriers are d x d matrices (cheap to
    compose and invert); otherwise they are explicit automorphisms.  Since the
    action is a homomorphism, transversal action matrices can be composed in
    tandem with the carriers, so no element beyond the generators ever needs
    the propagation machinery.  The result is cached on the cover.
    """
    cache = cd._gl_action
    if cache.get("for_aut") is aut:
        return cache["gens"]
    if aut.full_gl:
        mats3 = [g.frattini_matrix() for g in aut.gens]
        mmats = [multiplicator_matrix(cd, g) for g in aut.gens]
        result = (
            list(zip(mats3, mmats)),
            [
                (linalg3.mat_inverse(m3), linalg3.mat_inverse(mm))
                for m3, mm in zip(mats3, mmats)
            ],
            (linalg3.identity(aut.pres.d), linalg3.identity(cd.mu)),
            linalg3.mat_mul,
        )
    else:
        pairs = [(g, multiplicator_matrix(cd, g)) for g in aut.gens]
        inv_pairs = [
            (gi, linalg3.mat_inverse(mm))
            for (g, mm), gi in zip(pairs, (aut_inverse(g) for g in aut.gens))
        ]
        ident = (identity_automorphism(aut.pres), linalg3.identity(cd.mu))
        result = (pairs, inv_pairs, ident, lambda a, b: a.compose(b))
    cache["for_aut"] = aut
    cache["gens"] = result
    return result


def allowable_subspaces(cd: CoverData, s: int):
    """Codimension-s subspaces U of the multiplicator with U + nucleus = all."""
    mu = cd.mu
    if s < 1 or s > cd.nu:
        return []
    if cd.nu == mu:
        return list(linalg3.subspaces(mu, mu - s))
    out = []
    for U in linalg3.subspaces(mu, mu - s):
        residual = 0
        seen = list(U)
        for row in cd.nucleus_rows:
            red = linalg3.reduce_mod_rowspace(row, tuple(seen))
            if any(red):
                seen = list(linalg3.rref(tuple(seen) + (red,)))
                residual += 1
        if len(U) + residual == mu:
            out.append(U)
    return out


def orbit_partition(points, act_mats, mu=None):
    """Orbits of subspaces under a matrix action.

    Points are RREF row tuples; internally each subspace is keyed by the
    sorted tuple of line indices it contains, on which the action is a
    permutation.  Each returned orbit is the sorted list of RREF members, so
    orbit[0] is the lex-minimal echelonized representative.
    """
    points = list(points)
    if not points:
        return []
    if mu is None:
        mu = len(points[0][0]) if points[0] else len(act_mats[0])
    dim = len(points[0])
    use_dual = 2 * dim > mu
    if use_dual:
        by_key = {_line_key(linalg3.nullspace(u, mu), mu): u for u in points}
        perms = [_line_permutation(a, mu) for a in _dual_mats(act_mats)]
    else:
        by_key = {_line_key(u, mu): u for u in points}
        perms = [_line_permutation(a, mu) for a in act_mats]
    remaining = set(by_key)
    orbits = []
    for key in sorted(by_key):
        if key not in remaining:
            continue
        orb_keys = {key}
        queue = [key]
        while queue:
            u = queue.pop()
            for p in perms:
                v = tuple(sorted(p[i] for i in u))
                if v not in orb_keys:
                    orb_keys.add(v)
                    queue.append(v)
        remaining -= orb_keys
        members = [by_key[k] for k in orb_keys if k in by_key]
        if len(members) != len(orb_keys):
            raise RuntimeError("orbit left the enumerated point set")
        orbits.append(sorted(members))
    return orbits


# ---------------------------------------------------------------------------
# stabilizers

def _stabilizer_schreier(cd: CoverData, aut: AutGroup, U):
    """Stabilizer generators of U in Aut(parent) via orbit transversals.

    Carriers and action matrices are composed in tandem; Schreier generators
    fixing U are collected, deduplicated, and (for matrix carriers) greedily
    reduced against the known stabilizer order.
    """
    pairs, inv_pairs, ident, compose = action_generators(cd, aut)
    mu = cd.mu
    use_dual = 2 * len(U) > mu
    if use_dual:
        perms = [
            _line_permutation(linalg3.mat_transpose(linalg3.mat_inverse(a)), mu)
            for _, a in pairs
        ]
        start = _line_key(linalg3.nullspace(U, mu), mu)
    else:
        perms = [_line_permutation(a, mu) for _, a in pairs]
        start = _line_key(U, mu)
    trans = {start: ident[0]}
    trans_inv = {start: ident[0]}
    queue = [start]
    schreier: dict = {}
    while queue:
        u = queue.pop(0)
        tu = trans[u]
        for (g, _a), (ginv, _ai), p in zip(pairs, inv_pairs, perms):
            v = tuple(sorted(p[i] for i in u))
            if v not in trans:
                trans[v] = compose(g, tu)
                trans_inv[v] = compose(trans_inv[u], ginv)
                queue.append(v)
            else:
                carrier = compose(trans_inv[v], compose(g, tu))
                key = carrier.images if hasattr(carrier, "images") else carrier
                schreier.setdefault(key, carrier)
    orbit_size = len(trans)
    if aut.order % orbit_size:
        raise RuntimeError("orbit size does not divide the group order")
    order = aut.order // orbit_size
    gens = [c for k, c in schreier.items() if not _is_trivial_carrier(c)]
    if aut.full_gl:
        # matrix carriers: reduce greedily to a few generators
        reduced: list = []
        closure = {linalg3.identity(aut.pres.d)}
        for m in gens:
            if m not in closure:
                reduced.append(m)
                closure = linalg3.mat_group_closure(reduced)
                if len(closure) == order:
                    break
        if len(closure) != order:
            raise RuntimeError("stabilizer reduction failed to reach full order")
        gens = [automorphism_from_matrix(aut.pres, m) for m in reduced]
    return gens, order, orbit_size


def _is_trivial_carrier(c):
    if isinstance(c, Automorphism):
        return c.is_identity
    return all(c[i][j] == (1 if i == j else 0) for i in range(len(c)) for j in range(len(c)))


def stabilizer_of_subspace(cd: CoverData, aut: AutGroup, U):
    gens, order, _ = _stabilizer_schreier(cd, aut, U)
    return gens, order


# ---------------------------------------------------------------------------
# children

def child_presentation(cd: CoverData, U) -> PcPresentation:
    """Quotient of the cover by an allowable subgroup, in canonical form."""
    pres, cover = cd.parent, cd.cover
    n, mu = pres.n, cd.mu
    s = mu - len(U)
    upiv = linalg3.pivots(U) if U else ()
    free = [t for t in range(mu) if t not in upiv]

    def project(vec) -> tuple:
        tail = tuple(vec[n + t] for t in range(mu))
        if U:
            tail = linalg3.reduce_mod_rowspace(tail, U)
        return tuple(tail[f] for f in free)

    # choose definition relations: canonical scan, greedily independent
    defs = pres.get_definitions()
    defining = set(defs.values())
    chosen = []
    chosen_vecs: list = []
    for rel in _all_relations(n):
        if rel in defining:
            continue
        if rel[0] == "p":
            vec = project(cover.pow_tails[rel[1]])
        else:
            vec = project(cover.comm_tails[rel[1]][rel[2]])
        if linalg3.rank(tuple(chosen_vecs) + (vec,)) > len(chosen_vecs):
            chosen.append(rel)
            chosen_vecs.append(vec)
            if len(chosen) == s:
                break
    if len(chosen) != s:
        raise RuntimeError("could not choose definitions for the new layer")
    basis = tuple(chosen_vecs)             # rows: chosen relation images
    tmat = linalg3.mat_inverse(linalg3.mat_transpose(basis))

    def new_coords(vec) -> tuple:
        return linalg3.mat_vec(tmat, project(vec))

    small = n + s
    pow_tails = []
    for i in range(n):
        t = bytearray(small)
        t[:n] = pres.pow_tails[i]
        for k, e in enumerate(new_coords(cover.pow_tails[i])):
            t[n + k] = e
        pow_tails.append(bytes(t))
    pow_tails += [bytes(small)] * s
    comm_tails = []
    for j in range(n):
        row = []
        for i in range(j):
            t = bytearray(small)
            t[:n] = pres.comm_tails[j][i]
            for k, e in enumerate(new_coords(cover.comm_tails[j][i])):
                t[n + k] = e
            row.append(bytes(t))
        comm_tails.append(tuple(row))
    comm_tails += [tuple(bytes(small) for _ in range(j)) for j in range(n, small)]

    child = PcPresentation(
        n=small,
        d=pres.d,
        weights=pres.weights + (pres.exponent_class + 1,) * s,
        pow_tails=tuple(pow_tails),
        comm_tails=tuple(comm_tails),
        definitions={**defs, **{n + k: chosen[k] for k in range(s)}},
    )
    bad = pcgroup.consistency_check(child)
    if bad:
        raise RuntimeError(f"descendant presentation inconsistent: {bad[:3]}")
    return child


def child_aut_group(cd: CoverData, aut: AutGroup, U, child: PcPresentation) -> AutGroup:
    stab_gens, stab_order = stabilizer_of_subspace(cd, aut, U)
    s = cd.mu - len(U)
    c = child.collector
    gens = []
    for phi in stab_gens:
        mins = [img + bytes(s) for img in phi.images[: child.d]]
        lifted = automorphism_from_minimal_images(child, mins)
        if not lifted.preserves_relations():
            raise RuntimeError("stabilizer element failed to lift")
        gens.append(lifted)
    for i in range(child.d):
        for k in range(s):
            mins = [child.generator(m) for m in range(child.d)]
            z = child.generator(cd.parent.n + k)
            mins[i] = c.mult(mins[i], z)
            shifted = automorphism_from_minimal_images(child, mins)
            gens.append(shifted)
    order = stab_order * 3 ** (child.d * s)
    return AutGroup(child, gens, order)


# ---------------------------------------------------------------------------
# descendant enumeration and the tree

@dataclass
class TreeNode:
    pres: PcPresentation
    parent: "TreeNode | None" = None
    step: int = 0
    orbit_index: int = 0
    retained: bool = True
    _aut: AutGroup | None = None
    _subspace: tuple | None = None   # orbit representative inside the parent cover

    @property
    def log_order(self) -> int:
        return self.pres.n

    @property
    def path(self) -> str:
        if self.parent is None:
            return "root"
        return f"{self.parent.path}-#{self.step};{self.orbit_index}"

    @property
    def aut(self) -> AutGroup:
        if self._aut is None:
            if self.parent is None:
                self._aut = (
                    full_gl_aut(self.pres)
                    if self.pres.n == self.pres.d
                    else aut_group(self.pres)
                )
            else:
                self._aut = child_aut_group(
                    self.parent.cover, self.parent.aut, self._subspace, self.pres
                )
        return self._aut

    @cached_property
    def cover(self) -> CoverData:
        return cached_cover(self.pres)

    def action_matrices(self):
        pairs, _, _, _ = action_generators(self.cover, self.aut)
        return [a for _, a in pairs]

    def descendant_counts(self):
        """(N_s, C_s) for 1 <= s <= nu; capable = positive nuclear rank."""
        acts = self.action_matrices()
        out = []
        for s in range(1, self.cover.nu + 1):
            orbits = orbit_partition(allowable_subspaces(self.cover, s), acts)
            capable = 0
            for orb in orbits:
                child = child_presentation(self.cover, orb[0])
                if cached_cover(child).nu > 0:
                    capable += 1
            out.append((len(orbits), capable))
        return tuple(out)


def immediate_descendants(node: TreeNode, step: int):
    """One TreeNode per orbit of allowable subgroups of the given step size."""
    cd = node.cover
    if step > cd.nu:
        return []
    allow = allowable_subspaces(cd, step)
    orbits = orbit_partition(allow, node.action_matrices())
    children = []
    for k, orb in enumerate(orbits, start=1):
        U = orb[0]
        children.append(
            TreeNode(
                pres=child_presentation(cd, U),
                parent=node,
                step=step,
                orbit_index=k,
                _subspace=U,
            )
        )
    return children


def commutator_quotient_is(pres: PcPresentation, target) -> bool:
    return pcgroup.abelian_invariants(pres) == tuple(target)


@dataclass
class Tree:
    root: TreeNode
    nodes: list[TreeNode]
    budget_exceeded: bool = False

    def at_order(self, log_order: int):
        return [n for n in self.nodes if n.log_order == log_order]


def grow_tree(
    root_pres: PcPresentation,
    max_log_order: int,
    retain=None,
    max_nodes: int | None = None,
) -> Tree:
    """Breadth-first descendant tree, pruned by the retain predicate.

    `retain(pres)` decides whether a node is kept and expanded; the default
    keeps everything.  Orders are bounded by 3^max_log_order.
    """
    if pcgroup.consistency_check(root_pres):
        raise PresentationError("root presentation inconsistent")
    if retain is None:
        retain = lambda pres: True
    root = TreeNode(pres=root_pres)
    nodes = [root]
    frontier = [root]
    while frontier:
        nxt = []
        for node in frontier:
            if node.log_order >= max_log_order:
                continue
            cd = node.cover
            for s in range(1, min(cd.nu, max_log_order - node.log_order) + 1):
                for child in immediate_descendants(node, s):
                    if not retain(child.pres):
                        continue
                    nodes.append(child)
                    nxt.append(child)
                    if max_nodes is not None and len(nodes) > max_nodes:
                        raise BudgetExceededError(
                            f"node budget {max_nodes} exhausted at {child.path}",
                            partial=Tree(root, nodes, budget_exceeded=True),
                        )
        frontier = nxt
    return Tree(root, nodes)


# ---------------------------------------------------------------------------
# standalone automorphism groups

def truncate_to_class(pres: PcPresentation, w: int) -> PcPresentation:
    """Quotient by the span of all generators of weight exceeding w."""
    keep = [k for k in range(pres.n) if pres.weights[k] <= w]
    m = len(keep)
    assert keep == list(range(m))
    defs = {
        k: rel for k, rel in pres.get_definitions().items() if k < m
    }
    return PcPresentation(
        n=m,
        d=pres.d,
        weights=pres.weights[:m],
        pow_tails=tuple(t[:m] for t in pres.pow_tails[:m]),
        comm_tails=tuple(
            tuple(t[:m] for t in pres.comm_tails[j][:j]) for j in range(m)
        ),
        definitions=defs,
    )


def _matching_subspace(cd: CoverData, pres: PcPresentation):
    """The allowable subspace U with cover/U presenting `pres` verbatim."""
    n_par, mu = cd.parent.n, cd.mu
    m = pres.n - n_par
    rows = []
    for layer in range(m):
        row = []
        for rel in cd.sources:
            if rel[0] == "p":
                tail = pres.pow_tails[rel[1]]
            else:
                tail = pres.comm_tails[rel[1]][rel[2]]
            row.append(tail[n_par + layer])
        rows.append(tuple(row))
    if linalg3.rank(rows) != m:
        raise RuntimeError("quotient does not match its own cover layer")
    return linalg3.nullspace(tuple(rows), mu)


_aut_cache: dict = {}


def aut_group(pres: PcPresentation) -> AutGroup:
    """Automorphism group via lifting along the lower exponent-3 central series."""
    key = (pres.n, pres.d, pres.weights, pres.pow_tails, pres.comm_tails)
    hit = _aut_cache.get(key)
    if hit is not None:
        return hit
    if pres.n == pres.d:
        out = full_gl_aut(pres)
        _aut_cache[key] = out
        return out
    parent = truncate_to_class(pres, pres.exponent_class - 1)
    parent_aut = aut_group(parent)
    cd = cached_cover(parent)
    U = _matching_subspace(cd, pres)
    stab_gens, stab_order = stabilizer_of_subspace(cd, parent_aut, U)
    s = pres.n - parent.n
    c = pres.collector
    gens = []
    for phi in stab_gens:
        mins = [img + bytes(s) for img in phi.images[: pres.d]]
        lifted = automorphism_from_minimal_images(pres, mins)
        if not lifted.preserves_relations():
            raise RuntimeError("stabilizer element failed to lift")
        gens.append(lifted)
    for i in range(pres.d):
        for k in range(s):
            mins = [pres.generator(mm) for mm in range(pres.d)]
            mins[i] = c.mult(mins[i], pres.generator(parent.n + k))
            gens.append(automorphism_from_minimal_images(pres, mins))
    out = AutGroup(pres, gens, stab_order * 3 ** (pres.d * s))
    _aut_cache[key] = out
    return out


def has_sigma_automorphism(pres: PcPresentation, aut: AutGroup | None = None) -> bool:
    """True iff some automorphism inverts the commutator quotient."""
    if aut is None:
        aut = full_gl_aut(pres) if pres.n == pres.d else aut_group(pres)
    return aut.contains_inversion()


# ---------------------------------------------------------------------------
# fingerprints

@dataclass(frozen=True)
class Fingerprint:
    log_order: int
    cls: int
    coclass: int
    derived_length: int
    d1: int
    mu: int
    nu: int
    pattern_key: tuple
    lc_aqi: tuple
    descendant_counts: tuple

    def digest(self) -> str:
        payload = json.dumps(
            [
                self.log_order,
                self.cls,
                self.coclass,
                self.derived_length,
                self.d1,
                self.mu,
                self.nu,
                [list(map(list, map(_aslist, part))) if isinstance(part, tuple) else part
                 for part in [self.pattern_key]],
                [list(p) for p in self.lc_aqi],
                [list(c) for c in self.descendant_counts],
            ],
            default=str,
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _aslist(x):
    return x


def fingerprint(pres: PcPresentation, node: TreeNode | None = None) -> Fingerprint:
    cls = pcgroup.nilpotency_class(pres)
    dl = pcgroup.derived_length(pres)
    cd = cached_cover(pres)
    pattern = artin.second_order_pattern(pres)
    canon = artin.canonical_pattern(pattern)
    lc = pcgroup.lower_central_series(pres)
    lc_aqi = tuple(
        pcgroup.abelian_invariants_of_quotient(pres, lc[k], lc[k + 1])
        for k in range(len(lc) - 1)
    )
    if node is not None:
        counts = node.descendant_counts()
    elif cd.nu == 0:
        counts = ()
    else:
        counts = TreeNode(pres=pres).descendant_counts()
    return Fingerprint(
        log_order=pres.n,
        cls=cls,
        coclass=pres.n - cls,
        derived_length=dl,
        d1=pres.d,
        mu=cd.mu,
        nu=cd.nu,
        pattern_key=canon.key(),
        lc_aqi=lc_aqi,
        descendant_counts=counts,
    )


# ---------------------------------------------------------------------------
# DOT emission

def tree_to_dot(tree: Tree, labeler=None) -> str:
    """Graphviz rendering: boxes for non-metabelian nodes, filled when closed."""
    lines = ["digraph descendants {", '  rankdir="TB";']
    ids = {}
    for i, node in enumerate(tree.nodes):
        ids[node.path] = f"n{i}"
        closed = is_closed_group(node.pres)
        non_metab = pcgroup.derived_length(node.pres) >= 3
        shape = "box" if non_metab else "circle"
        style = "filled" if closed else "solid"
        extra = labeler(node) if labeler else ""
        label = f"3^{node.log_order}\\n{node.path}"
        if extra:
            label += f"\\n{extra}"
        lines.append(
            f'  n{i} [label="{label}", shape={shape}, style={style}];'
        )
    for node in tree.nodes:
        if node.parent is not None:
            lines.append(
                f'  {ids[node.parent.path]} -> {ids[node.path]} '
                f'[label="#{node.step};{node.orbit_index}"];'
            )
    lines.append("}")
    return "\n".join(lines) + "\n"
