"""Linear algebra over the field with three elements.

Vectors are tuples of ints in {0,1,2}, matrices are tuples of row tuples.
Everything here is tiny (dimension <= ~50), so clarity beats cleverness.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

Vec = tuple[int, ...]
Mat = tuple[Vec, ...]


def vec_add(u: Vec, v: Vec) -> Vec:
    return tuple((a + b) % 3 for a, b in zip(u, v))


def vec_sub(u: Vec, v: Vec) -> Vec:
    return tuple((a - b) % 3 for a, b in zip(u, v))


def vec_scale(u: Vec, c: int) -> Vec:
    c %= 3
    return tuple((a * c) % 3 for a in u)


def dot(u: Vec, v: Vec) -> int:
    return sum(a * b for a, b in zip(u, v)) % 3


def mat_vec(m: Mat, v: Vec) -> Vec:
    return tuple(dot(row, v) for row in m)


def mat_mul(a: Mat, b: Mat) -> Mat:
    bt = tuple(zip(*b))
    return tuple(tuple(dot(row, col) for col in bt) for row in a)


def mat_transpose(m: Mat) -> Mat:
    return tuple(zip(*m))


def identity(n: int) -> Mat:
    return tuple(tuple(1 if i == j else 0 for j in range(n)) for i in range(n))


def rref(rows) -> Mat:
    """Reduced row echelon form; zero rows dropped.  Canonical per row space."""
    work = [list(r) for r in rows]
    ncols = len(work[0]) if work else 0
    out: list[list[int]] = []
    col = 0
    while work and col < ncols:
        piv = next((r for r in work if r[col] % 3), None)
        if piv is None:
            col += 1
            continue
        work.remove(piv)
        inv = 1 if piv[col] % 3 == 1 else 2  # 2*2=4=1
        piv = [(x * inv) % 3 for x in piv]
        for r in work + out:
            c = r[col] % 3
            if c:
                for j in range(ncols):
                    r[j] = (r[j] - c * piv[j]) % 3
        out.append(piv)
        work = [r for r in work if any(x % 3 for x in r)]
        col += 1
    out.sort(key=lambda r: next(j for j, x in enumerate(r) if x))
    return tuple(tuple(r) for r in out)


def rank(rows) -> int:
    return len(rref(rows))


def pivots(m: Mat) -> tuple[int, ...]:
    return tuple(next(j for j, x in enumerate(row) if x) for row in m)


def in_rowspace(v: Vec, m: Mat) -> bool:
    r = list(v)
    for row in m:
        p = next(j for j, x in enumerate(row) if x)
        c = r[p] % 3
        if c:
            for j in range(len(r)):
                r[j] = (r[j] - c * row[j]) % 3
    return not any(x % 3 for x in r)


def reduce_mod_rowspace(v: Vec, m: Mat) -> Vec:
    r = list(v)
    for row in m:
        p = next(j for j, x in enumerate(row) if x)
        c = r[p] % 3
        if c:
            for j in range(len(r)):
                r[j] = (r[j] - c * row[j]) % 3
    return tuple(r)


def nullspace(m: Mat, ncols: int) -> Mat:
    """RREF basis of {v : m @ v = 0}."""
    r = rref(m) if m else ()
    piv = set(pivots(r))
    free = [j for j in range(ncols) if j not in piv]
    basis = []
    for f in free:
        v = [0] * ncols
        v[f] = 1
        for row in r:
            p = next(j for j, x in enumerate(row) if x)
            v[p] = (-row[f]) % 3
        basis.append(tuple(v))
    return rref(basis) if basis else ()


def solve(m: Mat, b: Vec):
    """One solution x of m @ x = b, or None."""
    ncols = len(m[0]) if m else len(b)
    aug = [list(row) + [bb] for row, bb in zip(m, b)]
    r = rref(aug)
    x = [0] * ncols
    for row in r:
        p = next(j for j, v in enumerate(row) if v)
        if p == ncols:
            return None
        x[p] = row[ncols]
    # back-substitution is implicit: rref rows have unit pivot and are reduced
    # against each other, but free columns may interact; verify.
    cand = tuple(x)
    if all(dot(row, cand) == bb % 3 for row, bb in zip(m, b)):
        return cand
    return None


def mat_inverse(m: Mat) -> Mat:
    n = len(m)
    aug = [list(m[i]) + [1 if j == i else 0 for j in range(n)] for i in range(n)]
    r = rref(aug)
    if len(r) != n or pivots(r) != tuple(range(n)):
        raise ValueError("matrix not invertible")
    return tuple(tuple(row[n:]) for row in r)


def subspaces(ncols: int, dim: int):
    """All dim-dimensional subspaces of F3^ncols, as canonical RREF matrices."""
    if dim == 0:
        yield ()
        return
    for piv in itertools.combinations(range(ncols), dim):
        free_slots = []
        for i, p in enumerate(piv):
            for j in range(p + 1, ncols):
                if j not in piv:
                    free_slots.append((i, j))
        for vals in itertools.product((0, 1, 2), repeat=len(free_slots)):
            rows = [[0] * ncols for _ in range(dim)]
            for i, p in enumerate(piv):
                rows[i][p] = 1
            for (i, j), v in zip(free_slots, vals):
                rows[i][j] = v
            yield tuple(tuple(r) for r in rows)


def num_subspaces(ncols: int, dim: int) -> int:
    num = den = 1
    for i in range(dim):
        num *= 3 ** (ncols - i) - 1
        den *= 3 ** (dim - i) - 1
    return num // den


def gl_order(d: int) -> int:
    o = 1
    for i in range(d):
        o *= 3**d - 3**i
    return o


@lru_cache(maxsize=None)
def gl3_elements(d: int) -> tuple[Mat, ...]:
    """All of GL(d,3), enumerated in a fixed order (row-major candidate scan)."""
    out = []
    vecs = list(itertools.product((0, 1, 2), repeat=d))
    for rows in itertools.product(vecs, repeat=d):
        m = tuple(rows)
        if rank(m) == d:
            out.append(m)
    assert len(out) == gl_order(d)
    return tuple(out)


def mat_group_closure(gens, cap: int = 2_000_000) -> set:
    seen = set(gens) | {identity(len(gens[0]))}
    frontier = list(seen)
    while frontier:
        nxt = []
        for a in frontier:
            for g in gens:
                c = mat_mul(a, g)
                if c not in seen:
                    seen.add(c)
                    nxt.append(c)
                    if len(seen) > cap:
                        raise RuntimeError("matrix closure exceeded cap")
        frontier = nxt
    return seen


# ---------------------------------------------------------------------------
# Projective points: the (3^d-1)/2 lines of F3^d, canonically indexed.

@lru_cache(maxsize=None)
def line_reps(d: int) -> tuple[Vec, ...]:
    """Canonical representative (first nonzero entry 1) of each line, lex order."""
    reps = []
    for v in itertools.product((0, 1, 2), repeat=d):
        if any(v):
            lead = next(x for x in v if x)
            if lead == 1:
                reps.append(v)
    return tuple(sorted(reps))


def normalize_line(v: Vec) -> Vec:
    lead = next(x for x in v if x % 3)
    return vec_scale(v, 1 if lead == 1 else 2)


@lru_cache(maxsize=None)
def _line_index_table(d: int) -> dict:
    return {v: i + 1 for i, v in enumerate(line_reps(d))}


def line_index(v: Vec) -> int:
    """1-based index of the line spanned by v."""
    return _line_index_table(len(v))[normalize_line(v)]


def line_vector(d: int, idx: int) -> Vec:
    return line_reps(d)[idx - 1]


def plane_of_normal(d: int, normal: Vec) -> tuple[Vec, ...]:
    """The lines lying on the hyperplane with the given normal vector."""
    return tuple(v for v in line_reps(d) if dot(v, normal) == 0)
