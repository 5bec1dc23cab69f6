"""Pure-Python collection engine for weighted power-commutator presentations.

Elements of a group of order 3^n are exponent vectors of length n with
entries in {0,1,2}, stored as `bytes`.  Collection-from-the-left: pushing a
generator a_i into a normal word only ever touches positions >= i, and every
rewrite (commutator tail, cube tail) lands strictly above the generator that
produced it, so the recursion terminates for any consistent weighted
presentation.

The compiled twin in `_collectc.pyx` implements the same interface; see
`cubicap._kernels.__init__` for the import-time selection.
"""

from __future__ import annotations

IMPLEMENTATION = "pure"


class Collector:
    """Normal-form arithmetic for one presentation.

    pow_tails[i]   : bytes, normal form of a_i^3 (support > i)
    comm_tails[j][i]: bytes, normal form of [a_j, a_i] for j > i (support > j)
    Missing/zero tails mean the relation collapses to the identity.
    """

    def __init__(self, n: int, pow_tails, comm_tails):
        self.n = n
        zero = bytes(n)
        self.pow_tails = [bytes(t) if t is not None else zero for t in pow_tails]
        # comm[j*n+i] for j > i
        self.comm = [zero] * (n * n)
        for j in range(n):
            for i in range(j):
                t = comm_tails[j][i]
                if t is not None:
                    self.comm[j * n + i] = bytes(t)
        # conj_gen[j*n+i] = normal form of a_j^{a_i} = a_j * [a_j, a_i]
        self.conj_gen = [b""] * (n * n)
        for j in range(n):
            for i in range(j):
                v = bytearray(n)
                v[j] = 1
                tail = self.comm[j * n + i]
                for k in range(j + 1, n):
                    v[k] = tail[k]
                self.conj_gen[j * n + i] = bytes(v)
        self.identity = zero

    # -- core ---------------------------------------------------------------

    def _mult_gen(self, u: bytearray, i: int) -> bytearray:
        """u := normal form of u * a_i."""
        n = self.n
        hi = -1
        for j in range(n - 1, i, -1):
            if u[j]:
                hi = j
                break
        if hi < 0:
            if u[i] < 2:
                u[i] += 1
                return u
            u[i] = 0
            pt = self.pow_tails[i]
            for j in range(i + 1, n):
                u[j] = pt[j]
            return u
        # conjugate the part above i by a_i, then reattach
        conj = bytearray(n)
        for j in range(i + 1, hi + 1):
            e = u[j]
            if e:
                cg = self.conj_gen[j * n + i]
                for _ in range(e):
                    conj = self._mult(conj, cg)
        if u[i] < 2:
            r = bytearray(n)
            r[: i + 1] = u[: i + 1]
            r[i] += 1
            rest = conj
        else:
            r = bytearray(n)
            r[:i] = u[:i]
            pt = self.pow_tails[i]
            if any(pt):
                rest = self._mult(bytearray(pt), bytes(conj))
            else:
                rest = conj
        for j in range(i + 1, n):
            r[j] = rest[j]
        return r

    def _mult(self, u: bytearray, v) -> bytearray:
        for i in range(self.n):
            e = v[i]
            if e:
                u = self._mult_gen(u, i)
                if e == 2:
                    u = self._mult_gen(u, i)
        return u

    # -- public -------------------------------------------------------------

    def mult(self, u: bytes, v: bytes) -> bytes:
        return bytes(self._mult(bytearray(u), v))

    def mult_gen_pow(self, u: bytes, i: int, e: int) -> bytes:
        w = bytearray(u)
        for _ in range(e % 3):
            w = self._mult_gen(w, i)
        return bytes(w)

    def inverse(self, u: bytes) -> bytes:
        n = self.n
        acc = bytearray(u)
        inv = bytearray(n)
        for i in range(n):
            e = acc[i]
            if e:
                t = 3 - e
                for _ in range(t):
                    acc = self._mult_gen(acc, i)
                for _ in range(t):
                    inv = self._mult_gen(inv, i)
        return bytes(inv)

    def power(self, u: bytes, e: int) -> bytes:
        if e < 0:
            return self.power(self.inverse(u), -e)
        r = bytearray(self.n)
        for _ in range(e):
            r = self._mult(r, u)
        return bytes(r)

    def word(self, letters) -> bytes:
        """Normal form of a product of (generator_index, exponent) letters."""
        r = bytearray(self.n)
        for i, e in letters:
            e %= 3
            for _ in range(e):
                r = self._mult_gen(r, i)
        return bytes(r)

    def conjugate(self, u: bytes, x: bytes) -> bytes:
        return self.mult(self.mult(self.inverse(x), u), x)

    def commutator(self, x: bytes, y: bytes) -> bytes:
        return self.mult(self.inverse(self.mult(y, x)), self.mult(x, y))
