# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled collection engine; mirrors `cubicap._kernels.pure.Collector`.

Exponent vectors travel as `bytes`; the C core works on fixed char buffers
(generator count capped at 64, far above anything the descendant machinery
produces).
"""

from libc.string cimport memset, memcpy

IMPLEMENTATION = "compiled"

DEF MAXN = 64


cdef class Collector:
    cdef int n
    cdef char ptails[MAXN * MAXN]          # ptails[i*n+j] = pow tail of a_i at j
    cdef char conj[MAXN * MAXN * MAXN]     # conj[(j*n+i)*n + k] = nf of a_j^{a_i}
    cdef char has_pt[MAXN]
    cdef public bytes identity

    def __init__(self, int n, pow_tails, comm_tails):
        if n > MAXN:
            raise ValueError(f"generator count {n} exceeds compiled kernel cap {MAXN}")
        self.n = n
        memset(self.ptails, 0, MAXN * MAXN)
        memset(self.conj, 0, MAXN * MAXN * MAXN)
        memset(self.has_pt, 0, MAXN)
        cdef int i, j, k
        cdef bytes t
        for i in range(n):
            t = bytes(pow_tails[i]) if pow_tails[i] is not None else bytes(n)
            for j in range(n):
                self.ptails[i * n + j] = t[j]
                if t[j]:
                    self.has_pt[i] = 1
        for j in range(n):
            for i in range(j):
                t = bytes(comm_tails[j][i]) if comm_tails[j][i] is not None else bytes(n)
                self.conj[(j * n + i) * n + j] = 1
                for k in range(j + 1, n):
                    self.conj[(j * n + i) * n + k] = t[k]
        self.identity = bytes(n)

    # -- C core ---------------------------------------------------------------

    cdef void c_mult(self, char* u, const char* v):
        """u := normal form of u * v (v a normal-form vector, not aliasing u)."""
        cdef int i, e
        for i in range(self.n):
            e = v[i]
            if e:
                self.c_mult_gen(u, i)
                if e == 2:
                    self.c_mult_gen(u, i)

    cdef void c_mult_gen(self, char* u, int i):
        """u := normal form of u * a_i."""
        cdef int n = self.n
        cdef int hi = -1
        cdef int j, e, r
        for j in range(n - 1, i, -1):
            if u[j]:
                hi = j
                break
        cdef const char* pt
        if hi < 0:
            if u[i] < 2:
                u[i] += 1
                return
            u[i] = 0
            if self.has_pt[i]:
                pt = &self.ptails[i * n]
                for j in range(i + 1, n):
                    u[j] = pt[j]
            return
        cdef char cj[MAXN]
        memset(cj, 0, n)
        for j in range(i + 1, hi + 1):
            e = u[j]
            if e:
                for r in range(e):
                    self.c_mult(cj, &self.conj[(j * n + i) * n])
        cdef char rest[MAXN]
        if u[i] < 2:
            u[i] += 1
            memcpy(rest, cj, n)
        else:
            u[i] = 0
            if self.has_pt[i]:
                memcpy(rest, &self.ptails[i * n], n)
                self.c_mult(rest, cj)
            else:
                memcpy(rest, cj, n)
        for j in range(i + 1, n):
            u[j] = rest[j]

    # -- public ---------------------------------------------------------------

    def mult(self, bytes u, bytes v) -> bytes:
        cdef char buf[MAXN]
        memcpy(buf, <const char*> u, self.n)
        self.c_mult(buf, <const char*> v)
        return buf[: self.n]

    def mult_gen_pow(self, bytes u, int i, int e) -> bytes:
        cdef char buf[MAXN]
        memcpy(buf, <const char*> u, self.n)
        cdef int r
        for r in range(e % 3):
            self.c_mult_gen(buf, i)
        return buf[: self.n]

    def inverse(self, bytes u) -> bytes:
        cdef char acc[MAXN]
        cdef char inv[MAXN]
        memcpy(acc, <const char*> u, self.n)
        memset(inv, 0, self.n)
        cdef int i, e, t, r
        for i in range(self.n):
            e = acc[i]
            if e:
                t = 3 - e
                for r in range(t):
                    self.c_mult_gen(acc, i)
                for r in range(t):
                    self.c_mult_gen(inv, i)
        return inv[: self.n]

    def power(self, bytes u, int e) -> bytes:
        if e < 0:
            return self.power(self.inverse(u), -e)
        cdef char buf[MAXN]
        memset(buf, 0, self.n)
        cdef int r
        for r in range(e):
            self.c_mult(buf, <const char*> u)
        return buf[: self.n]

    def word(self, letters) -> bytes:
        cdef char buf[MAXN]
        memset(buf, 0, self.n)
        cdef int i, e, r
        for i, e in letters:
            for r in range(e % 3):
                self.c_mult_gen(buf, i)
        return buf[: self.n]

    def conjugate(self, bytes u, bytes x) -> bytes:
        return self.mult(self.mult(self.inverse(x), u), x)

    def commutator(self, bytes x, bytes y) -> bytes:
        return self.mult(self.inverse(self.mult(y, x)), self.mult(x, y))
