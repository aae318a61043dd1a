# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.  Semantics must match ``cipt._pykernels`` exactly.

State batches are ``(2**L, B)`` C-contiguous complex arrays: one column per
trajectory, so the innermost loops run over trajectories sharing a gate.
"""

from libc.math cimport sqrt

ctypedef double complex cplx

cdef double CUTOFF = 1e-12


cdef inline double abs2(cplx z) nogil:
    return z.real * z.real + z.imag * z.imag


cdef inline int choose(double p0, double p1, double u) nogil:
    # -1 flags a state with no weight on either outcome
    if p0 + p1 <= 0.0:
        return -1
    if p1 < CUTOFF:
        return 0
    if p0 < CUTOFF:
        return 1
    if u * (p0 + p1) < p0:
        return 0
    return 1


cdef inline Py_ssize_t insert_zero(Py_ssize_t n, int pos) nogil:
    return ((n >> pos) << (pos + 1)) | (n & ((<Py_ssize_t>1 << pos) - 1))


def bernoulli_step(const cplx[:, ::1] psi, const cplx[:, ::1] U, cplx[:, ::1] out):
    """``out = U_{L-1,L} T psi`` with T the cyclic left shift."""
    cdef Py_ssize_t N = psi.shape[0], B = psi.shape[1]
    cdef Py_ssize_t half = N >> 1
    cdef Py_ssize_t b, j
    cdef cplx a0, a1, a2, a3
    cdef const cplx *s0
    cdef const cplx *s1
    cdef const cplx *s2
    cdef const cplx *s3
    cdef cplx *d0
    cdef cplx *d1
    cdef cplx *d2
    cdef cplx *d3
    cdef cplx u00 = U[0, 0], u01 = U[0, 1], u02 = U[0, 2], u03 = U[0, 3]
    cdef cplx u10 = U[1, 0], u11 = U[1, 1], u12 = U[1, 2], u13 = U[1, 3]
    cdef cplx u20 = U[2, 0], u21 = U[2, 1], u22 = U[2, 2], u23 = U[2, 3]
    cdef cplx u30 = U[3, 0], u31 = U[3, 1], u32 = U[3, 2], u33 = U[3, 3]
    with nogil:
        for j in range(N >> 2):
            s0 = &psi[2 * j, 0]
            s1 = &psi[2 * j + half, 0]
            s2 = &psi[2 * j + 1, 0]
            s3 = &psi[2 * j + 1 + half, 0]
            d0 = &out[4 * j, 0]
            d1 = &out[4 * j + 1, 0]
            d2 = &out[4 * j + 2, 0]
            d3 = &out[4 * j + 3, 0]
            for b in range(B):
                a0 = s0[b]
                a1 = s1[b]
                a2 = s2[b]
                a3 = s3[b]
                d0[b] = u00 * a0 + u01 * a1 + u02 * a2 + u03 * a3
                d1[b] = u10 * a0 + u11 * a1 + u12 * a2 + u13 * a3
                d2[b] = u20 * a0 + u21 * a1 + u22 * a2 + u23 * a3
                d3[b] = u30 * a0 + u31 * a1 + u32 * a2 + u33 * a3


cdef int _column_weights(const cplx[:, ::1] psi, Py_ssize_t mk, double[::1] p0, double[::1] p1) nogil:
    cdef Py_ssize_t N = psi.shape[0], B = psi.shape[1]
    cdef Py_ssize_t n, b
    cdef const cplx *row
    for b in range(B):
        p0[b] = 0.0
        p1[b] = 0.0
    for n in range(N):
        row = &psi[n, 0]
        if n & mk:
            for b in range(B):
                p1[b] += abs2(row[b])
        else:
            for b in range(B):
                p0[b] += abs2(row[b])
    return 0


def control_step(const cplx[:, ::1] psi, const double[::1] u, cplx[:, ::1] out,
                 signed char[::1] outcomes, double[::1] probs):
    """Measure site L, flip on outcome 1, cyclic right shift."""
    cdef Py_ssize_t N = psi.shape[0], B = psi.shape[1]
    cdef Py_ssize_t half = N >> 1
    cdef Py_ssize_t b, j
    cdef double[::1] p0 = probs.copy()
    cdef double[::1] p1 = probs.copy()
    cdef double[::1] scale = probs.copy()
    cdef int m
    cdef cplx *d
    cdef const cplx *s0
    cdef const cplx *s1
    _column_weights(psi, 1, p0, p1)
    for b in range(B):
        m = choose(p0[b], p1[b], u[b])
        if m < 0:
            raise FloatingPointError("state has zero norm before measurement")
        outcomes[b] = m
        probs[b] = (p1[b] if m else p0[b]) / (p0[b] + p1[b])
        scale[b] = 1.0 / sqrt(p1[b] if m else p0[b])
    with nogil:
        for j in range(half):
            d = &out[j, 0]
            s0 = &psi[2 * j, 0]
            s1 = &psi[2 * j + 1, 0]
            for b in range(B):
                if outcomes[b]:
                    d[b] = s1[b] * scale[b]
                else:
                    d[b] = s0[b] * scale[b]
        for j in range(half, N):
            d = &out[j, 0]
            for b in range(B):
                d[b] = 0.0


def pair_gate(cplx[:, ::1] psi, const cplx[:, ::1] U, int pos_a, int pos_b):
    """In-place gate on bit positions ``pos_a`` (major) and ``pos_b``; 0 = LSB."""
    cdef Py_ssize_t N = psi.shape[0], B = psi.shape[1]
    cdef Py_ssize_t ma = <Py_ssize_t>1 << pos_a, mb = <Py_ssize_t>1 << pos_b
    cdef int lo = pos_a if pos_a < pos_b else pos_b
    cdef int hi = pos_b if pos_a < pos_b else pos_a
    cdef Py_ssize_t b, t, n
    cdef cplx a0, a1, a2, a3
    cdef cplx *p0
    cdef cplx *p1
    cdef cplx *p2
    cdef cplx *p3
    cdef cplx u00 = U[0, 0], u01 = U[0, 1], u02 = U[0, 2], u03 = U[0, 3]
    cdef cplx u10 = U[1, 0], u11 = U[1, 1], u12 = U[1, 2], u13 = U[1, 3]
    cdef cplx u20 = U[2, 0], u21 = U[2, 1], u22 = U[2, 2], u23 = U[2, 3]
    cdef cplx u30 = U[3, 0], u31 = U[3, 1], u32 = U[3, 2], u33 = U[3, 3]
    with nogil:
        for t in range(N >> 2):
            n = insert_zero(insert_zero(t, lo), hi)
            p0 = &psi[n, 0]
            p1 = &psi[n | mb, 0]
            p2 = &psi[n | ma, 0]
            p3 = &psi[n | ma | mb, 0]
            for b in range(B):
                a0 = p0[b]
                a1 = p1[b]
                a2 = p2[b]
                a3 = p3[b]
                p0[b] = u00 * a0 + u01 * a1 + u02 * a2 + u03 * a3
                p1[b] = u10 * a0 + u11 * a1 + u12 * a2 + u13 * a3
                p2[b] = u20 * a0 + u21 * a1 + u22 * a2 + u23 * a3
                p3[b] = u30 * a0 + u31 * a1 + u32 * a2 + u33 * a3


def block_gate(cplx[:, ::1] psi, const cplx[:, ::1] U, int pos_a, int pos_b):
    """In-place ``1 (+) U[1:, 1:]``: like :func:`pair_gate` but leaves ``|00>`` alone."""
    cdef Py_ssize_t N = psi.shape[0], B = psi.shape[1]
    cdef Py_ssize_t ma = <Py_ssize_t>1 << pos_a, mb = <Py_ssize_t>1 << pos_b
    cdef int lo = pos_a if pos_a < pos_b else pos_b
    cdef int hi = pos_b if pos_a < pos_b else pos_a
    cdef Py_ssize_t b, t, n
    cdef cplx a1, a2, a3
    cdef cplx *p1
    cdef cplx *p2
    cdef cplx *p3
    cdef cplx u11 = U[1, 1], u12 = U[1, 2], u13 = U[1, 3]
    cdef cplx u21 = U[2, 1], u22 = U[2, 2], u23 = U[2, 3]
    cdef cplx u31 = U[3, 1], u32 = U[3, 2], u33 = U[3, 3]
    with nogil:
        for t in range(N >> 2):
            n = insert_zero(insert_zero(t, lo), hi)
            p1 = &psi[n | mb, 0]
            p2 = &psi[n | ma, 0]
            p3 = &psi[n | ma | mb, 0]
            for b in range(B):
                a1 = p1[b]
                a2 = p2[b]
                a3 = p3[b]
                p1[b] = u11 * a1 + u12 * a2 + u13 * a3
                p2[b] = u21 * a1 + u22 * a2 + u23 * a3
                p3[b] = u31 * a1 + u32 * a2 + u33 * a3


def measure_reset(cplx[:, ::1] psi, int pos, const double[::1] u,
                  signed char[::1] outcomes, double[::1] probs):
    """In-place measurement of bit ``pos`` followed by a flip on outcome 1."""
    cdef Py_ssize_t N = psi.shape[0], B = psi.shape[1]
    cdef Py_ssize_t mk = <Py_ssize_t>1 << pos
    cdef Py_ssize_t b, t, n
    cdef double[::1] p0 = probs.copy()
    cdef double[::1] p1 = probs.copy()
    cdef double[::1] scale = probs.copy()
    cdef int m
    cdef cplx *r0
    cdef cplx *r1
    _column_weights(psi, mk, p0, p1)
    for b in range(B):
        m = choose(p0[b], p1[b], u[b])
        if m < 0:
            raise FloatingPointError("state has zero norm before measurement")
        outcomes[b] = m
        probs[b] = (p1[b] if m else p0[b]) / (p0[b] + p1[b])
        scale[b] = 1.0 / sqrt(p1[b] if m else p0[b])
    with nogil:
        for t in range(N >> 1):
            n = insert_zero(t, pos)
            r0 = &psi[n, 0]
            r1 = &psi[n | mk, 0]
            for b in range(B):
                if outcomes[b]:
                    r0[b] = r1[b] * scale[b]
                else:
                    r0[b] = r0[b] * scale[b]
                r1[b] = 0.0


def classical_evolve(const unsigned long long[::1] n0, const unsigned char[:, ::1] kinds,
                     const unsigned short[:, ::1] perm_idx, const unsigned char[:, ::1] table,
                     int L, const unsigned char[::1] record, unsigned long long[:, ::1] out):
    cdef Py_ssize_t C = kinds.shape[0], T = kinds.shape[1]
    cdef Py_ssize_t c, t, r
    cdef unsigned long long n
    cdef unsigned long long mask = (<unsigned long long>1 << L) - 1
    cdef unsigned long long low = 7
    with nogil:
        for c in range(C):
            n = n0[c]
            r = 0
            if record[0]:
                out[c, 0] = n
                r = 1
            for t in range(T):
                if kinds[c, t]:
                    n = n >> 1
                else:
                    n = ((n << 1) & mask) | (n >> (L - 1))
                    n = (n & ~low) | table[perm_idx[c, t], n & low]
                if record[t + 1]:
                    out[c, r] = n
                    r += 1

