# cython: language_level=3
"""Compiled inner loops for block-sparse products and masked gradients.

Mirrors the NumPy implementations in ``_kernels_py``; both expose the same
signatures and are selected by ``pixelflykit._backend``.
"""
from cython.parallel cimport prange
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

BACKEND = "compiled"

# Blocks at least this wide go through BLAS; smaller ones use the scalar loop.
cdef enum:
    GEMM_MIN_BLOCK = 4


cdef inline void _gemm_acc(const double* a, const double* v, double* c,
                           int p, int b, bint transpose_v) noexcept nogil:
    # Row-major C[b, p] += op(V)[b, b] @ A[b, p], expressed column-major as
    # C^T = A^T op(V)^T; all leading dimensions equal the row length p.
    cdef char ta = b'N'
    cdef char tb = b'T' if transpose_v else b'N'
    cdef double one = 1.0
    dgemm(&ta, &tb, &p, &b, &b, &one, <double*>a, &p, <double*>v, &b, &one, c, &p)


def bsr_spmm(const cnp.int64_t[::1] indptr,
             const cnp.int64_t[::1] indices,
             const double[:, :, ::1] values,
             const double[:, ::1] x,
             double[:, ::1] out,
             int nthreads=1):
    """Accumulate ``out += A @ x`` for a block-CSR matrix ``A``."""
    cdef Py_ssize_t nbr = indptr.shape[0] - 1
    cdef Py_ssize_t b = values.shape[1]
    cdef Py_ssize_t p = x.shape[1]
    cdef Py_ssize_t ib, kk, j, r, c, q, orow, xrow
    cdef double v
    if nthreads < 1:
        nthreads = 1
    if nbr == 0 or p == 0:
        return
    with nogil:
        for ib in prange(nbr, num_threads=nthreads, schedule="static"):
            for kk in range(indptr[ib], indptr[ib + 1]):
                j = indices[kk]
                if b >= GEMM_MIN_BLOCK:
                    _gemm_acc(&x[j * b, 0], &values[kk, 0, 0], &out[ib * b, 0],
                              <int>p, <int>b, False)
                    continue
                for r in range(b):
                    orow = ib * b + r
                    for c in range(b):
                        v = values[kk, r, c]
                        xrow = j * b + c
                        for q in range(p):
                            out[orow, q] += v * x[xrow, q]


def bsr_spmm_t(const cnp.int64_t[::1] indptr,
               const cnp.int64_t[::1] indices,
               const double[:, :, ::1] values,
               const double[:, ::1] x,
               double[:, ::1] out):
    """Accumulate ``out += A.T @ x`` for a block-CSR matrix ``A``.

    Serial: different block rows scatter into the same output rows.
    """
    cdef Py_ssize_t nbr = indptr.shape[0] - 1
    cdef Py_ssize_t b = values.shape[1]
    cdef Py_ssize_t p = x.shape[1]
    cdef Py_ssize_t ib, kk, j, r, c, q, orow, xrow
    cdef double v
    if nbr == 0 or p == 0:
        return
    with nogil:
        for ib in range(nbr):
            for kk in range(indptr[ib], indptr[ib + 1]):
                j = indices[kk]
                if b >= GEMM_MIN_BLOCK:
                    _gemm_acc(&x[ib * b, 0], &values[kk, 0, 0], &out[j * b, 0],
                              <int>p, <int>b, True)
                    continue
                for r in range(b):
                    xrow = ib * b + r
                    for c in range(b):
                        v = values[kk, r, c]
                        orow = j * b + c
                        for q in range(p):
                            out[orow, q] += v * x[xrow, q]


def masked_outer_entries(const double[:, ::1] X,
                         const double[:, ::1] G,
                         const cnp.int64_t[::1] rows,
                         const cnp.int64_t[::1] cols,
                         double[::1] out,
                         int nthreads=1):
    """``out[e] = sum_i X[rows[e], i] * G[cols[e], i]``, summed in order of i."""
    cdef Py_ssize_t nnz = rows.shape[0]
    cdef Py_ssize_t n = X.shape[1]
    cdef Py_ssize_t e, i, pr, gr
    cdef double acc
    if nthreads < 1:
        nthreads = 1
    with nogil:
        for e in prange(nnz, num_threads=nthreads, schedule="static"):
            pr = rows[e]
            gr = cols[e]
            acc = 0.0
            for i in range(n):
                acc = acc + X[pr, i] * G[gr, i]
            out[e] = acc
