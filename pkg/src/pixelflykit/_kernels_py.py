"""Pure NumPy fallbacks for the compiled kernels in ``_kernels.pyx``.

Same signatures and accumulate-into-``out`` semantics as the extension.
"""
import numpy as np

BACKEND = "python"

# Caps the size of the (nnz, b, p) temporary built per chunk.
_CHUNK_ELEMS = 1 << 22


def _row_chunks(indptr, b, p):
    nbr = len(indptr) - 1
    start = 0
    per_block = max(b * b * p, 1)
    while start < nbr:
        stop = start + 1
        while stop < nbr and (indptr[stop + 1] - indptr[start]) * per_block <= _CHUNK_ELEMS:
            stop += 1
        yield start, stop
        start = stop


def bsr_spmm(indptr, indices, values, x, out, nthreads=1):
    b = values.shape[1]
    p = x.shape[1]
    if values.shape[0] == 0:
        return
    xb = x.reshape(-1, b, p)
    ob = out.reshape(-1, b, p)
    for lo, hi in _row_chunks(indptr, b, p):
        k0, k1 = indptr[lo], indptr[hi]
        if k0 == k1:
            continue
        prod = np.matmul(values[k0:k1], xb[indices[k0:k1]])
        counts = np.diff(indptr[lo:hi + 1])
        nonempty = np.flatnonzero(counts)
        starts = indptr[lo:hi][nonempty] - k0
        ob[lo + nonempty] += np.add.reduceat(prod, starts, axis=0)


def bsr_spmm_t(indptr, indices, values, x, out):
    b = values.shape[1]
    p = x.shape[1]
    if values.shape[0] == 0:
        return
    xb = x.reshape(-1, b, p)
    ob = out.reshape(-1, b, p)
    block_rows = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
    for lo, hi in _row_chunks(indptr, b, p):
        k0, k1 = indptr[lo], indptr[hi]
        if k0 == k1:
            continue
        prod = np.matmul(values[k0:k1].transpose(0, 2, 1), xb[block_rows[k0:k1]])
        np.add.at(ob, indices[k0:k1], prod)


def masked_outer_entries(X, G, rows, cols, out, nthreads=1):
    acc = np.zeros(len(rows))
    for i in range(X.shape[1]):
        acc += X[rows, i] * G[cols, i]
    out[:] = acc
