"""Block-sparse matrices, low-rank factors and the mixed sparse + low-rank weight."""
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import PixelflyError
from .patterns import BlockMask

__all__ = [
    "BlockSparseMatrix",
    "LowRankPair",
    "SparseLowRank",
    "spmm",
    "spmm_transpose",
    "slr_apply",
    "to_dense",
]


def _as_matrix(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise PixelflyError(f"expected a matrix, got shape {x.shape}")
    return np.ascontiguousarray(x)


@dataclass(frozen=True, eq=False)
class BlockSparseMatrix:
    """A :class:`BlockMask` plus one dense ``b x b`` value block per nonzero block.

    ``values[k]`` belongs to ``mask.nonzero_blocks[k]`` (block-CSR order).
    """

    mask: BlockMask
    values: np.ndarray

    def __post_init__(self):
        b = self.mask.block
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.size == 0:
            v = v.reshape(0, b, b)
        if v.shape != (self.mask.nnz_blocks, b, b):
            raise PixelflyError(
                f"values shape {v.shape} does not match mask ({self.mask.nnz_blocks}, {b}, {b})"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_indptr", self.mask.indptr)

    @property
    def shape(self):
        return (self.mask.rows, self.mask.cols)

    @property
    def block(self):
        return self.mask.block

    @classmethod
    def from_dense(cls, dense, mask):
        """Extract the entries of ``dense`` that lie on ``mask``'s blocks."""
        dense = np.asarray(dense, dtype=np.float64)
        if dense.shape != (mask.rows, mask.cols):
            raise PixelflyError(f"dense shape {dense.shape} != mask {(mask.rows, mask.cols)}")
        b = mask.block
        tiles = dense.reshape(mask.n_block_rows, b, mask.n_block_cols, b).transpose(0, 2, 1, 3)
        return cls(mask, tiles[mask.block_rows, mask.block_cols])

    @classmethod
    def random(cls, mask, rng=None, scale=1.0):
        rng = np.random.default_rng(rng)
        b = mask.block
        return cls(mask, scale * rng.standard_normal((mask.nnz_blocks, b, b)))

    @classmethod
    def identity(cls, n_blocks, block):
        mask = BlockMask.from_grid(np.eye(n_blocks, dtype=bool), block)
        return cls(mask, np.broadcast_to(np.eye(block), (n_blocks, block, block)))

    def to_dense(self):
        m = self.mask
        b = m.block
        out = np.zeros((m.n_block_rows, m.n_block_cols, b, b))
        out[m.block_rows, m.block_cols] = self.values
        return out.transpose(0, 2, 1, 3).reshape(m.rows, m.cols)

    def scaled(self, alpha):
        return BlockSparseMatrix(self.mask, alpha * self.values)

    def frobenius_norm(self):
        return float(np.sqrt(np.sum(self.values**2)))


def to_dense(a):
    return a.to_dense()


def spmm(a, x, backend=None):
    """``A @ x`` for block-sparse ``A`` and dense ``x``."""
    x = _as_matrix(x)
    if x.shape[0] != a.mask.cols:
        raise PixelflyError(f"dimension mismatch: A is {a.shape}, x has {x.shape[0]} rows")
    out = np.zeros((a.mask.rows, x.shape[1]))
    k = _backend.get_kernels(backend)
    k.bsr_spmm(a._indptr, a.mask.block_cols, a.values, x, out, _backend.thread_count())
    return out


def spmm_transpose(a, x, backend=None):
    """``A.T @ x`` without forming the transpose."""
    x = _as_matrix(x)
    if x.shape[0] != a.mask.rows:
        raise PixelflyError(f"dimension mismatch: A.T is {a.shape[::-1]}, x has {x.shape[0]} rows")
    out = np.zeros((a.mask.cols, x.shape[1]))
    k = _backend.get_kernels(backend)
    k.bsr_spmm_t(a._indptr, a.mask.block_cols, a.values, x, out)
    return out


@dataclass(frozen=True, eq=False)
class LowRankPair:
    """``U @ V.T`` with ``U`` of shape (m, r) and ``V`` of shape (n, r); r may be 0."""

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=np.float64)
        V = np.asarray(self.V, dtype=np.float64)
        if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
            raise PixelflyError(f"incompatible low-rank factors {U.shape}, {V.shape}")
        if U.shape[1] > min(U.shape[0], V.shape[0]):
            raise PixelflyError(f"rank {U.shape[1]} exceeds min{(U.shape[0], V.shape[0])}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    @property
    def rank(self):
        return self.U.shape[1]

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    @classmethod
    def zeros(cls, m, n):
        return cls(np.zeros((m, 0)), np.zeros((n, 0)))

    def apply(self, x):
        # U (V^T x): never materialise the m x n product
        return self.U @ (self.V.T @ x)

    def to_dense(self):
        return self.U @ self.V.T


@dataclass(frozen=True, eq=False)
class SparseLowRank:
    """Weight ``gamma * B + (1 - gamma) * U V^T``."""

    gamma: float
    sparse: BlockSparseMatrix
    lowrank: LowRankPair

    def __post_init__(self):
        if self.sparse.shape != self.lowrank.shape:
            raise PixelflyError(f"sparse {self.sparse.shape} and low-rank {self.lowrank.shape} differ")

    @property
    def shape(self):
        return self.sparse.shape

    def to_dense(self):
        return self.gamma * self.sparse.to_dense() + (1.0 - self.gamma) * self.lowrank.to_dense()


def slr_apply(w, x, backend=None):
    x = _as_matrix(x)
    if x.shape[0] != w.shape[1]:
        raise PixelflyError(f"dimension mismatch: W is {w.shape}, x has {x.shape[0]} rows")
    out = w.gamma * spmm(w.sparse, x, backend=backend)
    if w.lowrank.rank:
        out += (1.0 - w.gamma) * w.lowrank.apply(x)
    return out
