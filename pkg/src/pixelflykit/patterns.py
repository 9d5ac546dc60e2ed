"""Block-level sparsity masks and the pattern generators built on them.

A :class:`BlockMask` describes which ``block x block`` tiles of a
``rows x cols`` matrix are nonzero. Element-level masks are the ``block=1``
case. Masks are immutable and kept in canonical (row-major sorted, deduplicated)
order, so ``==`` is a structural comparison.
"""
from dataclasses import dataclass
from math import gcd

import numpy as np

from .errors import MaskError

__all__ = [
    "BlockMask",
    "FlatButterflyParams",
    "PatternSpec",
    "butterfly_factor_support",
    "flat_butterfly_mask",
    "generate_pattern",
    "block_cover",
    "cover_cell_count",
    "is_block_aligned",
    "stretch_mask",
    "union_masks",
    "is_power_of_two",
]


def is_power_of_two(x):
    return isinstance(x, (int, np.integer)) and x >= 1 and (x & (x - 1)) == 0


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=np.int64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BlockMask:
    """Binary block-sparsity pattern.

    Parameters
    ----------
    rows, cols : int
        Element dimensions of the masked matrix.
    block : int
        Side length of each square pattern block; must divide ``rows`` and ``cols``.
    block_rows, block_cols : array_like of int
        Coordinates of the nonzero blocks. Any order and duplicates are
        accepted; the stored arrays are canonical.
    """

    rows: int
    cols: int
    block: int
    block_rows: np.ndarray
    block_cols: np.ndarray

    def __post_init__(self):
        rows, cols, block = int(self.rows), int(self.cols), int(self.block)
        if block < 1:
            raise MaskError(f"block must be >= 1, got {block}")
        if rows < 1 or cols < 1:
            raise MaskError(f"mask dimensions must be positive, got {rows}x{cols}")
        if rows % block or cols % block:
            raise MaskError(f"block {block} does not divide {rows}x{cols}")
        bi = np.asarray(self.block_rows, dtype=np.int64).ravel()
        bj = np.asarray(self.block_cols, dtype=np.int64).ravel()
        if bi.shape != bj.shape:
            raise MaskError("block_rows and block_cols differ in length")
        nbr, nbc = rows // block, cols // block
        if bi.size and (bi.min() < 0 or bi.max() >= nbr or bj.min() < 0 or bj.max() >= nbc):
            raise MaskError(f"block coordinate outside the {nbr}x{nbc} block grid")
        keys = np.unique(bi * nbc + bj)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "block", block)
        object.__setattr__(self, "block_rows", _frozen(keys // nbc))
        object.__setattr__(self, "block_cols", _frozen(keys % nbc))

    # construction helpers

    @classmethod
    def from_pairs(cls, rows, cols, block, pairs):
        pairs = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        return cls(rows, cols, block, pairs[:, 0], pairs[:, 1])

    @classmethod
    def from_grid(cls, grid, block=1):
        """Mask from a boolean block grid of shape ``(rows/block, cols/block)``."""
        grid = np.asarray(grid, dtype=bool)
        if grid.ndim != 2:
            raise MaskError("block grid must be 2-D")
        bi, bj = np.nonzero(grid)
        return cls(grid.shape[0] * block, grid.shape[1] * block, block, bi, bj)

    @classmethod
    def empty(cls, rows, cols, block=1):
        return cls(rows, cols, block, [], [])

    @classmethod
    def full(cls, rows, cols, block=1):
        return cls.from_grid(np.ones((rows // block, cols // block), bool), block)

    # views

    @property
    def n_block_rows(self):
        return self.rows // self.block

    @property
    def n_block_cols(self):
        return self.cols // self.block

    @property
    def nnz_blocks(self):
        return int(self.block_rows.size)

    @property
    def nnz(self):
        """Number of nonzero elements."""
        return self.nnz_blocks * self.block * self.block

    @property
    def density(self):
        return self.nnz / (self.rows * self.cols)

    @property
    def nonzero_blocks(self):
        return tuple(zip(self.block_rows.tolist(), self.block_cols.tolist()))

    @property
    def indptr(self):
        """Block-CSR row pointer (length ``n_block_rows + 1``)."""
        counts = np.bincount(self.block_rows, minlength=self.n_block_rows)
        return np.concatenate(([0], np.cumsum(counts))).astype(np.int64)

    def grid(self):
        g = np.zeros((self.n_block_rows, self.n_block_cols), dtype=bool)
        g[self.block_rows, self.block_cols] = True
        return g

    def to_dense(self):
        """Element-level boolean mask of shape ``(rows, cols)``."""
        g = self.grid()
        if self.block == 1:
            return g
        return np.kron(g, np.ones((self.block, self.block), dtype=bool))

    def same_shape(self, other):
        return (self.rows, self.cols, self.block) == (other.rows, other.cols, other.block)

    def __len__(self):
        return self.nnz_blocks

    def __contains__(self, ij):
        i, j = ij
        key = i * self.n_block_cols + j
        keys = self.block_rows * self.n_block_cols + self.block_cols
        pos = np.searchsorted(keys, key)
        return bool(pos < keys.size and keys[pos] == key)

    def __eq__(self, other):
        if not isinstance(other, BlockMask):
            return NotImplemented
        return (
            self.same_shape(other)
            and np.array_equal(self.block_rows, other.block_rows)
            and np.array_equal(self.block_cols, other.block_cols)
        )

    def __hash__(self):
        return hash((self.rows, self.cols, self.block, self.block_rows.tobytes(), self.block_cols.tobytes()))

    def __repr__(self):
        return (
            f"BlockMask(rows={self.rows}, cols={self.cols}, block={self.block}, "
            f"nnz_blocks={self.nnz_blocks})"
        )


@dataclass(frozen=True)
class FlatButterflyParams:
    """``n`` blocks per side, block size ``b``, maximum stride ``max_stride``."""

    n: int
    b: int = 1
    max_stride: int = 2

    def __post_init__(self):
        if not is_power_of_two(self.n) or self.n < 2:
            raise MaskError(f"n must be a power of 2 >= 2, got {self.n}")
        if not is_power_of_two(self.max_stride) or self.max_stride < 2:
            raise MaskError(f"max_stride must be a power of 2 >= 2, got {self.max_stride}")
        if self.max_stride > self.n:
            raise MaskError(f"max_stride {self.max_stride} exceeds n={self.n}")
        if self.b < 1:
            raise MaskError(f"block size must be >= 1, got {self.b}")


def butterfly_factor_support(n_blocks, stride_k, block=1):
    """Support of the block butterfly factor matrix of stride ``stride_k``.

    Block ``(i, j)`` is nonzero iff both lie in the same group of ``stride_k``
    blocks and their offsets in the group are equal or differ by ``stride_k/2``.
    """
    if not is_power_of_two(n_blocks) or not is_power_of_two(stride_k):
        raise MaskError("n_blocks and stride_k must be powers of 2")
    if stride_k < 2 or stride_k > n_blocks:
        raise MaskError(f"need 2 <= stride_k <= n_blocks, got stride_k={stride_k}, n_blocks={n_blocks}")
    i = np.arange(n_blocks, dtype=np.int64)
    # offsets differing by k/2 inside a group of k: flip the k/2 bit
    partner = i ^ (stride_k // 2)
    size = n_blocks * block
    return BlockMask(size, size, block, np.concatenate([i, i]), np.concatenate([i, partner]))


def flat_butterfly_mask(params):
    """Union of the identity and every butterfly factor support up to ``max_stride``.

    Has ``n * (1 + log2(max_stride))`` nonzero blocks.
    """
    n, b, k = params.n, params.b, params.max_stride
    i = np.arange(n, dtype=np.int64)
    rows, cols = [i], [i]
    s = 1
    while 2 * s <= k:
        rows.append(i)
        cols.append(i ^ s)
        s *= 2
    return BlockMask(n * b, n * b, b, np.concatenate(rows), np.concatenate(cols))


_KINDS = ("local", "global", "butterfly", "random")


@dataclass(frozen=True)
class PatternSpec:
    """Candidate sparsity component on a ``rows x cols`` matrix with ``block`` tiles.

    ``window`` (local) and ``width`` (global) are in blocks. The random kind
    draws each block independently with probability ``density`` from a
    Philox-4x64 counter-based generator keyed by ``seed``.
    """

    kind: str
    rows: int
    cols: int
    block: int = 1
    window: int = 0
    width: int = 1
    max_stride: int = 2
    density: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise MaskError(f"unknown pattern kind {self.kind!r}; expected one of {_KINDS}")
        if self.block < 1 or self.rows % self.block or self.cols % self.block:
            raise MaskError(f"block {self.block} does not divide {self.rows}x{self.cols}")
        nbr, nbc = self.rows // self.block, self.cols // self.block
        if self.kind == "local" and not 0 <= self.window < max(nbr, nbc):
            raise MaskError(f"window {self.window} outside [0, {max(nbr, nbc)})")
        if self.kind == "global" and not 0 <= self.width <= min(nbr, nbc):
            raise MaskError(f"width {self.width} outside [0, {min(nbr, nbc)}]")
        if self.kind == "random" and not 0.0 <= self.density <= 1.0:
            raise MaskError(f"density {self.density} outside [0, 1]")


def random_block_grid(n_block_rows, n_block_cols, density, seed):
    """Bernoulli(density) block grid from ``numpy.random.Philox(seed)``.

    Draws are taken in row-major block order, one uniform double per block,
    so the output depends only on (shape, density, seed).
    """
    gen = np.random.Generator(np.random.Philox(seed))
    return gen.random((n_block_rows, n_block_cols)) < density


def generate_pattern(spec):
    nbr, nbc = spec.rows // spec.block, spec.cols // spec.block
    if spec.kind == "local":
        i = np.arange(nbr)[:, None]
        j = np.arange(nbc)[None, :]
        return BlockMask.from_grid(np.abs(i - j) <= spec.window, spec.block)
    if spec.kind == "global":
        g = np.zeros((nbr, nbc), dtype=bool)
        g[: spec.width, :] = True
        g[:, : spec.width] = True
        return BlockMask.from_grid(g, spec.block)
    if spec.kind == "butterfly":
        side = min(nbr, nbc)
        square = flat_butterfly_mask(FlatButterflyParams(side, spec.block, spec.max_stride))
        if nbr == nbc:
            return square
        return stretch_mask(square, spec.rows, spec.cols)
    return BlockMask.from_grid(random_block_grid(nbr, nbc, spec.density, spec.seed), spec.block)


def _check_cover(mask, b1, b2):
    if b1 < 1 or b2 < 1:
        raise MaskError(f"cover sizes must be >= 1, got ({b1}, {b2})")
    if mask.rows % b1 or mask.cols % b2:
        raise MaskError(f"cover ({b1}, {b2}) does not divide {mask.rows}x{mask.cols}")


def _cover_cells(mask, b1, b2):
    """Unique ``(b1, b2)`` cells touched by the mask, as (cell_row, cell_col) arrays."""
    s = mask.block
    bi, bj = mask.block_rows, mask.block_cols
    r_lo, r_hi = bi * s // b1, ((bi + 1) * s - 1) // b1
    c_lo, c_hi = bj * s // b2, ((bj + 1) * s - 1) // b2
    nr, nc = r_hi - r_lo + 1, c_hi - c_lo + 1
    ncell_cols = mask.cols // b2
    if bi.size and nr.max() == 1 and nc.max() == 1:
        keys = r_lo * ncell_cols + c_lo
    else:
        per = nr * nc
        owner = np.repeat(np.arange(bi.size), per)
        offset = np.arange(per.sum()) - np.repeat(np.cumsum(per) - per, per)
        ri = r_lo[owner] + offset // nc[owner]
        ci = c_lo[owner] + offset % nc[owner]
        keys = ri * ncell_cols + ci
    keys = np.unique(keys)
    return keys // ncell_cols, keys % ncell_cols


def cover_cell_count(mask, b1, b2):
    """Number of nonzero cells in the ``(b1, b2)`` block cover."""
    _check_cover(mask, b1, b2)
    return int(_cover_cells(mask, b1, b2)[0].size)


def is_block_aligned(mask, b1, b2):
    _check_cover(mask, b1, b2)
    # cover dominates the mask, so equal element counts means equal masks
    return cover_cell_count(mask, b1, b2) * b1 * b2 == mask.nnz


def block_cover(mask, b1, b2):
    """Smallest ``(b1, b2)``-aligned mask containing ``mask``.

    An already aligned mask is returned unchanged. Otherwise the result uses
    block size ``gcd(b1, b2)``.
    """
    _check_cover(mask, b1, b2)
    if is_block_aligned(mask, b1, b2):
        return mask
    g = gcd(b1, b2)
    ci, cj = _cover_cells(mask, b1, b2)
    fr, fc = b1 // g, b2 // g
    tr, tc = np.meshgrid(np.arange(fr), np.arange(fc), indexing="ij")
    rows = (ci[:, None] * fr + tr.ravel()[None, :]).ravel()
    cols = (cj[:, None] * fc + tc.ravel()[None, :]).ravel()
    return BlockMask(mask.rows, mask.cols, g, rows, cols)


def _scale_axis(idx, old, new, axis_name):
    if new % old == 0:
        f = new // old
        return (idx[:, None] * f + np.arange(f)[None, :]), f
    if old % new == 0:
        return (idx // (old // new))[:, None], 1
    raise MaskError(f"{axis_name}: {old} -> {new} blocks is not an integer scaling")


def stretch_mask(mask, new_rows, new_cols):
    """Rescale a mask to ``new_rows x new_cols`` keeping its block size.

    Each axis must scale by an integer factor or an integer divisor; a block
    maps to the rectangle of blocks it covers after scaling.
    """
    b = mask.block
    if new_rows % b or new_cols % b:
        raise MaskError(f"block {b} does not divide {new_rows}x{new_cols}")
    ri, fr = _scale_axis(mask.block_rows, mask.n_block_rows, new_rows // b, "rows")
    ci, fc = _scale_axis(mask.block_cols, mask.n_block_cols, new_cols // b, "cols")
    rows = np.repeat(ri, ci.shape[1], axis=1).ravel()
    cols = np.tile(ci, (1, ri.shape[1])).ravel()
    return BlockMask(new_rows, new_cols, b, rows, cols)


def union_masks(a, b):
    if not a.same_shape(b):
        raise MaskError(
            f"cannot union {a.rows}x{a.cols}/b{a.block} with {b.rows}x{b.cols}/b{b.block}"
        )
    return BlockMask(
        a.rows,
        a.cols,
        a.block,
        np.concatenate([a.block_rows, b.block_rows]),
        np.concatenate([a.block_cols, b.block_cols]),
    )
