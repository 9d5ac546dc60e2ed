"""Hardware-aware block-sparse masks from flat block butterflies and low-rank terms.

The hot loops (block-sparse products and masked gradients) run in a compiled
extension when it is available and in NumPy otherwise; see ``BACKEND``.
"""
from ._backend import BACKEND, available_backends
from .errors import BudgetError, DivergenceError, FormatError, InfeasibleError, MaskError, PixelflyError
from .patterns import (
    BlockMask,
    FlatButterflyParams,
    PatternSpec,
    block_cover,
    butterfly_factor_support,
    flat_butterfly_mask,
    generate_pattern,
    is_block_aligned,
    stretch_mask,
    union_masks,
)
from .sparse import BlockSparseMatrix, LowRankPair, SparseLowRank, slr_apply, spmm, spmm_transpose, to_dense

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "available_backends",
    "PixelflyError",
    "MaskError",
    "BudgetError",
    "InfeasibleError",
    "DivergenceError",
    "FormatError",
    "BlockMask",
    "FlatButterflyParams",
    "PatternSpec",
    "block_cover",
    "butterfly_factor_support",
    "flat_butterfly_mask",
    "generate_pattern",
    "is_block_aligned",
    "stretch_mask",
    "union_masks",
    "BlockSparseMatrix",
    "LowRankPair",
    "SparseLowRank",
    "slr_apply",
    "spmm",
    "spmm_transpose",
    "to_dense",
]
