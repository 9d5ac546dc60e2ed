"""Sparse mask regression under the l1 norm.

Given ``a`` (or ``A``) and ``B``, choose a binary mask ``w`` with ``k`` ones so
that ``(a * w) @ B`` stays as close as possible to ``a @ B`` in l1. With
nonnegative inputs the residual is the l1 mass of the dropped rows of
``a[:, None] * B``, so keeping the ``k`` heaviest rows is optimal.
"""
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import PixelflyError

__all__ = [
    "MaskRegressionInstance",
    "row_residual",
    "solve_row_l1",
    "solve_matrix_l1",
    "matrix_residual",
    "brute_force_mask",
    "brute_force_matrix",
    "backward_mask",
    "backward_residual",
    "BRUTE_FORCE_MAX_D",
]

BRUTE_FORCE_MAX_D = 12


@dataclass(frozen=True)
class MaskRegressionInstance:
    """``A`` is ``m x d`` (a single row is promoted), ``B`` is ``d x n``, ``k`` ones per row."""

    A: np.ndarray
    B: np.ndarray
    k: int

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        B = np.asarray(self.B, dtype=np.float64)
        if B.ndim != 2 or A.shape[1] != B.shape[0]:
            raise PixelflyError(f"incompatible shapes A {A.shape}, B {B.shape}")
        _check_k(self.k, A.shape[1])
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def nonnegative(self):
        return bool((self.A >= 0).all() and (self.B >= 0).all())

    def solve(self):
        return solve_matrix_l1(self.A, self.B, self.k)


def _check_k(k, d):
    if int(k) != k or not 1 <= k <= d:
        raise PixelflyError(f"k must be an integer in [1, {d}], got {k}")


def _row_inputs(a, B, k):
    a = np.asarray(a, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if a.ndim != 1 or B.ndim != 2 or B.shape[0] != a.shape[0]:
        raise PixelflyError(f"incompatible shapes a {a.shape}, B {B.shape}")
    _check_k(k, a.shape[0])
    return a, B


def row_residual(a, B, w):
    """``|| a @ B - (a * w) @ B ||_1``."""
    a = np.asarray(a, dtype=np.float64)
    return float(np.abs(a @ B - (a * w) @ B).sum())


def solve_row_l1(a, B, k):
    """Keep the ``k`` rows of ``a[:, None] * B`` with the largest sums (lower index wins ties)."""
    a, B = _row_inputs(a, B, k)
    if (a < 0).any() or (B < 0).any():
        raise PixelflyError("solve_row_l1 needs nonnegative a and B")
    sums = a * B.sum(axis=1)
    # stable sort on -sums keeps lower indices first among equal sums
    keep = np.argsort(-sums, kind="stable")[:k]
    w = np.zeros(a.shape[0], dtype=np.int8)
    w[keep] = 1
    return w


def solve_matrix_l1(A, B, k):
    """Row-by-row :func:`solve_row_l1`; returns an ``m x d`` mask."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    return np.stack([solve_row_l1(row, B, k) for row in A])


def matrix_residual(A, B, M):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    return float(np.abs(A @ B - (A * M) @ B).sum())


def brute_force_mask(a, B, k):
    """Exhaustive minimiser over all ``C(d, k)`` masks; any signs allowed.

    Among equal residuals the lexicographically first index set wins.
    """
    a, B = _row_inputs(a, B, k)
    d = a.shape[0]
    if d > BRUTE_FORCE_MAX_D:
        raise PixelflyError(f"brute force limited to d <= {BRUTE_FORCE_MAX_D}, got {d}")
    best, best_w = np.inf, None
    for keep in combinations(range(d), k):
        w = np.zeros(d, dtype=np.int8)
        w[list(keep)] = 1
        r = row_residual(a, B, w)
        if r < best:
            best, best_w = r, w
    return best_w


def brute_force_matrix(A, B, k):
    """Exhaustive search over every row independently (the objective splits by row)."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    return np.stack([brute_force_mask(row, B, k) for row in A])


def _top_blocks(G, k, block):
    m, d = G.shape
    if d % block or k % block:
        raise PixelflyError(f"block {block} must divide d={d} and k={k}")
    mass = np.abs(G).reshape(m, d // block, block).sum(axis=2)
    keep = np.argsort(-mass, axis=1, kind="stable")[:, : k // block]
    M = np.zeros((m, d // block), dtype=np.int8)
    np.put_along_axis(M, keep, 1, axis=1)
    return np.repeat(M, block, axis=1)


def backward_mask(C, B, k, block=1):
    """Mask on ``G = C @ B.T`` keeping the ``k`` largest ``|G|`` entries in each row.

    The residual ``||G - G * M||_1`` is the sum of dropped ``|G|`` entries, so
    per-row top-``k`` is exact. With ``block > 1`` each row keeps the
    ``k / block`` aligned ``(1, block)`` segments of largest l1 mass.
    Lower column index wins ties.
    """
    C = np.asarray(C, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if C.ndim != 2 or B.ndim != 2 or C.shape[1] != B.shape[1]:
        raise PixelflyError(f"incompatible shapes C {C.shape}, B {B.shape}")
    G = C @ B.T
    _check_k(k, G.shape[1])
    if block > 1:
        return _top_blocks(G, k, block)
    keep = np.argsort(-np.abs(G), axis=1, kind="stable")[:, :k]
    M = np.zeros(G.shape, dtype=np.int8)
    np.put_along_axis(M, keep, 1, axis=1)
    return M


def backward_residual(C, B, M):
    G = np.asarray(C, dtype=np.float64) @ np.asarray(B, dtype=np.float64).T
    return float(np.abs(G - G * M).sum())
