"""Clustered-attention experiment: flat butterfly + low rank against either part alone.

Queries are drawn around ``C`` cluster centres; the attention matrix is the
entrywise ``exp(beta * Q Q^T)``. It is close to block diagonal plus a smooth
background, which a sparse + low-rank weight captures better than a sparse or
a low-rank matrix with the same number of parameters.
"""
from dataclasses import dataclass
from math import log

import numpy as np

from .errors import InfeasibleError, PixelflyError
from .patterns import FlatButterflyParams, flat_butterfly_mask, is_power_of_two

__all__ = [
    "ClusterProcess",
    "ApproxErrors",
    "generate_clustered",
    "attention_matrix",
    "lowrank_error",
    "keep_largest_error",
    "support_lowrank_error",
    "best_approximations",
    "run_experiment",
    "EXPRESSIVENESS_CSV_HEADER",
    "MAX_EXPONENT",
]

EXPRESSIVENESS_CSV_HEADER = (
    "seed", "n", "C", "b", "d", "delta", "beta", "err_slr", "err_sparse", "err_lowrank",
)
MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class ClusterProcess:
    """``C`` clusters of ``b`` rows each in ``d`` dimensions; ``beta=None`` means ``ln n``.

    Centres have i.i.d. entries with standard deviation ``1/sqrt(d)``, offsets
    ``delta/sqrt(d)``, so rows have squared norm about ``1 + delta^2``.
    """

    n: int
    C: int
    b: int
    d: int
    delta: float = 0.15
    beta: float = None
    seed: int = 0

    def __post_init__(self):
        if self.C < 1 or self.b < 1 or self.n != self.C * self.b:
            raise PixelflyError(f"need n = C * b with C, b >= 1, got n={self.n}, C={self.C}, b={self.b}")
        if self.d < 1:
            raise PixelflyError(f"d must be >= 1, got {self.d}")
        if self.delta < 0:
            raise PixelflyError(f"delta must be >= 0, got {self.delta}")
        if self.beta is None:
            object.__setattr__(self, "beta", log(self.n) if self.n > 1 else 1.0)
        if self.beta <= 0:
            raise PixelflyError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class ApproxErrors:
    slr: float
    sparse_only: float
    lowrank_only: float
    budget: int
    sparse_count: int
    lowrank_rank: int

    @property
    def slr_wins(self):
        return self.slr < min(self.sparse_only, self.lowrank_only)


def generate_clustered(proc):
    """``n x d`` queries, rows grouped by cluster; deterministic per ``proc.seed``."""
    rng = np.random.default_rng(proc.seed)
    scale = 1.0 / np.sqrt(proc.d)
    centers = scale * rng.standard_normal((proc.C, proc.d))
    offsets = proc.delta * scale * rng.standard_normal((proc.n, proc.d))
    return np.repeat(centers, proc.b, axis=0) + offsets


def attention_matrix(Q, beta):
    """Entrywise ``exp(beta * Q Q^T)``; refuses exponents above :data:`MAX_EXPONENT`."""
    Q = np.asarray(Q, dtype=np.float64)
    A = Q @ Q.T
    A = 0.5 * (A + A.T)
    top = beta * np.abs(A).max() if A.size else 0.0
    if top > MAX_EXPONENT:
        raise PixelflyError(f"beta * max|QQ^T| = {top:.1f} exceeds {MAX_EXPONENT}; exp would overflow")
    return np.exp(beta * A)


def _tail_norm(sq_values, keep):
    """sqrt of the sum of all but the ``keep`` largest entries of ``sq_values``."""
    sq = np.sort(np.ravel(sq_values))
    drop = max(sq.size - keep, 0)
    return float(np.sqrt(sq[:drop].sum()))


def lowrank_error(M, rank):
    """Frobenius error of the best rank-``rank`` approximation (truncated SVD)."""
    if rank < 0:
        raise PixelflyError(f"rank must be >= 0, got {rank}")
    s = np.linalg.svd(np.asarray(M, dtype=np.float64), compute_uv=False)
    return float(np.sqrt((s[rank:] ** 2).sum()))


def keep_largest_error(M, count):
    """Frobenius error after keeping the ``count`` largest-magnitude entries."""
    if count < 0:
        raise PixelflyError(f"count must be >= 0, got {count}")
    return _tail_norm(np.asarray(M, dtype=np.float64) ** 2, count)


def support_lowrank_error(M, support, rank):
    """Error of ``M`` on ``support`` plus the best rank-``rank`` fit of what remains."""
    M = np.asarray(M, dtype=np.float64)
    residual = np.where(support, 0.0, M)
    return lowrank_error(residual, rank)


def best_approximations(M, block, rank, max_stride=2):
    """Errors of three approximants with the same parameter count.

    The sparse + low-rank approximant keeps ``M`` on a flat block butterfly
    (``block``, ``max_stride``) and fits the residual with rank ``rank``. Its
    budget ``P = nnz + 2 n rank`` then buys the ``P`` largest entries for the
    sparse-only approximant and rank ``P // (2 n)`` for the low-rank one.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    if M.shape != (n, n):
        raise PixelflyError(f"expected a square matrix, got {M.shape}")
    if block < 1 or n % block or not is_power_of_two(n // block) or n // block < 2:
        raise PixelflyError(f"n/block must be a power of 2 >= 2, got n={n}, block={block}")
    if not 0 <= rank <= n:
        raise InfeasibleError(f"rank {rank} outside [0, {n}]")
    support = flat_butterfly_mask(FlatButterflyParams(n // block, block, max_stride)).to_dense()
    sparse_count = int(support.sum())
    budget = sparse_count + 2 * n * rank
    if budget > n * n:
        raise InfeasibleError(f"budget {budget} exceeds the {n * n} entries of M")
    lr_rank = min(budget // (2 * n), n)
    return ApproxErrors(
        slr=support_lowrank_error(M, support, rank),
        sparse_only=keep_largest_error(M, budget),
        lowrank_only=lowrank_error(M, lr_rank),
        budget=budget,
        sparse_count=sparse_count,
        lowrank_rank=lr_rank,
    )


def run_experiment(n=256, C=32, b=8, d=32, delta=0.15, beta=None, seeds=range(20), rank=16, max_stride=2):
    """One CSV row per seed under :data:`EXPRESSIVENESS_CSV_HEADER`, plus the error triples.

    The butterfly block equals the cluster size ``b``.
    """
    rows, results = [], []
    for s in seeds:
        proc = ClusterProcess(n, C, b, d, delta, beta, s)
        M = attention_matrix(generate_clustered(proc), proc.beta)
        res = best_approximations(M, b, rank, max_stride)
        results.append(res)
        rows.append((s, n, C, b, d, delta, proc.beta, res.slr, res.sparse_only, res.lowrank_only))
    return rows, results
