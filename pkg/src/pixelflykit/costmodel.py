"""Block-device cost model: coalesced memory accesses, flops, and actual density.

A device reads memory in contiguous runs of ``hw_block`` elements, so the
memory cost of a sparse operand is the number of nonzero cells of its
``(1, hw_block)`` cover, and the fraction of a matrix the device must touch is
the density of its ``(hw_block, hw_block)`` cover.
"""
import time
from dataclasses import dataclass
from math import ceil, log2

import numpy as np

from . import _backend
from .errors import PixelflyError
from .patterns import BlockMask, PatternSpec, cover_cell_count, generate_pattern, is_power_of_two
from .sparse import BlockSparseMatrix

__all__ = [
    "HardwareProfile",
    "CostReport",
    "BenchResult",
    "block_mem_count",
    "total_cost",
    "actual_density",
    "analytic_random_actual_density",
    "random_subblock_mask",
    "monte_carlo_actual_density",
    "bench_spmm",
    "product_op_count",
    "flat_op_count",
    "COST_CSV_HEADER",
    "cost_csv_row",
]

COST_CSV_HEADER = (
    "pattern",
    "block",
    "expected_density",
    "actual_density",
    "n_blockmem",
    "n_flop",
    "predicted_total",
    "measured_ms_mean",
    "measured_ms_std",
)


@dataclass(frozen=True)
class HardwareProfile:
    """Device block size in elements and the unit costs of one block access and one flop."""

    hw_block: int = 32
    cost_mem: float = 1.0
    cost_flop: float = 0.01

    def __post_init__(self):
        if int(self.hw_block) != self.hw_block or self.hw_block < 1:
            raise PixelflyError(f"hw_block must be a positive integer, got {self.hw_block}")
        if self.cost_mem < 0 or self.cost_flop < 0:
            raise PixelflyError("costs must be non-negative")


@dataclass(frozen=True)
class CostReport:
    n_blockmem: int
    n_flop: int
    total: float
    expected_density: float
    actual_density: float


@dataclass(frozen=True)
class BenchResult:
    mean_ms: float
    std_ms: float
    samples_ms: tuple
    predicted_total: float


def _check_divides(mask, hw_block, rows_too):
    if mask.cols % hw_block or (rows_too and mask.rows % hw_block):
        dims = f"{mask.rows}x{mask.cols}" if rows_too else f"{mask.cols} columns"
        raise PixelflyError(f"hw_block {hw_block} does not divide {dims}")


def block_mem_count(mask, hw):
    """Nonzero cells of the ``(1, hw_block)`` element-level cover of ``mask``."""
    _check_divides(mask, hw.hw_block, rows_too=False)
    return cover_cell_count(mask, 1, hw.hw_block)


def actual_density(mask, hw_block):
    """Density of the ``(hw_block, hw_block)`` cover: the fraction of entries the device touches."""
    _check_divides(mask, hw_block, rows_too=True)
    cells = cover_cell_count(mask, hw_block, hw_block)
    return cells * hw_block * hw_block / (mask.rows * mask.cols)


def total_cost(mask, batch, hw):
    """Cost of ``A @ X`` with ``A`` on ``mask`` and a dense ``X`` of ``batch`` columns.

    Block accesses are the sparse operand's ``(1, b)`` cover, then for every
    such cover cell its ``b`` dense rows each read in ``ceil(batch/b)``
    segments, then the output written in ``ceil(batch/b)`` segments per row.
    No caching is modelled. The output write is counted even for an empty
    mask.
    """
    if batch < 1:
        raise PixelflyError(f"batch must be >= 1, got {batch}")
    b = hw.hw_block
    segs = ceil(batch / b)
    sparse_reads = block_mem_count(mask, hw)
    dense_reads = sparse_reads * b * segs
    writes = mask.rows * segs
    n_blockmem = sparse_reads + dense_reads + writes
    n_flop = 2 * mask.nnz * batch
    total = hw.cost_mem * n_blockmem + hw.cost_flop * n_flop
    dens = actual_density(mask, b) if mask.rows % b == 0 else float("nan")
    return CostReport(n_blockmem, n_flop, float(total), mask.density, dens)


def analytic_random_actual_density(p, sub_block, hw_block):
    """Chance that a hardware block is touched when its sub-blocks are i.i.d. Bernoulli(p)."""
    if not 0.0 <= p <= 1.0:
        raise PixelflyError(f"p must lie in [0, 1], got {p}")
    if sub_block < 1 or hw_block % sub_block:
        raise PixelflyError(f"sub_block {sub_block} does not divide hw_block {hw_block}")
    per_block = (hw_block // sub_block) ** 2
    return 1.0 - (1.0 - p) ** per_block


def random_subblock_mask(size, sub_block, p, seed):
    """``size x size`` mask of aligned ``sub_block`` tiles, each present with probability ``p``."""
    return generate_pattern(PatternSpec("random", size, size, sub_block, density=p, seed=seed))


def monte_carlo_actual_density(p, sub_block, hw_block, size=4096, seeds=range(20)):
    """Actual density of :func:`random_subblock_mask` for each seed."""
    return np.array(
        [actual_density(random_subblock_mask(size, sub_block, p, s), hw_block) for s in seeds]
    )


def bench_spmm(mask, batch, repeats=100, hw=None, backend=None, seed=0):
    """Time ``A @ X`` on ``mask`` with random values, single-threaded.

    Returns per-run milliseconds (mean, population std) together with the
    cost model's predicted total for ``hw``.
    """
    if repeats < 1:
        raise PixelflyError(f"repeats must be >= 1, got {repeats}")
    hw = hw or HardwareProfile()
    rng = np.random.default_rng(seed)
    a = BlockSparseMatrix.random(mask, rng)
    x = np.ascontiguousarray(rng.standard_normal((mask.cols, batch)))
    out = np.zeros((mask.rows, batch))
    k = _backend.get_kernels(backend)
    indptr, indices, values = a.mask.indptr, a.mask.block_cols, a.values
    k.bsr_spmm(indptr, indices, values, x, out, 1)  # warm-up
    samples = []
    for _ in range(repeats):
        out.fill(0.0)
        t0 = time.perf_counter()
        k.bsr_spmm(indptr, indices, values, x, out, 1)
        samples.append((time.perf_counter() - t0) * 1e3)
    s = np.array(samples)
    return BenchResult(float(s.mean()), float(s.std()), tuple(samples), total_cost(mask, batch, hw).total)


def _check_butterfly_args(n_blocks, max_stride):
    if not (is_power_of_two(n_blocks) and is_power_of_two(max_stride) and 2 <= max_stride <= n_blocks):
        raise PixelflyError(f"need powers of 2 with 2 <= max_stride <= n_blocks, got {max_stride}, {n_blocks}")


def product_op_count(n_blocks, block, max_stride, batch):
    """Flops to apply ``log2(max_stride)`` butterfly factors in sequence (2 blocks per block row each)."""
    _check_butterfly_args(n_blocks, max_stride)
    return int(log2(max_stride)) * 2 * n_blocks * block * block * 2 * batch


def flat_op_count(n_blocks, block, max_stride, batch):
    """Flops to apply the flat butterfly as one block-sparse matrix."""
    _check_butterfly_args(n_blocks, max_stride)
    return n_blocks * (1 + int(log2(max_stride))) * block * block * 2 * batch


def cost_csv_row(pattern, mask, batch, hw, bench=None):
    """One row under :data:`COST_CSV_HEADER`; timing columns are blank without ``bench``."""
    rep = total_cost(mask, batch, hw)
    return (
        pattern,
        mask.block,
        rep.expected_density,
        rep.actual_density,
        rep.n_blockmem,
        rep.n_flop,
        rep.total,
        "" if bench is None else bench.mean_ms,
        "" if bench is None else bench.std_ms,
    )
