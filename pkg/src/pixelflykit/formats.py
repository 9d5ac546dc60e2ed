"""File formats: PXBF masks, PXBF block-sparse matrices, Matrix Market, CSV.

PXBF v1 is ASCII::

    PXBF 1
    <rows> <cols> <block>
    <nnz_blocks>
    <block_row> <block_col>        (nnz_blocks lines, row-major order)

A block-sparse matrix appends one line per block holding its ``b*b`` values
row-major. Values are written with ``repr`` so they round-trip exactly.
"""
import csv
import io

import numpy as np
import scipy.io

from .errors import FormatError
from .patterns import BlockMask
from .sparse import BlockSparseMatrix

__all__ = [
    "format_mask",
    "parse_mask",
    "write_mask",
    "read_mask",
    "format_block_sparse",
    "parse_block_sparse",
    "write_block_sparse",
    "read_block_sparse",
    "write_matrix_market",
    "read_matrix_market",
    "write_csv",
]

MAGIC = "PXBF 1"


def format_mask(mask):
    lines = [MAGIC, f"{mask.rows} {mask.cols} {mask.block}", str(mask.nnz_blocks)]
    lines.extend(f"{i} {j}" for i, j in zip(mask.block_rows.tolist(), mask.block_cols.tolist()))
    return "\n".join(lines) + "\n"


def _ints(line, n, what):
    parts = line.split()
    if len(parts) != n:
        raise FormatError(f"{what}: expected {n} integers, got {line!r}")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise FormatError(f"{what}: non-integer field in {line!r}") from None


def _parse_header(lines):
    if not lines or lines[0].strip() != MAGIC:
        raise FormatError(f"missing {MAGIC!r} header")
    if len(lines) < 3:
        raise FormatError("truncated PXBF header")
    rows, cols, block = _ints(lines[1], 3, "dimensions")
    (nnz,) = _ints(lines[2], 1, "block count")
    if nnz < 0 or len(lines) < 3 + nnz:
        raise FormatError(f"expected {nnz} block lines, file has {max(len(lines) - 3, 0)}")
    pairs = [_ints(lines[3 + k], 2, f"block {k}") for k in range(nnz)]
    keys = [(i, j) for i, j in pairs]
    if keys != sorted(set(keys)):
        raise FormatError("block coordinates are not in strictly increasing row-major order")
    mask = BlockMask.from_pairs(rows, cols, block, pairs)
    return mask, lines[3 + nnz :]


def parse_mask(text):
    lines = text.splitlines()
    mask, rest = _parse_header(lines)
    if any(line.strip() for line in rest):
        raise FormatError("trailing content after mask blocks")
    return mask


def write_mask(path, mask):
    with open(path, "w", newline="\n") as fh:
        fh.write(format_mask(mask))


def read_mask(path):
    with open(path) as fh:
        return parse_mask(fh.read())


def format_block_sparse(a):
    body = [" ".join(repr(v) for v in blk.ravel().tolist()) for blk in a.values]
    return format_mask(a.mask) + "".join(line + "\n" for line in body)


def parse_block_sparse(text):
    mask, rest = _parse_header(text.splitlines())
    rest = [line for line in rest if line.strip()]
    if len(rest) != mask.nnz_blocks:
        raise FormatError(f"expected {mask.nnz_blocks} value lines, got {len(rest)}")
    b = mask.block
    values = np.empty((mask.nnz_blocks, b, b))
    for k, line in enumerate(rest):
        parts = line.split()
        if len(parts) != b * b:
            raise FormatError(f"value line {k}: expected {b * b} values, got {len(parts)}")
        values[k] = np.array([float(p) for p in parts]).reshape(b, b)
    return BlockSparseMatrix(mask, values)


def write_block_sparse(path, a):
    with open(path, "w", newline="\n") as fh:
        fh.write(format_block_sparse(a))


def read_block_sparse(path):
    with open(path) as fh:
        return parse_block_sparse(fh.read())


def write_matrix_market(path, m, comment=""):
    """Dense ``array real general`` Matrix Market file."""
    scipy.io.mmwrite(path, np.asarray(m, dtype=np.float64), comment=comment, field="real", precision=17)


def read_matrix_market(path):
    m = scipy.io.mmread(path)
    if hasattr(m, "toarray"):
        m = m.toarray()
    return np.asarray(m, dtype=np.float64)


def write_csv(path_or_file, header, rows):
    """Write rows under ``header``; ``path_or_file`` may be ``None`` to return a string."""
    if path_or_file is None:
        buf = io.StringIO()
        _write_rows(buf, header, rows)
        return buf.getvalue()
    if hasattr(path_or_file, "write"):
        _write_rows(path_or_file, header, rows)
        return None
    with open(path_or_file, "w", newline="") as fh:
        _write_rows(fh, header, rows)
    return None


def _write_rows(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v
