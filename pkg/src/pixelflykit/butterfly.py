"""Dense realisations of block butterfly products and their flat approximation.

A chain on ``n_blocks`` blocks of size ``b`` holds one factor per stride
``n_blocks, n_blocks/2, ..., 2`` (in that order), each supported on
:func:`~pixelflykit.patterns.butterfly_factor_support`. Everything here
materialises densely; it is meant for verification at desk scale.
"""
from dataclasses import dataclass
from math import log2, sqrt

import numpy as np

from .errors import PixelflyError
from .patterns import butterfly_factor_support, is_power_of_two
from .sparse import BlockSparseMatrix

__all__ = [
    "ButterflyFactorChain",
    "random_chain",
    "identity_chain",
    "chain_from_dense",
    "materialize_product",
    "residual_product",
    "flat_first_order",
    "flat_approx_error",
    "approx_lambda",
    "lift_block_size",
    "numerical_rank",
]


def _strides(n_blocks):
    s, out = n_blocks, []
    while s >= 2:
        out.append(s)
        s //= 2
    return out


@dataclass(frozen=True, eq=False)
class ButterflyFactorChain:
    n_blocks: int
    block: int
    factors: tuple

    def __post_init__(self):
        if not is_power_of_two(self.n_blocks) or self.n_blocks < 2:
            raise PixelflyError(f"n_blocks must be a power of 2 >= 2, got {self.n_blocks}")
        factors = tuple(self.factors)
        strides = _strides(self.n_blocks)
        if len(factors) != len(strides):
            raise PixelflyError(f"expected {len(strides)} factors, got {len(factors)}")
        for f, k in zip(factors, strides):
            if f.mask != butterfly_factor_support(self.n_blocks, k, self.block):
                raise PixelflyError(f"factor for stride {k} is not on the butterfly support")
        object.__setattr__(self, "factors", factors)

    @property
    def size(self):
        return self.n_blocks * self.block

    @property
    def strides(self):
        return _strides(self.n_blocks)

    @property
    def b_max(self):
        """Largest factor Frobenius norm."""
        return max(f.frobenius_norm() for f in self.factors)

    def dense_factors(self):
        return [f.to_dense() for f in self.factors]

    def scaled(self, alpha):
        return ButterflyFactorChain(self.n_blocks, self.block, [f.scaled(alpha) for f in self.factors])


def random_chain(n_blocks, block=1, rng=None, b_max=None):
    """Chain with i.i.d. standard normal values on every support.

    If ``b_max`` is given, all factors are rescaled by one common factor so the
    largest factor Frobenius norm equals ``b_max``.
    """
    rng = np.random.default_rng(rng)
    factors = [
        BlockSparseMatrix.random(butterfly_factor_support(n_blocks, k, block), rng)
        for k in _strides(n_blocks)
    ]
    chain = ButterflyFactorChain(n_blocks, block, factors)
    if b_max is not None:
        chain = chain.scaled(b_max / chain.b_max)
    return chain


def identity_chain(n_blocks, block=1):
    factors = []
    for k in _strides(n_blocks):
        support = butterfly_factor_support(n_blocks, k, block)
        factors.append(BlockSparseMatrix.from_dense(np.eye(support.rows), support))
    return ButterflyFactorChain(n_blocks, block, factors)


def chain_from_dense(n_blocks, block, dense_factors):
    """Build a chain from dense factors, rejecting any value off the support."""
    factors = []
    for k, d in zip(_strides(n_blocks), dense_factors):
        support = butterfly_factor_support(n_blocks, k, block)
        d = np.asarray(d, dtype=np.float64)
        if np.any(d[~support.to_dense()] != 0.0):
            raise PixelflyError(f"dense factor for stride {k} has entries off the butterfly support")
        factors.append(BlockSparseMatrix.from_dense(d, support))
    return ButterflyFactorChain(n_blocks, block, factors)


def materialize_product(chain):
    """Dense ``B_n B_{n/2} ... B_2``."""
    out = np.eye(chain.size)
    for f in chain.dense_factors():
        out = out @ f
    return out


def residual_product(chain, lam):
    """Dense ``(I + lam B_n)(I + lam B_{n/2}) ... (I + lam B_2)``."""
    eye = np.eye(chain.size)
    out = eye.copy()
    for f in chain.dense_factors():
        out = out @ (eye + lam * f)
    return out


def flat_first_order(chain, lam):
    """Dense ``I + lam (B_2 + B_4 + ... + B_n)``."""
    out = np.eye(chain.size)
    for f in chain.dense_factors():
        out += lam * f
    return out


def flat_approx_error(chain, lam):
    """Frobenius distance between the residual product and its flat first-order form."""
    return float(np.linalg.norm(residual_product(chain, lam) - flat_first_order(chain, lam)))


def approx_lambda(n_blocks, b_max, eps, c=0.5):
    """Largest ``lam`` for which the flat form is guaranteed within ``eps``.

    ``c * sqrt(eps) / (log2(n_blocks) * b_max)``; ``log2(n_blocks)`` is the
    number of factors.
    """
    if not 0 < c <= 0.5:
        raise PixelflyError(f"c must lie in (0, 1/2], got {c}")
    return c * sqrt(eps) / (log2(n_blocks) * b_max)


def lift_block_size(chain):
    """Rewrite a chain at block size ``2b`` on ``n_blocks/2`` blocks.

    The two rightmost factors (strides 4 and 2) multiply into a single stride-2
    factor of block ``2b``; every other stride-``k`` factor is already a
    stride-``k/2`` factor at block ``2b``. The dense product is unchanged.
    """
    if chain.n_blocks < 4:
        raise PixelflyError("lifting needs at least two factors (n_blocks >= 4)")
    dense = chain.dense_factors()
    merged = dense[-2] @ dense[-1]
    return chain_from_dense(chain.n_blocks // 2, 2 * chain.block, dense[:-2] + [merged])


def numerical_rank(m, rel_tol=1e-8):
    """Count singular values above ``rel_tol`` times the largest one."""
    if not 0 < rel_tol < 1:
        raise PixelflyError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    s = np.linalg.svd(np.asarray(m, dtype=np.float64), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))
