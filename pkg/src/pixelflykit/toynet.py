"""Two-layer masked ReLU network, its exact gradient, dropout loss and NTK tools.

``f(x) = (1/sqrt(m)) * sum_r a_r * relu(((M * W)[:, r]) @ x)`` with ``W`` of
shape ``d x m``, a fixed sign vector ``a`` and a binary mask ``M``. The
training objective is ``L = 0.5 * ||u - y||^2`` over the dataset. The ReLU
derivative is the indicator ``z >= 0``.
"""
from dataclasses import dataclass, replace

import numpy as np

from . import _backend
from .errors import DivergenceError, InfeasibleError, PixelflyError
from .patterns import (
    BlockMask,
    FlatButterflyParams,
    PatternSpec,
    flat_butterfly_mask,
    generate_pattern,
    stretch_mask,
)

__all__ = [
    "TwoLayerNet",
    "Dataset",
    "NetTemplate",
    "Trajectory",
    "SearchResult",
    "random_column_mask",
    "random_net",
    "unit_norm_dataset",
    "forward",
    "loss",
    "grad",
    "finite_diff_grad",
    "kink_margin",
    "train_gd",
    "gram_matrix",
    "empirical_ntk",
    "ntk_distance",
    "dropout_loss",
    "dropout_loss_mc",
    "mask_compute",
    "search_masks",
    "candidate_masks",
    "unit_columns",
    "TRAJECTORY_CSV_HEADER",
    "NTK_CSV_HEADER",
]

TRAJECTORY_CSV_HEADER = ("step", "loss", "max_weight_movement")
NTK_CSV_HEADER = ("candidate", "compute", "distance_mean", "distance_std")


@dataclass(frozen=True, eq=False)
class TwoLayerNet:
    W: np.ndarray
    a: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        W = np.ascontiguousarray(self.W, dtype=np.float64)
        a = np.asarray(self.a, dtype=np.float64)
        M = np.asarray(self.M)
        if W.ndim != 2 or a.shape != (W.shape[1],) or M.shape != W.shape:
            raise PixelflyError(f"inconsistent shapes W {W.shape}, a {a.shape}, M {M.shape}")
        if not np.all(np.abs(a) == 1.0):
            raise PixelflyError("output weights a must be +1 or -1")
        if not np.isin(M, (0, 1)).all():
            raise PixelflyError("mask must be binary")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "M", M.astype(bool))

    @property
    def d(self):
        return self.W.shape[0]

    @property
    def m(self):
        return self.W.shape[1]

    @property
    def masked_weights(self):
        return np.where(self.M, self.W, 0.0)

    def with_weights(self, W):
        return replace(self, W=W)

    def with_mask(self, M):
        return replace(self, M=M)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Inputs as columns of a ``d x n`` matrix, targets as an ``n``-vector."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.float64)
        if X.ndim != 2 or Y.shape != (X.shape[1],):
            raise PixelflyError(f"inconsistent dataset shapes X {X.shape}, Y {Y.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class NetTemplate:
    """Shape of nets drawn during mask search: ``W ~ N(0, 1)``, ``a`` uniform signs."""

    d: int
    m: int

    def sample(self, seed, mask=None):
        return random_net(self.d, self.m, mask=mask, rng=seed)


@dataclass(frozen=True)
class Trajectory:
    steps: np.ndarray
    loss: np.ndarray
    max_weight_movement: np.ndarray
    final: TwoLayerNet

    def rows(self):
        return list(zip(self.steps.tolist(), self.loss.tolist(), self.max_weight_movement.tolist()))


@dataclass(frozen=True)
class SearchResult:
    best_index: int
    best_name: str
    best_mask: BlockMask
    best_distance: float
    table: tuple  # (name, compute, distance_mean, distance_std, feasible) per candidate

    def csv_rows(self):
        return [(n, c, dm, ds) for n, c, dm, ds, ok in self.table if ok]


def random_column_mask(d, m, k, rng=None):
    """``d x m`` mask with exactly ``k`` ones in every column."""
    if not 0 <= k <= d:
        raise PixelflyError(f"k must lie in [0, {d}], got {k}")
    rng = np.random.default_rng(rng)
    keys = rng.random((d, m))
    rank = np.argsort(keys, axis=0, kind="stable")[:k]
    M = np.zeros((d, m), dtype=bool)
    np.put_along_axis(M, rank, True, axis=0)
    return M


def random_net(d, m, k=None, mask=None, rng=None):
    """``W ~ N(0, 1)``, ``a`` uniform on {-1, +1}; mask from ``mask`` or ``k`` per column (full if neither)."""
    rng = np.random.default_rng(rng)
    W = rng.standard_normal((d, m))
    a = rng.choice((-1.0, 1.0), size=m)
    if mask is None:
        mask = np.ones((d, m), dtype=bool) if k is None else random_column_mask(d, m, k, rng)
    elif isinstance(mask, BlockMask):
        mask = mask.to_dense()
    return TwoLayerNet(W, a, mask)


def unit_norm_dataset(d, n, rng=None):
    """Gaussian inputs scaled to unit norm, standard normal targets."""
    rng = np.random.default_rng(rng)
    X = rng.standard_normal((d, n))
    X /= np.linalg.norm(X, axis=0)
    return Dataset(X, rng.standard_normal(n))


def _inputs(net, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != net.d:
        raise PixelflyError(f"input dimension {X.shape[0]} != net dimension {net.d}")
    return X


def _preact(net, X):
    return net.masked_weights.T @ X  # m x n


def forward(net, X):
    X = _inputs(net, X)
    return net.a @ np.maximum(_preact(net, X), 0.0) / np.sqrt(net.m)


def loss(net, data):
    r = forward(net, data.X) - data.Y
    return 0.5 * float(r @ r)


def _output_grad(net, data):
    """``g[r, i] = (u_i - y_i) a_r 1{z_ri >= 0} / sqrt(m)``."""
    z = _preact(net, data.X)
    resid = net.a @ np.maximum(z, 0.0) / np.sqrt(net.m) - data.Y
    return np.ascontiguousarray((z >= 0.0) * net.a[:, None] * resid[None, :] / np.sqrt(net.m))


def grad(net, data, path="sparse", backend=None):
    """``dL/dW = (X g^T) * M``.

    ``path="sparse"`` evaluates only the masked entries through the kernel
    backend; ``path="dense"`` forms the full product by accumulating outer
    products in data order and then masks it. Both sum each entry over data
    points in the same order, so they agree bit for bit.
    """
    if data.X.shape[0] != net.d:
        raise PixelflyError(f"input dimension {data.X.shape[0]} != net dimension {net.d}")
    g = _output_grad(net, data)
    X = data.X
    if path == "dense":
        acc = np.zeros((net.d, net.m))
        for i in range(data.n):
            acc = acc + np.outer(X[:, i], g[:, i])
        return np.where(net.M, acc, 0.0)
    if path != "sparse":
        raise PixelflyError(f"unknown gradient path {path!r}")
    rows, cols = np.nonzero(net.M)
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    vals = np.empty(rows.size)
    _backend.get_kernels(backend).masked_outer_entries(X, g, rows, cols, vals, _backend.thread_count())
    out = np.zeros((net.d, net.m))
    out[rows, cols] = vals
    return out


def finite_diff_grad(net, data, step=1e-5):
    """Central differences of :func:`loss` at every masked entry; zero elsewhere."""
    if step <= 0:
        raise PixelflyError(f"step must be positive, got {step}")
    out = np.zeros((net.d, net.m))
    W = net.W.copy()
    for p, r in zip(*np.nonzero(net.M)):
        w0 = W[p, r]
        W[p, r] = w0 + step
        hi = loss(net.with_weights(W), data)
        W[p, r] = w0 - step
        lo = loss(net.with_weights(W), data)
        W[p, r] = w0
        out[p, r] = (hi - lo) / (2 * step)
    return out


def kink_margin(net, X):
    """Smallest ``|pre-activation|`` among units with a nonzero masked column."""
    z = _preact(net, _inputs(net, X))
    live = net.M.any(axis=0)
    return float(np.abs(z[live]).min()) if live.any() else np.inf


def train_gd(net, data, eta, steps, log_every=1, backend=None):
    """Full-batch gradient descent ``W <- W - eta * grad``; ``a`` stays fixed.

    Logs ``||u - y||^2`` and ``max_r ||w_r(t) - w_r(0)||`` at step 0, every
    ``log_every`` steps, and at the last step. Raises
    :class:`DivergenceError` carrying the partial trajectory when the loss
    stops being finite.
    """
    if eta < 0:
        raise PixelflyError(f"eta must be non-negative, got {eta}")
    if steps < 0 or log_every < 1:
        raise PixelflyError("steps must be >= 0 and log_every >= 1")
    W0 = net.masked_weights
    rec_t, rec_l, rec_m = [], [], []

    def record(t, cur):
        sq = 2.0 * loss(cur, data)
        move = float(np.linalg.norm(cur.masked_weights - W0, axis=0).max()) if cur.m else 0.0
        rec_t.append(t)
        rec_l.append(sq)
        rec_m.append(move)
        if not np.isfinite(sq):
            traj = Trajectory(np.array(rec_t), np.array(rec_l), np.array(rec_m), cur)
            raise DivergenceError(f"loss became {sq} at step {t}", trajectory=traj)

    cur = net
    record(0, cur)
    for t in range(1, steps + 1):
        cur = cur.with_weights(cur.W - eta * grad(cur, data, backend=backend))
        if t % log_every == 0 or t == steps:
            record(t, cur)
    return Trajectory(np.array(rec_t), np.array(rec_l), np.array(rec_m), cur)


def _features(net, X):
    """Per-sample gradients of ``f`` w.r.t. ``W``, flattened to ``n x (d*m)`` (zero off the mask)."""
    X = _inputs(net, X)
    act = (_preact(net, X) >= 0.0) * net.a[:, None]  # m x n
    F = X.T[:, :, None] * act.T[:, None, :] * net.M[None, :, :]
    return F.reshape(X.shape[1], -1) / np.sqrt(net.m)


def gram_matrix(net, X):
    """``G_ij = (1/m) sum_r 1{z_ri >= 0} 1{z_rj >= 0} (M_r * x_i) . (M_r * x_j)``."""
    X = _inputs(net, X)
    act = (_preact(net, X) >= 0.0).astype(np.float64)  # m x n
    Mf = net.M.astype(np.float64)
    G = np.zeros((X.shape[1], X.shape[1]))
    for r in range(net.m):
        xm = X * Mf[:, r][:, None]
        G += np.outer(act[r], act[r]) * (xm.T @ xm)
    return G / net.m


def empirical_ntk(net, X):
    """``K_ij = <df(x_i)/dtheta, df(x_j)/dtheta>`` over the masked weights."""
    F = _features(net, X)
    K = F @ F.T
    return 0.5 * (K + K.T)


def ntk_distance(K1, K2):
    """``||K1 - K2||_F / ||K2||_F`` with ``K2`` the reference kernel."""
    K1 = np.asarray(K1, dtype=np.float64)
    K2 = np.asarray(K2, dtype=np.float64)
    if K1.shape != K2.shape:
        raise PixelflyError(f"kernel shapes differ: {K1.shape} vs {K2.shape}")
    ref = np.linalg.norm(K2)
    if ref == 0:
        raise PixelflyError("reference kernel has zero norm")
    return float(np.linalg.norm(K1 - K2) / ref)


def _check_q(q):
    if not 0.0 < q <= 1.0:
        raise PixelflyError(f"keep probability q must lie in (0, 1], got {q}")


def dropout_loss(net, data, q, mode="closed", samples=100_000, seed=0):
    """Expected loss under unit dropout with keep probability ``q``.

    Each unit's activation is multiplied by ``sigma_r`` in {0, 1/q}. The closed
    form is ``L + (1 - q)/(2 m q) * sum_i sum_r relu(z_ri)^2``;
    ``mode="monte_carlo"`` averages sampled dropout losses instead.
    """
    _check_q(q)
    if mode == "monte_carlo":
        return dropout_loss_mc(net, data, q, samples, seed)[0]
    if mode != "closed":
        raise PixelflyError(f"unknown mode {mode!r}")
    phi = np.maximum(_preact(net, data.X), 0.0)
    return loss(net, data) + (1.0 - q) / (2.0 * net.m * q) * float((phi**2).sum())


def dropout_loss_mc(net, data, q, samples=100_000, seed=0, chunk=4096):
    """Monte Carlo dropout loss; returns ``(mean, standard error)``.

    One mask ``sigma`` is drawn per sample and shared by all data points.
    """
    _check_q(q)
    if samples < 2:
        raise PixelflyError("need at least 2 samples for a standard error")
    rng = np.random.default_rng(seed)
    phi = np.maximum(_preact(net, data.X), 0.0) * net.a[:, None] / np.sqrt(net.m)  # m x n
    vals = np.empty(samples)
    for lo in range(0, samples, chunk):
        hi = min(lo + chunk, samples)
        sigma = (rng.random((hi - lo, net.m)) < q) / q
        resid = sigma @ phi - data.Y[None, :]
        vals[lo:hi] = 0.5 * (resid**2).sum(axis=1)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples))


def mask_compute(mask):
    """Compute charged to a candidate: its number of kept weights."""
    if isinstance(mask, BlockMask):
        return mask.nnz
    return int(np.count_nonzero(mask))


def _named(candidates):
    out = []
    for i, c in enumerate(candidates):
        if isinstance(c, tuple):
            out.append(c)
        else:
            out.append((f"candidate{i}", c))
    return out


def search_masks(template, candidates, budget, X, seeds=3, base_seed=0):
    """Pick the feasible mask whose NTK is closest to the dense net's.

    ``candidates`` holds ``d x m`` :class:`BlockMask` objects, optionally as
    ``(name, mask)`` pairs. A candidate is feasible when its compute is at most
    ``budget``. Each seed draws one dense net; every candidate masks the same
    weights, and distances are averaged over seeds. The lowest mean distance
    wins, earlier candidates winning ties.
    """
    named = _named(candidates)
    if not named:
        raise PixelflyError("no candidate masks given")
    for name, mk in named:
        if (mk.rows, mk.cols) != (template.d, template.m):
            raise PixelflyError(f"candidate {name} is {mk.rows}x{mk.cols}, net is {template.d}x{template.m}")
    computes = [mask_compute(mk) for _, mk in named]
    feasible = [c <= budget for c in computes]
    if not any(feasible):
        raise InfeasibleError(f"no candidate fits the budget {budget} (smallest needs {min(computes)})")
    dense_masks = [mk.to_dense() if ok else None for (_, mk), ok in zip(named, feasible)]
    dist = np.full((len(named), seeds), np.nan)
    for s in range(seeds):
        net = template.sample(base_seed + s)
        K_dense = empirical_ntk(net, X)
        for idx, M in enumerate(dense_masks):
            if M is not None:
                dist[idx, s] = ntk_distance(empirical_ntk(net.with_mask(M), X), K_dense)
    table = []
    best = None
    for idx, ((name, _), c, ok) in enumerate(zip(named, computes, feasible)):
        mean = float(dist[idx].mean()) if ok else float("nan")
        std = float(dist[idx].std()) if ok else float("nan")
        table.append((name, c, mean, std, ok))
        if ok and (best is None or mean < table[best][2]):
            best = idx
    return SearchResult(best, named[best][0], named[best][1], table[best][2], tuple(table))


def unit_columns(X):
    """Scale every column of ``X`` to unit norm (zero columns stay zero)."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=0)
    return X / np.where(norms > 0, norms, 1.0)


def _largest_fitting(build, params, budget):
    best = None
    for p in params:
        mk = build(p)
        if mk.nnz > budget:
            break
        best = mk
    return best


def candidate_masks(d, m, budget, kinds=("local", "random", "butterfly", "global"), seed=0):
    """Largest mask of each kind on ``d x m`` with at most ``budget`` entries.

    Structured kinds are built on the ``d x d`` square and stretched along the
    columns, so ``m`` must be a multiple of ``d``. ``random`` picks exactly
    ``budget`` entries uniformly (Philox keyed by ``seed``); ``full`` keeps all.
    Kinds with no fitting configuration are omitted.
    """
    if m % d:
        raise PixelflyError(f"m={m} must be a multiple of d={d}")

    def stretched(square):
        return square if m == d else stretch_mask(square, d, m)

    out = []
    for kind in kinds:
        mk = None
        if kind == "local":
            mk = _largest_fitting(
                lambda w: stretched(generate_pattern(PatternSpec("local", d, d, window=w))), range(d), budget
            )
        elif kind == "global":
            mk = _largest_fitting(
                lambda w: stretched(generate_pattern(PatternSpec("global", d, d, width=w))), range(1, d + 1), budget
            )
        elif kind == "butterfly":
            strides = [2**t for t in range(1, d.bit_length()) if 2**t <= d]
            mk = _largest_fitting(
                lambda k: stretched(flat_butterfly_mask(FlatButterflyParams(d, 1, k))), strides, budget
            )
        elif kind == "random":
            count = int(min(budget, d * m))
            gen = np.random.Generator(np.random.Philox(seed))
            grid = np.zeros(d * m, dtype=bool)
            grid[gen.choice(d * m, size=count, replace=False)] = True
            mk = BlockMask.from_grid(grid.reshape(d, m))
        elif kind == "full":
            mk = BlockMask.full(d, m)
        else:
            raise PixelflyError(f"unknown candidate kind {kind!r}")
        if mk is not None:
            out.append((kind, mk))
    return out
