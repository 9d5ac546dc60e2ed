"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line (with its runtime) that the
conftest prints in the terminal summary. Run just this file with
``pytest tests/test_acceptance.py -v``.
"""
import time
from contextlib import contextmanager
from itertools import combinations

import numpy as np
import pytest

from pixelflykit import butterfly, costmodel, regression, toynet
from pixelflykit.allocator import LayerSpec, ModelSchema, closed_form_allocate, sparsify_schema, total_compute
from pixelflykit.expressiveness import ClusterProcess, generate_clustered, run_experiment
from pixelflykit.patterns import BlockMask, PatternSpec, generate_pattern
from pixelflykit.sparse import BlockSparseMatrix, spmm

RESULTS = []


@contextmanager
def criterion(number, title, limit_s):
    start = time.perf_counter()
    detail = {}
    try:
        yield detail
        elapsed = time.perf_counter() - start
        assert elapsed < limit_s, f"took {elapsed:.1f}s, limit {limit_s}s"
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        RESULTS.append(f"FAIL {number:>2} {title} ({elapsed:.1f}s): {exc}")
        raise
    RESULTS.append(f"PASS {number:>2} {title} ({elapsed:.1f}s) {detail.get('info', '')}".rstrip())


def kink_safe(rng, d=6, m=8, k=3, n=5, margin=1e-4):
    while True:
        net = toynet.random_net(d, m, k=k, rng=rng)
        data = toynet.unit_norm_dataset(d, n, rng)
        if toynet.kink_margin(net, data.X) > margin:
            return net, data


def test_01_actual_density_table():
    with criterion(1, "touched-block density of random sparsity", 30) as out:
        got = []
        for p, sub, expected in [(0.0125, 1, 1.0), (0.025, 2, 0.9984), (0.05, 4, 0.9624)]:
            analytic = costmodel.analytic_random_actual_density(p, sub, 32)
            mc = costmodel.monte_carlo_actual_density(p, sub, 32, 4096, range(20)).mean()
            assert abs(analytic - expected) <= 0.005, (p, sub, analytic)
            assert abs(mc - expected) <= 0.005, (p, sub, mc)
            got.append(f"{sub}x{sub}: {analytic:.4f}/{mc:.4f}")
        out["info"] = "; ".join(got)


def test_02_flat_approximation():
    with criterion(2, "flat butterfly first-order error", 120) as out:
        rng = np.random.default_rng(2)
        eps, worst, ratios = 0.01, 0.0, []
        for n in (4, 8, 16, 32, 64, 128, 256):
            for _ in range(100):
                chain = butterfly.random_chain(n, 1, rng)
                lam = 0.5 * np.sqrt(eps) / (np.log2(n) * chain.b_max)
                e1 = butterfly.flat_approx_error(chain, lam)
                e2 = butterfly.flat_approx_error(chain, lam / 2)
                worst = max(worst, e1)
                ratios.append(e1 / e2)
        assert worst <= eps
        assert 3.0 <= min(ratios) and max(ratios) <= 5.0
        out["info"] = f"max error {worst:.2e}, ratio [{min(ratios):.3f}, {max(ratios):.3f}]"


def test_03_block_containment():
    with criterion(3, "lifting preserves the butterfly product", 60) as out:
        rng = np.random.default_rng(3)
        worst, double_lifts = 0.0, 0
        for c in range(100):
            n = (4, 8, 16, 32)[c % 4]
            block = 1 + c % 2
            chain = butterfly.random_chain(n // block, block, rng)
            ref = butterfly.materialize_product(chain)
            lifts = 0
            while chain.n_blocks >= 4:
                chain = butterfly.lift_block_size(chain)
                lifts += 1
                rel = np.linalg.norm(butterfly.materialize_product(chain) - ref) / np.linalg.norm(ref)
                worst = max(worst, rel)
            double_lifts += lifts >= 2
        assert worst <= 1e-10 and double_lifts > 0
        out["info"] = f"max relative change {worst:.2e}, {double_lifts} chains lifted twice or more"


def test_04_regression_oracle():
    with criterion(4, "l1 mask regression equals brute force", 60) as out:
        rng = np.random.default_rng(4)
        for _ in range(500):
            d = int(rng.integers(1, 9))
            k = int(rng.integers(1, min(3, d) + 1))
            a, B = rng.random(d), rng.random((d, int(rng.integers(1, 6))))
            fast = regression.row_residual(a, B, regression.solve_row_l1(a, B, k))
            # independent search over every k-subset, scored by the same objective
            best = np.inf
            for subset in combinations(range(d), k):
                mask = np.zeros(d, dtype=bool)
                mask[list(subset)] = True
                best = min(best, regression.row_residual(a, B, mask))
            assert fast == best
        out["info"] = "500/500 exact"


def test_05_gradient():
    with criterion(5, "masked gradient vs central differences", 60) as out:
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(100):
            net, data = kink_safe(rng)
            g = toynet.grad(net, data)
            fd = toynet.finite_diff_grad(net, data, 1e-5)
            worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(g))
            assert not g[~net.M].any()
        assert worst <= 1e-6
        out["info"] = f"max relative error {worst:.2e}"


def test_06_dropout_identity():
    with criterion(6, "closed-form dropout loss vs Monte Carlo", 120) as out:
        rng = np.random.default_rng(6)
        worst = 0.0
        for _ in range(10):
            net = toynet.random_net(5, 32, k=3, rng=rng)
            data = toynet.unit_norm_dataset(5, 6, rng)
            for q in (0.3, 0.5, 0.9):
                mean, se = toynet.dropout_loss_mc(net, data, q, 100_000, seed=int(rng.integers(2**32)))
                worst = max(worst, abs(toynet.dropout_loss(net, data, q) - mean) / se)
        assert worst <= 3.0
        out["info"] = f"max deviation {worst:.2f} SE"


def test_07_toy_convergence():
    with criterion(7, "masked two-layer net trains to 1e-3", 120) as out:
        rng = np.random.default_rng(7)
        data = toynet.unit_norm_dataset(10, 20, rng)
        net = toynet.random_net(10, 1024, k=5, rng=rng)
        traj = toynet.train_gd(net, data, 0.1, 5000, log_every=1)
        below = np.flatnonzero(traj.loss <= 1e-3)
        assert below.size, f"final loss {traj.loss[-1]:.3g}"
        assert np.all(np.diff(traj.loss[10:]) <= 0)
        out["info"] = f"loss <= 1e-3 at step {traj.steps[below[0]]}"


def test_08_ntk_search():
    with criterion(8, "NTK-guided mask search", 300) as out:
        d, m = 32, 256
        X = toynet.unit_columns(generate_clustered(ClusterProcess(32, 4, 8, d, seed=8)).T)
        template = toynet.NetTemplate(d, m)

        full = toynet.candidate_masks(d, m, d * m, ("local", "random", "butterfly", "global", "full"))
        res = toynet.search_masks(template, full, d * m, X)
        assert res.best_mask == BlockMask.full(d, m) and res.best_distance == 0.0

        budget = 0.1 * d * m
        cands = toynet.candidate_masks(d, m, budget)
        res = toynet.search_masks(template, cands, budget, X, seeds=3, base_seed=8)
        table = []
        for _, mask in cands:
            dists = []
            for s in range(8, 11):
                dense = toynet.random_net(d, m, rng=s)
                sparse = toynet.TwoLayerNet(dense.W, dense.a, mask.to_dense())
                dists.append(toynet.ntk_distance(toynet.empirical_ntk(sparse, X), toynet.empirical_ntk(dense, X)))
            table.append(np.mean(dists))
        assert res.best_index == int(np.argmin(table))
        out["info"] = f"10% budget picks {res.best_name} ({res.best_distance:.3f})"


def test_09_expressiveness():
    with criterion(9, "sparse + low rank beats either alone", 300) as out:
        _, results = run_experiment(n=256, seeds=range(20))
        wins = sum(r.slr_wins for r in results)
        assert wins >= 18
        out["info"] = f"{wins}/20 seeds"


def test_10_spmm_oracle():
    with criterion(10, "block-sparse times dense vs dense oracle", 60) as out:
        rng = np.random.default_rng(10)
        worst = 0.0
        for t in range(200):
            block = int(rng.choice([1, 2, 4, 8, 16]))
            nbr, nbc = (int(v) for v in rng.integers(1, 9, size=2))
            mask = generate_pattern(
                PatternSpec("random", nbr * block, nbc * block, block, density=float(rng.random()), seed=t)
            )
            a = BlockSparseMatrix.random(mask, rng)
            x = rng.standard_normal((mask.cols, int(rng.integers(1, 40))))
            dense = np.zeros((mask.rows, mask.cols))
            for (i, j), v in zip(zip(mask.block_rows, mask.block_cols), a.values):
                dense[i * block : (i + 1) * block, j * block : (j + 1) * block] = v
            ref = dense @ x
            got = spmm(a, x)
            scale = max(np.linalg.norm(ref), 1e-300)
            worst = max(worst, np.linalg.norm(got - ref) / scale)
        assert worst <= 1e-12
        out["info"] = f"max relative error {worst:.2e}"


def grid_cost_argmin(s, d, B, step=0.01):
    pa, pm = s * s, 2 * d * d
    best = (np.inf, None)
    for da in np.round(np.arange(0, 1 + step / 2, step), 10):
        dm = (B - pa * da) / pm
        if -1e-12 <= dm <= 1 + 1e-12:
            best = min(best, (da * (s * s + s * d) + 2 * dm * s * d, (da, dm)))
    for dm in np.round(np.arange(0, 1 + step / 2, step), 10):
        da = (B - pm * dm) / pa
        if -1e-12 <= da <= 1 + 1e-12:
            best = min(best, (da * (s * s + s * d) + 2 * dm * s * d, (da, dm)))
    return best[1]


def test_11_allocation():
    with criterion(11, "closed-form allocation and budget feasibility", 30) as out:
        rng = np.random.default_rng(11)
        for _ in range(50):
            s, d = (int(v) for v in rng.integers(16, 2049, size=2))
            B = float(rng.uniform(0.01, 1.0)) * (s * s + 2 * d * d)
            da, dm = closed_form_allocate(s, d, B)
            ga, gm = grid_cost_argmin(s, d, B)
            assert abs(da - ga) <= 0.01 + 1e-9 and abs(dm - gm) <= 0.01 + 1e-9, (s, d, B)
        checked = 0
        # the smallest flat butterfly needs density 2 / (side / 32), so 15% fits every side here
        for frac in (0.15, 0.2, 0.3, 0.5, 1.0):
            for side in (512, 1024, 2048):
                schema = ModelSchema(
                    [LayerSpec("attention", 4, side, side, 128), LayerSpec("mlp", 4, side, 4 * side, 128)]
                )
                assignment = sparsify_schema(schema, frac, 32)
                assert total_compute(schema, assignment) <= assignment.budget
                checked += 1
        out["info"] = f"50 triples within one grid step, {checked} schemas within budget"


def test_12_bench_ordering():
    with criterion(12, "block-aligned spmm faster than element-random", 120) as out:
        n, batch = 1024, 64
        aligned = generate_pattern(PatternSpec("random", n, n, 32, density=0.1, seed=12))
        scattered = generate_pattern(PatternSpec("random", n, n, 1, density=0.1, seed=12))
        fast = costmodel.bench_spmm(aligned, batch, 100)
        slow = costmodel.bench_spmm(scattered, batch, 100)
        assert fast.mean_ms < slow.mean_ms
        for n_blocks in (16, 64, 256):
            for k in (2, 4, 8, 16):
                flat = costmodel.flat_op_count(n_blocks, 32, k, batch)
                product = costmodel.product_op_count(n_blocks, 32, k, batch)
                # both are n * log2(k) up to a constant in [1/2, 1]
                assert 0.5 <= flat / product <= 1.0
        out["info"] = f"{fast.mean_ms:.2f} ms vs {slow.mean_ms:.2f} ms"


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
