"""Property suites runnable from the command line.

Each suite returns a :class:`SuiteResult`; ``run_suite("all")`` runs every
one of them. Case counts default to the full-size checks and can be scaled
down with ``quick=True``.
"""
from dataclasses import dataclass

import numpy as np

from . import butterfly, costmodel, regression, toynet

__all__ = ["SuiteResult", "SUITES", "run_suite", "flat_approx", "containment", "gradcheck", "dropout",
           "regression_suite", "costmodel_suite"]


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def flat_approx(seed=0, chains=100, sizes=(4, 8, 16, 32, 64, 128, 256), eps=0.01):
    """First-order error stays below ``eps`` and quarters when ``lambda`` halves."""
    rng = np.random.default_rng(seed)
    worst, ratios = 0.0, []
    for n in sizes:
        for _ in range(chains):
            chain = butterfly.random_chain(n, 1, rng)
            lam = butterfly.approx_lambda(n, chain.b_max, eps)
            e1 = butterfly.flat_approx_error(chain, lam)
            e2 = butterfly.flat_approx_error(chain, lam / 2)
            worst = max(worst, e1 / eps)
            ratios.append(e1 / e2)
    lo, hi = min(ratios), max(ratios)
    ok = worst <= 1.0 and 3.0 <= lo and hi <= 5.0
    return SuiteResult("flat-approx", ok, f"max error/eps={worst:.3g}, halving ratio in [{lo:.3f}, {hi:.3f}]")


def containment(seed=0, chains=100, sizes=(4, 8, 16, 32), blocks=(1, 2)):
    """Lifting to a doubled block size (repeatedly) leaves the dense product unchanged."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for c in range(chains):
        n = sizes[c % len(sizes)]
        chain = butterfly.random_chain(n, blocks[c % len(blocks)], rng)
        ref = butterfly.materialize_product(chain)
        while chain.n_blocks >= 4:
            chain = butterfly.lift_block_size(chain)
            diff = np.linalg.norm(butterfly.materialize_product(chain) - ref) / np.linalg.norm(ref)
            worst = max(worst, diff)
    return SuiteResult("containment", worst <= 1e-10, f"max relative product change={worst:.3g}")


def _kink_safe_instance(rng, d, m, k, n, margin):
    while True:
        net = toynet.random_net(d, m, k=k, rng=rng)
        data = toynet.unit_norm_dataset(d, n, rng)
        if toynet.kink_margin(net, data.X) > margin:
            return net, data


def gradcheck(seed=0, cases=100, step=1e-5):
    """Analytic masked gradient against central differences; masked-out entries exactly zero."""
    rng = np.random.default_rng(seed)
    worst, leaks, mismatched = 0.0, 0, 0
    for _ in range(cases):
        net, data = _kink_safe_instance(rng, 6, 8, 3, 5, 10 * step)
        g = toynet.grad(net, data)
        fd = toynet.finite_diff_grad(net, data, step)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-300))
        leaks += int(np.count_nonzero(g[~net.M]))
        mismatched += int(not np.array_equal(g, toynet.grad(net, data, path="dense")))
    ok = worst <= 1e-6 and leaks == 0 and mismatched == 0
    return SuiteResult(
        "gradcheck", ok, f"max rel err={worst:.3g}, off-mask nonzeros={leaks}, path mismatches={mismatched}"
    )


def dropout(seed=0, nets=10, qs=(0.3, 0.5, 0.9), samples=100_000):
    """Closed-form dropout loss within 3 standard errors of Monte Carlo."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(nets):
        net = toynet.random_net(5, 32, k=3, rng=rng)
        data = toynet.unit_norm_dataset(5, 6, rng)
        for q in qs:
            closed = toynet.dropout_loss(net, data, q)
            mean, se = toynet.dropout_loss_mc(net, data, q, samples, seed=int(rng.integers(2**32)))
            worst = max(worst, abs(closed - mean) / se)
    return SuiteResult("dropout", worst <= 3.0, f"max |closed - MC| / SE={worst:.3f}")


def regression_suite(seed=0, cases=500, max_d=8, max_k=3):
    """Polynomial solver objective equals brute force on nonnegative instances."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(cases):
        d = int(rng.integers(1, max_d + 1))
        k = int(rng.integers(1, min(max_k, d) + 1))
        n = int(rng.integers(1, 6))
        a, B = rng.random(d), rng.random((d, n))
        fast = regression.row_residual(a, B, regression.solve_row_l1(a, B, k))
        slow = regression.row_residual(a, B, regression.brute_force_mask(a, B, k))
        mismatches += int(fast != slow)
    return SuiteResult("regression", mismatches == 0, f"{mismatches}/{cases} objective mismatches")


def costmodel_suite(seed=0, seeds=20, size=4096):
    """Aligned random sub-block masks reproduce the analytic touched-block density."""
    rows = [(0.0125, 1, 1.0), (0.025, 2, 0.9984), (0.05, 4, 0.9624)]
    details, ok = [], True
    for p, sub, table in rows:
        analytic = costmodel.analytic_random_actual_density(p, sub, 32)
        mc = costmodel.monte_carlo_actual_density(p, sub, 32, size, range(seed, seed + seeds))
        ok &= abs(analytic - table) <= 0.005 and abs(mc.mean() - table) <= 0.005
        details.append(f"{sub}x{sub}@{p:g}: analytic={analytic:.4f} mc={mc.mean():.4f}")
    return SuiteResult("costmodel", bool(ok), "; ".join(details))


SUITES = {
    "flat-approx": flat_approx,
    "containment": containment,
    "gradcheck": gradcheck,
    "dropout": dropout,
    "regression": regression_suite,
    "costmodel": costmodel_suite,
}

_QUICK = {
    "flat-approx": {"chains": 10},
    "containment": {"chains": 20},
    "gradcheck": {"cases": 20},
    "dropout": {"nets": 2, "samples": 20_000},
    "regression": {"cases": 100},
    "costmodel": {"seeds": 2, "size": 1024},
}


def run_suite(name, seed=0, quick=False):
    """Run one suite (or ``"all"``) and return a list of results."""
    names = list(SUITES) if name == "all" else [name]
    out = []
    for nm in names:
        if nm not in SUITES:
            raise KeyError(nm)
        kwargs = _QUICK[nm] if quick else {}
        out.append(SUITES[nm](seed=seed, **kwargs))
    return out
