"""Command-line interface: ``pixelflykit <subcommand> [flags]``.

Exit status is 0 on success, 1 on a domain error (bad input, infeasible
budget, failed verification) and 2 on a usage error. Outputs go to stdout
unless ``--out`` names a file. Every random choice derives from ``--seed``.
"""
import argparse
import json
import os
import sys

import numpy as np

from . import allocator, costmodel, expressiveness, formats, regression, toynet, verify
from .errors import PixelflyError
from .patterns import BlockMask, FlatButterflyParams, PatternSpec, flat_butterfly_mask, generate_pattern

__all__ = ["main", "build_parser"]

PATTERNS = ("flat-butterfly", "local", "global", "random")


class _Output:
    """Text sink that writes to ``--out`` or stdout."""

    def __init__(self, path):
        self.path = path

    def write(self, text):
        if self.path:
            with open(self.path, "w", newline="\n") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def _csv(header, rows):
    return formats.write_csv(None, header, rows)


def _cmd_gen_mask(args):
    cols = args.cols or args.n
    if args.pattern == "flat-butterfly":
        if args.n != cols or args.n % args.block:
            raise PixelflyError("flat-butterfly needs a square matrix whose side is a multiple of --block")
        mask = flat_butterfly_mask(FlatButterflyParams(args.n // args.block, args.block, args.max_stride))
    else:
        mask = generate_pattern(
            PatternSpec(
                args.pattern, args.n, cols, args.block,
                window=args.window, width=args.width, density=args.density, seed=args.seed,
            )
        )
    _Output(args.out).write(formats.format_mask(mask))
    return 0


def _hw(args):
    return costmodel.HardwareProfile(args.hw_block, args.cost_mem, args.cost_flop)


def _cmd_cost(args):
    mask = formats.read_mask(args.mask)
    name = os.path.splitext(os.path.basename(args.mask))[0]
    row = costmodel.cost_csv_row(name, mask, args.batch, _hw(args))
    _Output(args.out).write(_csv(costmodel.COST_CSV_HEADER, [row]))
    return 0


def _cmd_bench(args):
    n, b = args.n, args.block
    hw = _hw(args)
    patterns = [
        ("block-aligned-random", generate_pattern(PatternSpec("random", n, n, b, density=args.density, seed=args.seed))),
        ("element-random", generate_pattern(PatternSpec("random", n, n, 1, density=args.density, seed=args.seed))),
        ("dense", BlockMask.full(n, n, b)),
    ]
    if n % b == 0 and (n // b) & (n // b - 1) == 0 and n // b >= 2:
        k = min(args.max_stride, n // b)
        patterns.append(("flat-butterfly", flat_butterfly_mask(FlatButterflyParams(n // b, b, k))))
    rows = []
    for name, mask in patterns:
        res = costmodel.bench_spmm(mask, args.batch, args.repeats, hw, backend=args.backend, seed=args.seed)
        rows.append(costmodel.cost_csv_row(name, mask, args.batch, hw, res))
    _Output(args.out).write(_csv(costmodel.COST_CSV_HEADER, rows))
    return 0


def _cmd_allocate(args):
    if args.schema:
        schema = allocator.load_schema(args.schema)
        assignment = allocator.sparsify_schema(schema, args.budget_fraction, args.hw_block, args.lowrank_share)
        _Output(args.out).write(allocator.assignment_to_json(assignment))
        return 0
    if args.seq_len is None or args.dim is None:
        raise PixelflyError("allocate needs either --schema or both --seq-len and --dim")
    total = args.seq_len**2 + 2 * args.dim**2
    budget = args.budget_params if args.budget_params is not None else args.budget_fraction * total
    da, dm = allocator.closed_form_allocate(args.seq_len, args.dim, budget)
    body = {"attention_density": da, "mlp_density": dm, "budget_params": budget, "dense_params": total}
    _Output(args.out).write(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_select(args):
    budget = args.budget if args.budget is not None else int(args.budget_fraction * args.m * args.n)
    params, rank = allocator.select_layer_mask(args.m, args.n, budget, args.hw_block, args.lowrank_share)
    used = allocator.butterfly_param_count(args.m, args.n, args.hw_block, params.max_stride)
    body = {
        "block": params.b,
        "n_blocks": params.n,
        "max_stride": params.max_stride,
        "rank": rank,
        "butterfly_params": used,
        "lowrank_params": rank * (args.m + args.n),
        "budget": budget,
    }
    _Output(args.out).write(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_regress(args):
    B = formats.read_matrix_market(args.B)
    if args.backward:
        C = formats.read_matrix_market(args.A)
        M = regression.backward_mask(C, B, args.k, block=args.block)
        resid = regression.backward_residual(C, B, M)
    else:
        A = formats.read_matrix_market(args.A)
        if args.brute_force:
            M = regression.brute_force_matrix(A, B, args.k)
        else:
            M = regression.solve_matrix_l1(A, B, args.k)
        resid = regression.matrix_residual(A, B, M)
    mask = BlockMask.from_grid(M.astype(bool), 1)
    _Output(args.out).write(formats.format_mask(mask))
    print(f"residual_l1 {resid!r}", file=sys.stderr if not args.out else sys.stdout)
    return 0


def _cmd_train_toy(args):
    rng = np.random.default_rng(args.seed)
    data = toynet.unit_norm_dataset(args.d, args.samples, rng)
    net = toynet.random_net(args.d, args.m, k=args.k, rng=rng)
    traj = toynet.train_gd(net, data, args.eta, args.steps, log_every=args.log_every)
    _Output(args.out).write(_csv(toynet.TRAJECTORY_CSV_HEADER, traj.rows()))
    return 0


def _cmd_ntk_search(args):
    proc = expressiveness.ClusterProcess(
        args.clusters * args.cluster_size, args.clusters, args.cluster_size, args.d, args.delta, seed=args.seed
    )
    X = toynet.unit_columns(expressiveness.generate_clustered(proc).T)
    budget = args.budget_fraction * args.d * args.m
    kinds = tuple(args.candidates.split(","))
    cands = toynet.candidate_masks(args.d, args.m, budget, kinds, seed=args.seed)
    res = toynet.search_masks(toynet.NetTemplate(args.d, args.m), cands, budget, X, args.seeds, args.seed)
    _Output(args.out).write(_csv(toynet.NTK_CSV_HEADER, res.csv_rows()))
    print(f"best {res.best_name} distance {res.best_distance!r}", file=sys.stderr)
    return 0


def _cmd_expressiveness(args):
    seeds = range(args.seed, args.seed + args.seeds)
    rows, results = expressiveness.run_experiment(
        args.clusters * args.cluster_size, args.clusters, args.cluster_size, args.d,
        args.delta, args.beta, seeds, args.rank, args.max_stride,
    )
    _Output(args.out).write(_csv(expressiveness.EXPRESSIVENESS_CSV_HEADER, rows))
    wins = sum(r.slr_wins for r in results)
    print(f"sparse+low-rank best on {wins}/{len(results)} seeds", file=sys.stderr)
    return 0


def _cmd_verify(args):
    results = verify.run_suite(args.suite, seed=args.seed, quick=args.quick)
    text = "".join(r.line() + "\n" for r in results)
    _Output(args.out).write(text)
    return 0 if all(r.passed for r in results) else 1


def _add_hw(p):
    p.add_argument("--hw-block", type=int, default=32, help="device block size in elements")
    p.add_argument("--cost-mem", type=float, default=1.0, help="cost of one block access")
    p.add_argument("--cost-flop", type=float, default=0.01, help="cost of one flop")


def build_parser():
    parser = argparse.ArgumentParser(prog="pixelflykit", description="Block-sparse butterfly mask toolkit.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every random choice")
    common.add_argument("--out", help="output file (default: stdout)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-mask", parents=[common], help="write a PXBF mask")
    p.add_argument("--pattern", choices=PATTERNS, required=True)
    p.add_argument("--n", type=int, required=True, help="rows in elements")
    p.add_argument("--cols", type=int, help="columns in elements (default: --n)")
    p.add_argument("--block", type=int, default=1)
    p.add_argument("--max-stride", type=int, default=2)
    p.add_argument("--window", type=int, default=0, help="local band half-width in blocks")
    p.add_argument("--width", type=int, default=1, help="global rows/columns in blocks")
    p.add_argument("--density", type=float, default=0.1, help="random block density")
    p.set_defaults(func=_cmd_gen_mask)

    p = sub.add_parser("cost", parents=[common], help="cost-model report for a mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--batch", type=int, default=64)
    _add_hw(p)
    p.set_defaults(func=_cmd_cost)

    p = sub.add_parser("bench", parents=[common], help="time spmm on several patterns")
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--block", type=int, default=32)
    p.add_argument("--density", type=float, default=0.1)
    p.add_argument("--max-stride", type=int, default=4)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--backend", choices=("compiled", "python"))
    _add_hw(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("allocate", parents=[common], help="split a budget across layer types")
    p.add_argument("--schema", help="JSON schema file; omit for the two-type closed form")
    p.add_argument("--budget-fraction", type=float, default=0.1)
    p.add_argument("--hw-block", type=int, default=32)
    p.add_argument("--lowrank-share", type=float, default=1 / 3)
    p.add_argument("--seq-len", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--budget-params", type=float)
    p.set_defaults(func=_cmd_allocate)

    p = sub.add_parser("select", parents=[common], help="butterfly stride and rank for one layer")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--budget", type=int, help="parameter budget")
    g.add_argument("--budget-fraction", type=float)
    p.add_argument("--hw-block", type=int, default=32)
    p.add_argument("--lowrank-share", type=float, default=1 / 3)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("regress", parents=[common], help="l1 mask regression on Matrix Market inputs")
    p.add_argument("--A", required=True, help="left operand (C for --backward)")
    p.add_argument("--B", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--brute-force", action="store_true")
    p.add_argument("--backward", action="store_true", help="top-k mask on C @ B.T")
    p.add_argument("--block", type=int, default=1, help="segment width for --backward")
    p.set_defaults(func=_cmd_regress)

    p = sub.add_parser("train-toy", parents=[common], help="gradient descent on the masked two-layer net")
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--m", type=int, default=1024)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--k", type=int, default=5, help="mask nonzeros per column")
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--log-every", type=int, default=10)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("ntk-search", parents=[common], help="NTK-guided mask choice on clustered data")
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--m", type=int, default=256)
    p.add_argument("--clusters", type=int, default=4)
    p.add_argument("--cluster-size", type=int, default=8)
    p.add_argument("--delta", type=float, default=0.15)
    p.add_argument("--budget-fraction", type=float, default=0.1)
    p.add_argument("--candidates", default="local,random,butterfly,global")
    p.add_argument("--seeds", type=int, default=3, help="initialisations averaged per candidate")
    p.set_defaults(func=_cmd_ntk_search)

    p = sub.add_parser("expressiveness", parents=[common], help="sparse+low-rank vs either alone")
    p.add_argument("--clusters", type=int, default=32)
    p.add_argument("--cluster-size", type=int, default=8)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--delta", type=float, default=0.15)
    p.add_argument("--beta", type=float, help="inverse temperature (default ln n)")
    p.add_argument("--rank", type=int, default=16)
    p.add_argument("--max-stride", type=int, default=2)
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(func=_cmd_expressiveness)

    p = sub.add_parser("verify", parents=[common], help="run property suites")
    p.add_argument("suite", choices=tuple(verify.SUITES) + ("all",))
    p.add_argument("--quick", action="store_true", help="fewer cases per suite")
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PixelflyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
