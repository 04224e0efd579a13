"""Command-line entry point: ``sparse-minimax gen|run|rates|verify|entropy|plot``."""

import argparse
import json
import os
import sys

import numpy as np

from . import diagnostics, harness, relu_net, sparse_classes


def _load_config(args):
    cfg = harness.ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


def cmd_gen(args):
    cfg = _load_config(args)
    f = harness.draw_target(cfg.target, harness.target_rng(cfg))
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "target.json"), "w") as fh:
        json.dump(sparse_classes.target_to_json(f), fh, indent=2, sort_keys=True)
        fh.write("\n")
    n = args.n or cfg.n_grid[0]
    data = harness.generate_data(f, n, cfg.sigma,
                                 harness.cell_rng(cfg.master_seed, harness.STREAM_DATA, n, 0))
    path = os.path.join(args.out_dir, "data.csv")
    cols = [f"x{i}" for i in range(data.dim)] + ["y"]
    np.savetxt(path, np.column_stack([data.xs, data.ys]), delimiter=",",
               header=",".join(cols), comments="", fmt="%.17g")
    print(f"wrote target.json and data.csv (n={n}) to {args.out_dir}")
    return 0


def _print_reports(reports):
    for r in reports:
        print(f"{r.estimator:>20s}  slope {r.slope:+.3f} +- {r.slope_se:.3f}  "
              f"reference {r.reference_exponent:+.3f}  failures {r.failures}")


def cmd_run(args):
    cfg = _load_config(args)
    result = harness.run_sweep(cfg)
    paths = harness.write_outputs(result, args.out_dir)
    _print_reports(result.reports)
    for k, p in sorted(paths.items()):
        print(f"{k}: {p}")
    return 0


def _reports_from_csv(args):
    cfg = _load_config(args)
    csv_path = args.cells or os.path.join(args.out_dir, cfg.outputs.get("csv", "cells.csv"))
    records = harness.read_cells_csv(csv_path)
    return cfg, harness.aggregate(cfg, records)


def cmd_rates(args):
    cfg, reports = _reports_from_csv(args)
    _print_reports(reports)
    path = os.path.join(args.out_dir, cfg.outputs.get("json", "rates.json"))
    with open(path, "w") as fh:
        fh.write(harness.reports_json(reports, cfg))
    print(f"json: {path}")
    return 0


def cmd_plot(args):
    cfg, reports = _reports_from_csv(args)
    path = os.path.join(args.out_dir, cfg.outputs.get("svg") or "rates.svg")
    harness.plot_rates(reports, cfg, path)
    print(f"svg: {path}")
    return 0


def cmd_verify(args):
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    names = [args.check] if args.check else list(diagnostics.CHECKS)
    seed = 0 if args.seed is None else args.seed
    ok = True
    for name in names:
        rep = diagnostics.run_named_check(name, doc, seed)
        print(json.dumps(rep.to_dict(), sort_keys=True))
        ok &= rep.passed is not False
    return 0 if ok else 1


def cmd_entropy(args):
    arch = relu_net.NetworkArch(args.L, args.S, args.D, args.B)
    out = {"covering": relu_net.covering_entropy_bound(arch, args.delta)}
    if args.N is not None:
        out["shared"] = relu_net.shared_entropy_bound(arch, args.N, args.d, args.delta)
    print(json.dumps(out, sort_keys=True))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="sparse-minimax", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker threads")
        return p

    p = common(sub.add_parser("gen", help="draw a target and one dataset"))
    p.add_argument("--n", type=int, default=None, help="sample size (default: first grid point)")
    p.set_defaults(func=cmd_gen)

    common(sub.add_parser("run", help="run a sweep and write CSV, JSON and SVG")).set_defaults(func=cmd_run)

    for name, func, helptext in (("rates", cmd_rates, "refit slopes from a cells CSV"),
                                 ("plot", cmd_plot, "plot rates from a cells CSV")):
        p = common(sub.add_parser(name, help=helptext))
        p.add_argument("--cells", default=None, help="cells CSV (default: <out-dir>/cells.csv)")
        p.set_defaults(func=func)

    p = common(sub.add_parser("verify", help="run diagnostic checks"), config_required=False)
    p.add_argument("--check", choices=diagnostics.CHECKS, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("entropy", help="network entropy bounds")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--S", type=int, required=True)
    p.add_argument("--D", type=int, required=True)
    p.add_argument("--B", type=float, default=1.0)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--N", type=int, default=None, help="sharing count for the shared bound")
    p.add_argument("--d", type=int, default=1, help="input dimension for the shared bound")
    p.set_defaults(func=cmd_entropy)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
