"""Command line entry point: ``bscaling <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Failures print one line to stderr: ``bscaling: error kind=<Type> exit=<code> msg=<text>``.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import replace

import numpy as np

from . import core, inference, io, simlab
from .errors import BScalingError, DataError
from .regression import adjusted_r2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_grid(text: str) -> list[int]:
    """``11..25``, ``11..25:2`` or ``11,13,20``."""
    try:
        if ".." in text:
            lo, rest = text.split("..", 1)
            hi, _, step = rest.partition(":")
            return list(range(int(lo), int(hi) + 1, int(step or 1)))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad grid {text!r}; use 11..25 or 11,13,15") from None


def _emit(out, header, rows):
    if out in (None, "-"):
        io.write_table(sys.stdout, header, rows)
    else:
        io.write_table(out, header, rows)


def _load_input(path, columns=None):
    header, data = io.read_table(path)
    if columns:
        data = io.select_columns(header, data, columns)
        header = list(columns)
    return core.FusionInput(data, tuple(header))


def _model_rows(model, path):
    header, data = io.read_table(path)
    return header, data, io.select_columns(header, data, model.column_names)


def cmd_fit(args):
    inp = _load_input(args.input, args.columns)
    k0 = args.knots
    table = None
    if args.select_knots:
        k0, table = core.select_k0(inp, args.select_knots, args.order, args.ridge)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = core.fit_bscaling(inp, k0, args.order, args.ridge)
    meta = {"k0_grid": args.select_knots or [k0]}
    io.save_model(model, args.out, meta, timestamp=not args.no_meta)
    print(f"k0={k0}")
    print(f"d_min={model.d_min!r}")
    print(f"b_variance={model.b_variance!r}")
    for w in model.warnings:
        print(f"warning={w}")
    if table is not None and args.verbose:
        for row in table:
            print(f"k0={row.k0} b_variance={row.b_variance!r} d_min={row.d_min!r}")


def cmd_predict(args):
    model = io.load_model(args.model)
    header, data, X = _model_rows(model, args.input)
    mu = core.predict_bmean(model, X)
    rows = [list(r) + [m] for r, m in zip(data, mu)]
    _emit(args.out, header + [args.name], rows)


def cmd_transforms(args):
    model = io.load_model(args.model)
    _, _, X = _model_rows(model, args.input)
    F = core.component_transforms(model, X)
    _emit(args.out, [f"f_{c}" for c in model.column_names], F.tolist())


def cmd_bvar(args):
    model = io.load_model(args.model)
    _, _, X = _model_rows(model, args.input)
    per_row, agg = core.b_variance(model, X)
    mu = core.predict_bmean(model, X)
    _emit(args.out, ["bmean", "bvar"], np.column_stack([mu, per_row]).tolist())
    print(f"aggregate_b_variance={agg!r}", file=sys.stderr if args.out in (None, "-") else sys.stdout)


def cmd_select_knots(args):
    inp = _load_input(args.input, args.columns)
    best, table = core.select_k0(inp, args.grid, args.order, args.ridge)
    rows = [[r.k0, r.b_variance, r.d_min, int(r.k0 == best), r.error or ""] for r in table]
    _emit(args.out, ["k0", "b_variance", "d_min", "selected", "error"], rows)


def cmd_infer(args):
    model = io.load_model(args.model)
    _, _, X = _model_rows(model, args.input)
    _, _, at = _model_rows(model, args.at)
    asy = inference.asymptotic_model(model, X, max_dim=None if args.no_guard else args.max_dim)
    rows = []
    for w in at:
        ci = inference.sigma_mu_ci(model, asy, w, args.level)
        rows.append([ci.mu_hat, ci.sigma_mu, ci.level, ci.lower, ci.upper])
    _emit(args.out, ["mu_hat", "sigma_mu", "level", "lower", "upper"], rows)


def _sim_config(args, n, K):
    return simlab.SimConfig(n=n, K=K, latent=args.latent, noise_variance=args.noise_var,
                            nu=args.nu, H=args.H, family=args.family, seed=args.seed)


def cmd_simulate(args):
    cfg = _sim_config(args, args.n, args.K)
    y, W = simlab.simulate(cfg)
    header = [f"w{k + 1}" for k in range(cfg.K)]
    if args.with_latent:
        _emit(args.out, header + ["y"], np.column_stack([W, y]).tolist())
    else:
        _emit(args.out, header, W.tolist())


def cmd_bench(args):
    if args.standard_grid:
        settings = simlab.standard_grid(args.latent, args.family, args.noise_var)
    else:
        settings = [_sim_config(args, n, K) for n in args.n for K in args.K]
    settings = [replace(s, nu=args.nu, H=args.H) for s in settings]
    report = simlab.run_benchmark(settings, args.reps, args.k0_grid, seed=args.seed,
                                  m=args.order, workers=args.workers)
    tidy_header = ["n", "K", "latent", "family", "noise_var", "method", "rep", "abs_corr"]
    _emit(args.out, tidy_header, report.tidy())
    if args.summary:
        hdr = ["n", "K", "latent", "family", "noise_var", "method", "reps", "mean", "sd",
               "q1", "median", "q3", "mean_fit_seconds"]
        io.write_table(args.summary, hdr, report.summary())
    if report.failures():
        print(f"failed_replications={len(report.failures())}", file=sys.stderr)


def cmd_r2(args):
    hx, dx = io.read_table(args.fused)
    hg, dg = io.read_table(args.response)
    x = io.select_columns(hx, dx, [args.fused_column or hx[-1]])[:, 0]
    g = io.select_columns(hg, dg, [args.response_column or hg[0]])[:, 0]
    res = adjusted_r2(x, g, args.log_response)
    for k, v in res._asdict().items():
        print(f"{k}={v!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bscaling", description="Nonparametric fusion of K measurements of one latent quantity.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def spline_opts(sp):
        sp.add_argument("--order", type=int, default=core.DEFAULT_ORDER, help="spline order m")
        sp.add_argument("--ridge", type=float, default=core.DEFAULT_RIDGE)
        sp.add_argument("--columns", type=lambda s: s.split(","), help="comma-separated measurement columns")

    sp = sub.add_parser("fit", help="fit a model and write it as JSON")
    sp.add_argument("--input", required=True)
    sp.add_argument("--knots", type=int, default=11, help="number of knot intervals k0")
    sp.add_argument("--select-knots", metavar="GRID", type=parse_grid, help="choose k0 from a grid such as 11..25")
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-meta", action="store_true", help="omit the timestamp from the model file")
    sp.add_argument("--verbose", action="store_true")
    spline_opts(sp)
    sp.set_defaults(func=cmd_fit)

    for name, func, hlp in (("predict", cmd_predict, "append the fused B-mean column"),
                            ("transforms", cmd_transforms, "per-measurement fitted transforms"),
                            ("bvar", cmd_bvar, "per-row B-variance")):
        sp = sub.add_parser(name, help=hlp)
        sp.add_argument("--model", required=True)
        sp.add_argument("--input", required=True)
        sp.add_argument("--out")
        if name == "predict":
            sp.add_argument("--name", default="bmean", help="name of the appended column")
        sp.set_defaults(func=func)

    sp = sub.add_parser("select-knots", help="B-variance and d_min over a k0 grid")
    sp.add_argument("--input", required=True)
    sp.add_argument("--grid", type=parse_grid, default="11..25")
    sp.add_argument("--out")
    spline_opts(sp)
    sp.set_defaults(func=cmd_select_knots)

    sp = sub.add_parser("infer", help="asymptotic confidence intervals for the B-mean")
    sp.add_argument("--model", required=True)
    sp.add_argument("--input", required=True, help="the training data of the model")
    sp.add_argument("--at", required=True, help="CSV of new observations")
    sp.add_argument("--level", type=float, default=0.95)
    sp.add_argument("--max-dim", type=int, default=inference.MAX_DIM)
    sp.add_argument("--no-guard", action="store_true", help="lift the dimension guard")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_infer)

    def sim_opts(sp):
        sp.add_argument("--latent", choices=[v.value for v in simlab.Latent], default="uniform")
        sp.add_argument("--family", choices=[v.value for v in simlab.Family], default="logit")
        sp.add_argument("--noise-var", type=float, default=0.1)
        sp.add_argument("--nu", type=float, default=2.0)
        sp.add_argument("--H", type=int, default=5)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out")

    sp = sub.add_parser("simulate", help="draw one dataset from a simulation design")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--K", type=int, required=True)
    sp.add_argument("--with-latent", action="store_true", help="add the latent column y")
    sim_opts(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("bench", help="B-mean vs PC_max vs MDS over replications")
    sp.add_argument("--n", type=parse_grid, default="1000", help="comma list or range")
    sp.add_argument("--K", type=parse_grid, default="10", help="comma list or range")
    sp.add_argument("--standard-grid", action="store_true", help="n in 500,700,1000,2000,3000 crossed with K in 7,10,20,30")
    sp.add_argument("--reps", type=int, default=100)
    sp.add_argument("--k0-grid", type=parse_grid, default="11..25")
    sp.add_argument("--order", type=int, default=core.DEFAULT_ORDER)
    sp.add_argument("--workers", type=int, default=None, help="processes (default $BSCALING_THREADS or 1)")
    sp.add_argument("--summary", help="also write a per-method summary CSV")
    sim_opts(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("r2", help="adjusted R^2 of response ~ fused score")
    sp.add_argument("--fused", required=True)
    sp.add_argument("--response", required=True)
    sp.add_argument("--fused-column", help="default: last column of --fused")
    sp.add_argument("--response-column", help="default: first column of --response")
    sp.add_argument("--log-response", action="store_true")
    sp.set_defaults(func=cmd_r2)
    return p


def _fail(kind: str, code: int, msg: str) -> int:
    msg = " ".join(str(msg).split())
    print(f"bscaling: error kind={kind} exit={code} msg={msg}", file=sys.stderr)
    return code


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        return _fail("UsageError", 1, exc)
    except BScalingError as exc:
        return _fail(type(exc).__name__, exc.exit_code, exc)
    except ValueError as exc:
        return _fail("DataError", DataError.exit_code, exc)
    except BrokenPipeError:
        # downstream reader (e.g. ``head``) closed the pipe early
        sys.stderr.close()
    return 0


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
