"""Command-line front door.

Subcommands: simulate | verify-regression | verify-covariance | distance
| coupling | bound | stein-identity.  Every command emits a
self-contained JSON (or CSV) report; exit code 0 means all checks
passed, 1 means some check failed, 2 means a usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from . import combinatorial as comb
from . import graph as gr
from . import ou_stein as ou
from .functionals import (
    FUNCTIONAL_SPEC_HELP,
    FunctionalError,
    UnsupportedFunctionalError,
    certified_library,
    norm_upper_bound,
    parse_functional,
)
from .mc import SeedSpec, from_values, mc_run
from .reporting import RunReport

F = Fraction

USAGE_ERROR, CHECK_FAILURE = 2, 1


class UsageError(ValueError):
    pass


def _load_model(path: str):
    """Returns ("graph", GraphModel) or ("array", ArrayModel)."""
    with open(path) as fh:
        d = json.load(fh)
    kind = d.get("type")
    if kind is None:
        kind = "graph" if set(d) >= {"n", "p"} else "array"
    if kind == "graph":
        return "graph", gr.GraphModel.from_json_dict(d)
    if kind == "array":
        return "array", comb.ArrayModel.from_json_dict(d)
    raise UsageError("unknown model type %r" % kind)


def _functionals(specs, dim):
    if not specs:
        return certified_library(dim)
    try:
        return [parse_functional(s, dim) for s in specs]
    except FunctionalError as exc:
        raise UsageError(str(exc)) from exc


def _report(args, command: str, parameters: dict) -> RunReport:
    return RunReport(
        command=command,
        parameters=parameters,
        seed=args.seed,
        version="steinpaths-%s" % __version__,
    )


def _emit(report: RunReport, args) -> int:
    text = report.to_csv() if args.format == "csv" else report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if report.all_pass else CHECK_FAILURE


def _gap_sampler(kind, model, g):
    """Chunk samplers for g(Y_n) and g(D_n) grid evaluations."""
    cuts = [int(model.n * t) for t in g.times]

    def values(sampler):
        def fn(rng, size):
            grid = sampler(model, rng, size)
            if grid.ndim == 2:
                grid = grid[:, :, None]
            return g.value_stacked(grid[:, cuts, :].reshape(size, -1))

        return fn

    if kind == "graph":
        return values(gr.sample_y_values), values(gr.sample_dn_values)
    return values(comb.sample_y_values), values(comb.sample_dn_values)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    kind, model = _load_model(args.model)
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    dim = 2 if kind == "graph" else 1
    funcs = _functionals(args.functional, dim)
    report = _report(
        args,
        "simulate",
        {"model": args.model, "kind": kind, "samples": args.samples,
         "functionals": [g.label for g in funcs]},
    )
    seed = SeedSpec(args.seed)
    for idx, g in enumerate(funcs):
        y_fn, d_fn = _gap_sampler(kind, model, g)
        est_y = mc_run(y_fn, args.samples, seed.child(2 * idx), workers=args.workers)
        est_d = mc_run(d_fn, args.samples, seed.child(2 * idx + 1), workers=args.workers)
        report.add_estimate("E[g(Y)] %s" % g.label, est_y)
        report.add_estimate("E[g(D)] %s" % g.label, est_d)
    return _emit(report, args)


def cmd_verify_regression(args) -> int:
    kind, model = _load_model(args.model)
    if model.n > 12:
        raise UsageError(
            "verify-regression enumerates all pairs; n = %d exceeds the "
            "n <= 12 guard (use a smaller model)" % model.n
        )
    dim = 2 if kind == "graph" else 1
    funcs = _functionals(args.functional, dim)
    report = _report(
        args,
        "verify-regression",
        {"model": args.model, "kind": kind, "trials": args.trials,
         "tol": args.tol, "functionals": [g.label for g in funcs]},
    )
    worst = 0.0
    for trial in range(args.trials):
        rng = SeedSpec(args.seed, (trial,)).rng()
        real = (
            gr.sample_graph(model, rng)
            if kind == "graph"
            else comb.sample_y(model, rng)
        )
        residual = (
            gr.regression_residual if kind == "graph" else comb.regression_residual
        )
        for g in funcs:
            worst = max(worst, residual(real, g))
    report.add_estimate("max_residual", from_values([worst, worst]))
    report.add_check(
        "regression_identity", worst < args.tol, args.tol, "max residual %.3e" % worst
    )
    return _emit(report, args)


def _verify_covariance_graph(model, args, report):
    n, p = model.n, model.p
    rng = SeedSpec(args.seed, (0,)).rng()
    worst = {"edge_block_identity": 0.0, "cross_block_identity": 0.0,
             "twostar_block_identity": 0.0}
    for _ in range(64):
        nn = int(rng.integers(3, 40))
        pp = float(rng.uniform(0.05, 0.95))
        t = F(int(rng.integers(0, 101)), 100)
        u = F(int(rng.integers(0, 101)), 100)
        b = gr.brownian_side_cov(nn, pp, t, u)

        def rel(x, y):
            return abs(x - y) / max(abs(x), abs(y), 1e-30)

        worst["edge_block_identity"] = max(
            worst["edge_block_identity"], rel(gr.cov_d1d1(nn, pp, t, u), b[0, 0])
        )
        worst["cross_block_identity"] = max(
            worst["cross_block_identity"], rel(gr.cov_d1d2(nn, pp, t, u), b[0, 1])
        )
        worst["twostar_block_identity"] = max(
            worst["twostar_block_identity"], rel(gr.cov_d2d2(nn, pp, t, u), b[1, 1])
        )
    for name, val in worst.items():
        report.add_check(name, val <= args.tol, args.tol, "max rel diff %.3e" % val)

    times = [F(k, args.grid) for k in range(1, args.grid + 1)] if args.grid else [F(0)]
    pc = gr.prelimit_cov(model)
    vacuous = all(int(n * t) <= 1 for t in times)
    labels = {(0, 0): "TT", (0, 1): "TV", (1, 1): "VV"}
    for (i, j), lab in labels.items():
        gap = max(
            abs(float(gr.cov_tv(model, t)[i, j]) - pc.block(t, t)[i, j])
            for t in times
        )
        detail = "max abs diff %.3e" % gap
        if vacuous:
            detail += " (degenerate grid, vacuous)"
        report.add_check("cov_tv_vs_prelimit_%s" % lab, gap <= 1e-12, 1e-12, detail)

    grid_cov = pc.grid(times)
    eig_min = float(np.linalg.eigvalsh(grid_cov).min()) if times else 0.0
    report.add_check("prelimit_grid_psd", eig_min >= -1e-9, -1e-9, "min eig %.3e" % eig_min)

    if args.samples > 0 and not vacuous:
        vals_parts = []
        done, idx = 0, 0
        while done < args.samples:
            size = min(8192, args.samples - done)
            vals_parts.append(
                gr.sample_dn_values(model, SeedSpec(args.seed, (1, idx)).rng(), size)
            )
            done += size
            idx += 1
        vals = np.concatenate(vals_parts, axis=0)
        worst_z = 0.0
        for t in times:
            k = int(n * t)
            block = pc.block(t, t)
            for (i, j), lab in labels.items():
                est = from_values(vals[:, k, i] * vals[:, k, j])
                if est.stderr > 0:
                    worst_z = max(worst_z, abs(est.mean - block[i, j]) / est.stderr)
        report.add_check(
            "sampler_vs_closed_form_mc",
            worst_z <= 5.0,
            "5 stderr",
            "max |z| %.2f over %d samples" % (worst_z, args.samples),
        )


def _verify_covariance_array(model, args, report):
    n = model.n
    zc = comb.zhat_cov_matrix(model)
    if args.samples > 0:
        zhat = comb.sample_zhat_values(
            model, SeedSpec(args.seed, (1,)).rng(), args.samples
        )
        worst_z = 0.0
        for i in range(n):
            for j in range(n):
                est = from_values(zhat[:, i] * zhat[:, j])
                if est.stderr > 0:
                    worst_z = max(worst_z, abs(est.mean - zc[i, j]) / est.stderr)
        report.add_check(
            "zhat_cov_mc",
            worst_z <= 5.0,
            "5 stderr",
            "max |z| %.2f over %d samples" % (worst_z, args.samples),
        )
        dn = comb.sample_dn_values(model, SeedSpec(args.seed, (2,)).rng(), args.samples)
        times = [F(k, args.grid) for k in range(1, args.grid + 1)] if args.grid else []
        worst_z = 0.0
        for s in times:
            for t in times:
                est = from_values(dn[:, int(n * s)] * dn[:, int(n * t)])
                if est.stderr > 0:
                    worst_z = max(
                        worst_z, abs(est.mean - comb.cov_d(model, s, t)) / est.stderr
                    )
        report.add_check(
            "dn_grid_cov_mc", worst_z <= 5.0, "5 stderr", "max |z| %.2f" % worst_z
        )


def cmd_verify_covariance(args) -> int:
    kind, model = _load_model(args.model)
    report = _report(
        args,
        "verify-covariance",
        {"model": args.model, "kind": kind, "grid": args.grid,
         "tol": args.tol, "samples": args.samples},
    )
    if kind == "graph":
        _verify_covariance_graph(model, args, report)
    else:
        _verify_covariance_array(model, args, report)
    return _emit(report, args)


def cmd_distance(args) -> int:
    kind, model = _load_model(args.model)
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    dim = 2 if kind == "graph" else 1
    funcs = _functionals(args.functional, dim)
    report = _report(
        args,
        "distance",
        {"model": args.model, "kind": kind, "samples": args.samples,
         "functionals": [g.label for g in funcs]},
    )
    seed = SeedSpec(args.seed)
    for idx, g in enumerate(funcs):
        try:
            norm_class = "M2" if kind == "graph" else "M1"
            gnorm = norm_upper_bound(g, norm_class).value
        except UnsupportedFunctionalError as exc:
            raise UsageError(str(exc)) from exc
        y_fn, d_fn = _gap_sampler(kind, model, g)
        est_y = mc_run(y_fn, args.samples, seed.child(2 * idx), workers=args.workers)
        est_d = mc_run(d_fn, args.samples, seed.child(2 * idx + 1), workers=args.workers)
        gap = abs(est_y.mean - est_d.mean)
        ci = 1.96 * math.hypot(est_y.stderr, est_d.stderr)
        bound = (
            gr.bound_prelimit(model.n, gnorm)
            if kind == "graph"
            else comb.bound_prelimit_distance(model, gnorm)
        )
        report.add_estimate("E[g(Y)] %s" % g.label, est_y)
        report.add_estimate("E[g(D)] %s" % g.label, est_d)
        report.add_estimate("gap %s" % g.label, from_values([gap, gap]))
        report.add_bound("bound %s" % g.label, bound)
        report.add_check(
            "distance_within_bound %s" % g.label,
            gap - ci <= bound,
            "gap - ci95 <= bound",
            "gap %.4g, ci %.4g, bound %.4g (|g| <= %.4g)" % (gap, ci, bound, gnorm),
        )
    return _emit(report, args)


def cmd_coupling(args) -> int:
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    model = gr.GraphModel(args.n, args.p)
    rep = gr.coupling_distance(model, args.samples, SeedSpec(args.seed))
    report = _report(
        args,
        "coupling",
        {"n": args.n, "p": args.p, "samples": args.samples,
         "refine": rep["refine"],
         "discretization_bias_bound": rep["discretization_bias_bound"],
         "corr_at_one": rep["corr_at_one"]},
    )
    for name, est in rep["estimates"].items():
        report.add_estimate(name, est)
        report.add_bound("bound %s" % name, rep["bounds"][name])
        report.add_check(
            "coupling_%s" % name,
            rep["passes"][name],
            rep["bounds"][name],
            "estimate %.4g <= bound %.4g" % (est.mean, rep["bounds"][name]),
        )
    return _emit(report, args)


def cmd_bound(args) -> int:
    kind, model = _load_model(args.model)
    report = _report(
        args, "bound", {"model": args.model, "kind": kind, "gnorm": args.gnorm}
    )
    if kind == "graph":
        report.add_bound("prelimit_12g_over_n", gr.bound_prelimit(model.n, args.gnorm))
        report.add_bound(
            "continuous_sqrt_log", gr.bound_continuous(model.n, args.gnorm)
        )
        for name, val in gr.coupling_bounds(model.n).items():
            report.add_bound("coupling_%s" % name, val)
    else:
        rep = comb.bound_prelimit_distance_report(model, args.gnorm)
        for key, val in rep.items():
            report.add_bound(key, val)
        beta3 = float(model.abs3.max())
        report.add_bound(
            "simplified_beta3",
            comb.bound_beta3(
                model.n,
                model.s_n,
                beta3,
                model.c,
                float(model.sigma2.sum()),
                args.gnorm,
            ),
        )
    return _emit(report, args)


def cmd_stein_identity(args) -> int:
    kind, model = _load_model(args.model)
    if args.samples < 2:
        raise UsageError("--samples must be at least 2")
    dim = 2 if kind == "graph" else 1
    funcs = _functionals(args.functional, dim)
    law = ou.graph_law(model) if kind == "graph" else ou.combinatorial_law(model)
    report = _report(
        args,
        "stein-identity",
        {"model": args.model, "kind": kind, "samples": args.samples,
         "scale": args.scale,
         "functionals": [g.label for g in funcs]},
    )
    for idx, g in enumerate(funcs):
        est = ou.stein_identity_residual(
            g, law, args.samples, SeedSpec(args.seed, (idx,)), scale=args.scale,
            workers=args.workers,
        )
        report.add_estimate("mean_generator %s" % g.label, est)
        report.add_check(
            "stein_identity %s" % g.label,
            abs(est.mean) <= 3.0 * est.stderr,
            "3 stderr",
            "|mean| %.3e vs 3 se %.3e" % (abs(est.mean), 3 * est.stderr),
        )
    return _emit(report, args)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steinpaths",
        description="simulate and verify exchangeable-pair Gaussian "
        "approximations of step processes",
        epilog=FUNCTIONAL_SPEC_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True, samples=None):
        if model:
            p.add_argument("--model", required=True, help="model JSON file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default=None, help="write the report here")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--tol", type=float, default=None)
        if samples is not None:
            p.add_argument("--samples", type=int, default=samples)

    p = sub.add_parser("simulate", help="estimate E g under both processes")
    common(p, samples=10000)
    p.add_argument("--functional", action="append", default=[])
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("verify-regression", help="enumerated regression identity")
    common(p)
    p.add_argument("--functional", action="append", default=[])
    p.add_argument("--trials", type=int, default=5)
    p.set_defaults(fn=cmd_verify_regression, default_tol=1e-9)

    p = sub.add_parser("verify-covariance", help="covariance identities and MC")
    common(p, samples=20000)
    p.add_argument("--grid", type=int, default=8)
    p.set_defaults(fn=cmd_verify_covariance, default_tol=1e-10)

    p = sub.add_parser("distance", help="Monte Carlo distance vs closed-form bound")
    common(p, samples=100000)
    p.add_argument("--functional", action="append", default=[])
    p.set_defaults(fn=cmd_distance)

    p = sub.add_parser("coupling", help="coupled step/continuous moments")
    common(p, model=False, samples=10000)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.set_defaults(fn=cmd_coupling)

    p = sub.add_parser("bound", help="closed-form bound values")
    common(p)
    p.add_argument("--gnorm", type=float, default=1.0)
    p.set_defaults(fn=cmd_bound)

    p = sub.add_parser("stein-identity", help="stationarity of the generator")
    common(p, samples=100000)
    p.add_argument("--functional", action="append", default=[])
    p.add_argument("--scale", type=float, default=1.0)
    p.set_defaults(fn=cmd_stein_identity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    if args.tol is None:
        args.tol = getattr(args, "default_tol", 1e-9)
    try:
        return args.fn(args)
    except (UsageError, FileNotFoundError) as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return USAGE_ERROR
    except (comb.ModelError, gr.GraphModelError, FunctionalError) as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
