"""Command-line interface.

Subcommands: simulate (Monte Carlo study), select (run the selection on
a CSV), knockoffs (emit a knockoff matrix), diagnose (FDR-bound report),
fredmd (rolling-window macro pipeline). Every subcommand is
deterministic given its flags, including --seed, and independent of
--threads. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import diagnostics, fredmd, simulate
from .errors import TskiError
from .filters import FilterParams, tski_run
from .knockoffs import GaussianKnockoffModel, ShrinkageConfig, exact_model_from_truth, fit_knockoff_model, sample_knockoffs
from .lasso import LassoConfig
from .numerics import RngStream

USAGE_ERROR = 2
RUNTIME_ERROR = 1


class UsageError(Exception):
    pass


def _threads(value):
    if value is not None:
        return value
    env = os.environ.get("TSKI_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"TSKI_THREADS must be an integer, got {env!r}")
    return 1


def _filter_params(args):
    try:
        lasso = LassoConfig() if args.lam is None else LassoConfig(lam=args.lam)
        return FilterParams(
            q=args.q,
            tau_star=args.tau_fdr,
            tau1=args.tau1,
            statistic=args.stat,
            lasso=lasso,
        )
    except ValueError as exc:
        raise UsageError(str(exc))


def _check_positive(value, name):
    if value < 1:
        raise UsageError(f"{name} must be >= 1, got {value}")
    return value


def _check_seed(seed):
    if seed < 0:
        raise UsageError(f"seed must be nonnegative, got {seed}")
    return seed


def _add_filter_flags(sub, with_stat=True):
    sub.add_argument("--q", type=int, default=0, help="number of subsamples minus one")
    sub.add_argument("--tau-fdr", type=float, default=0.2, help="target FDR level")
    sub.add_argument("--tau1", type=float, default=None,
                     help="per-subsample threshold level (default tau_fdr/(q+1))")
    sub.add_argument("--lam", type=float, default=None,
                     help="fixed Lasso lambda (default: 5-fold CV)")
    if with_stat:
        sub.add_argument("--stat", choices=["lcd", "mda"], default="lcd")


def _read_numeric_csv(path):
    """Header + float matrix; empty cells are not allowed here."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if len(rows) < 2:
        raise UsageError(f"{path}: need a header row and at least one data row")
    header = [c.strip() for c in rows[0]]
    try:
        data = np.array([[float(c) for c in row] for row in rows[1:]])
    except ValueError as exc:
        raise UsageError(f"{path}: non-numeric cell ({exc})")
    if data.shape[1] != len(header):
        raise UsageError(f"{path}: ragged rows")
    return header, data


def _fmt(x):
    return f"{x:.17g}"


def cmd_simulate(args):
    try:
        spec = simulate.DgpSpec(model=args.model, beta=args.beta, n=args.n)
    except ValueError as exc:
        raise UsageError(str(exc))
    params = _filter_params(args)
    _check_positive(args.reps, "reps")
    _check_seed(args.seed)
    report = simulate.monte_carlo(spec, params, args.reps, args.seed, workers=_threads(args.threads))
    if args.format == "json":
        simulate.write_report_json(report, args.output)
    else:
        simulate.write_report_csv(report, args.output)
    print(f"wrote {args.output}: fdr={report.fdr:.4f} power={report.power:.4f} over {report.reps} reps")
    return 0


def cmd_select(args):
    header, data = _read_numeric_csv(args.data)
    if args.response not in header:
        raise UsageError(f"response column {args.response!r} not found")
    r = header.index(args.response)
    y = data[:, r]
    x = np.delete(data, r, axis=1)
    names = [h for i, h in enumerate(header) if i != r]
    params = _filter_params(args)
    _check_seed(args.seed)
    if x.shape[0] < params.q + 1:
        raise UsageError(f"TooFewObservations: n={x.shape[0]} rows cannot form {params.q + 1} subsamples")
    min_selectable = math.ceil(1.0 / params.effective_tau1())
    if x.shape[1] < min_selectable:
        print(
            f"note: each subsample filter can only select {min_selectable}+ variables at "
            f"tau1={params.effective_tau1():.4g}, but only {x.shape[1]} columns exist; "
            "the selection will be empty (lower q or raise --tau-fdr)",
            file=sys.stderr,
        )
    rng = RngStream(args.seed)
    model = fit_knockoff_model(x, ShrinkageConfig())
    result = tski_run(y, x, model, params, rng)
    payload = result.to_json_dict()
    payload["columns"] = names
    payload["selected_names"] = [names[j - 1] for j in result.selected]
    with open(args.output, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.output}: selected {len(result.selected)} of {x.shape[1]}")
    return 0


def cmd_knockoffs(args):
    header, x = _read_numeric_csv(args.data)
    _check_seed(args.seed)
    rng = RngStream(args.seed)
    if args.d_zero:
        p = x.shape[1]
        model = GaussianKnockoffModel(
            mu=np.zeros(p), sigma_hat=np.eye(p), omega_hat=np.eye(p),
            d=np.zeros(p), cond_mean_mat=np.eye(p), cond_cov_chol=np.zeros((p, p)),
        )
    else:
        model = fit_knockoff_model(x, ShrinkageConfig())
    xt = sample_knockoffs(model, x, rng)
    buf = io.StringIO()
    buf.write(",".join("~" + h for h in header) + "\n")
    for row in xt:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    with open(args.output, "w") as fh:
        fh.write(buf.getvalue())
    print(f"wrote {args.output}: {xt.shape[0]} rows, {xt.shape[1]} columns")
    return 0


def cmd_diagnose(args):
    if args.c0 is None:
        raise UsageError("--c0 is required")
    if args.rho is None:
        raise UsageError("--rho is required")
    _check_seed(args.seed)
    _check_positive(args.reps, "reps")
    rng = RngStream(args.seed)
    if args.data is not None:
        _, x = _read_numeric_csv(args.data)
        model = fit_knockoff_model(x, ShrinkageConfig())
        # reference law: the unshrunk covariance (only requires PD)
        reference = fit_knockoff_model(x, ShrinkageConfig(gamma=0.0, eigen_floor=1e-10))
        xt = sample_knockoffs(model, x, rng.child(0))
        kl = diagnostics.kl_plugin_from_data(reference.sigma_hat, model, x, xt, args.q)
        mode = "plugin-surrogate"
        n_rows = x.shape[0]
    else:
        idx = np.arange(args.p)
        sigma = 0.5 ** np.abs(idx[:, None] - idx[None, :])
        model = exact_model_from_truth(sigma)
        if args.gamma is not None:
            gen = rng.child(99).generator()
            chol = np.linalg.cholesky(sigma)
            sample = gen.standard_normal((args.n, args.p)) @ chol.T
            model = fit_knockoff_model(sample, ShrinkageConfig(gamma=args.gamma))
        kl = diagnostics.kl_draws_from_simulation(sigma, model, args.n, args.q, args.reps, rng.child(1))
        mode = "simulation"
        n_rows = args.n
    mix = diagnostics.mixing_bound(
        diagnostics.MixingBoundParams(c0=args.c0, rho=args.rho, q=args.q, n=n_rows)
    )
    report = diagnostics.fdr_bound_report(kl, args.tau_fdr, mix)
    report["mode"] = mode
    report["q"] = args.q
    report["kl_max_per_subsample"] = [
        float(np.max([np.max(draw[k]) for draw in kl.draws]))
        for k in range(kl.n_subsamples)
    ]
    with open(args.output, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {args.output}: bound={report['bound']:.5f} (mode {mode})")
    return 0


def cmd_fredmd(args):
    with open(args.panel, "rb") as fh:
        panel = fredmd.parse_panel(fh.read())
    design = fredmd.build_rolling(panel, window_months=args.window, response=args.response)
    params = _filter_params(args)
    _check_positive(args.repeats, "repeats")
    _check_seed(args.seed)
    report = fredmd.rolling_inference(design, params, args.repeats, RngStream(args.seed))
    run_meta = {
        "seed": args.seed,
        "q": params.q,
        "statistic": params.statistic,
        "tau_star": params.tau_star,
        "tau1": params.effective_tau1(),
    }
    paths = fredmd.write_frequency_csvs(report, design, args.output_prefix, run_meta)
    print(f"wrote {', '.join(paths)}: {len(design.windows)} windows, {args.repeats} repeats")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="tski", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="Monte Carlo FDR/power study")
    sim.add_argument("--model", choices=list(simulate.MODELS), required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--beta", type=float, required=True)
    sim.add_argument("--reps", type=int, default=200)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--threads", type=int, default=None)
    sim.add_argument("--output", default="mc_report.csv")
    sim.add_argument("--format", choices=["csv", "json"], default="csv")
    _add_filter_flags(sim)
    sim.set_defaults(func=cmd_simulate)

    sel = subs.add_parser("select", help="run selection on a numeric CSV")
    sel.add_argument("--data", required=True)
    sel.add_argument("--response", required=True, help="name of the response column")
    sel.add_argument("--seed", type=int, default=0)
    sel.add_argument("--output", default="selection.json")
    _add_filter_flags(sel)
    sel.set_defaults(func=cmd_select)

    kn = subs.add_parser("knockoffs", help="emit a knockoff copy of a numeric CSV")
    kn.add_argument("--data", required=True)
    kn.add_argument("--seed", type=int, default=0)
    kn.add_argument("--output", default="knockoffs.csv")
    kn.add_argument("--d-zero", action="store_true",
                    help="debug: force D = 0 so knockoffs equal the input")
    kn.set_defaults(func=cmd_knockoffs)

    diag = subs.add_parser("diagnose", help="FDR-bound report")
    diag.add_argument("--data", default=None, help="numeric CSV (default: synthetic study)")
    diag.add_argument("--p", type=int, default=20)
    diag.add_argument("--n", type=int, default=200)
    diag.add_argument("--q", type=int, default=0)
    diag.add_argument("--reps", type=int, default=50)
    diag.add_argument("--gamma", type=float, default=None,
                      help="fit a shrunk model at this gamma instead of the exact one")
    diag.add_argument("--c0", type=float, default=None)
    diag.add_argument("--rho", type=float, default=None)
    diag.add_argument("--tau-fdr", type=float, default=0.2)
    diag.add_argument("--seed", type=int, default=0)
    diag.add_argument("--output", default="diagnostics.json")
    diag.set_defaults(func=cmd_diagnose)

    fm = subs.add_parser("fredmd", help="rolling-window macro pipeline")
    fm.add_argument("--panel", required=True, help="FRED-MD layout CSV")
    fm.add_argument("--window", type=int, default=fredmd.WINDOW_MONTHS)
    fm.add_argument("--response", default=fredmd.DEFAULT_RESPONSE)
    fm.add_argument("--repeats", type=int, default=100)
    fm.add_argument("--seed", type=int, default=0)
    fm.add_argument("--output-prefix", default="fredmd")
    _add_filter_flags(fm)
    fm.set_defaults(func=cmd_fredmd)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_ERROR
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (TskiError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
