"""Command-line interface: ``tarnet {simulate,fit,forecast,transform,experiment,inspect}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import TrainConfig, build_design, fit_lr, fit_ltr, fit_ols, parameter_count
from .experiments import (
    build_experiment_config,
    emit_report,
    format_table,
    read_config,
    run_experiment,
)
from .persistence import ModelFormatError, load_model, save_model
from .pipeline import (
    DataError,
    Series,
    evaluate,
    read_series_csv,
    rolling_forecast,
    standardize,
    transform_series,
    write_series_csv,
)
from .tar_net import ACTIVATIONS, LAYERS, train_tar
from .var_process import (
    GenerationDivergedError,
    NonStationaryError,
    dgp_weights,
    generate_l_dgp,
    generate_nl_dgp,
    spectral_summary,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ranks(text: str) -> tuple[int, int, int]:
    try:
        parts = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"ranks must be integers r1,r2,r3, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"ranks must be three integers r1,r2,r3, got {text!r}")
    return parts


def _layers(text: str) -> tuple[str, ...]:
    parts = tuple(v for v in text.split(",") if v)
    if not parts or set(parts) - set(LAYERS):
        raise argparse.ArgumentTypeError(f"placement must be a comma list drawn from {LAYERS}")
    return parts


def _add_training(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training (override [training] config keys)")
    defaults = TrainConfig()
    g.add_argument("--learning-rate", type=float, help=f"step size (default {defaults.learning_rate})")
    g.add_argument("--momentum", type=float, help=f"momentum coefficient (default {defaults.momentum})")
    g.add_argument("--loss-drop-tolerance", type=float,
                   help=f"stop once the loss changes by less than this (default {defaults.loss_drop_tolerance})")
    g.add_argument("--max-epochs", type=int, help=f"epoch cap (default {defaults.max_epochs})")
    g.add_argument("--seed", type=int, help="initialization seed (default 0)")
    g.add_argument("--init-scale", type=float, help=f"std of the initial weights (default {defaults.init_scale})")
    g.add_argument("--divergence-retries", type=int,
                   help=f"restarts with a halved learning rate after divergence (default {defaults.divergence_retries})")


def _training_overrides(args) -> dict:
    names = ("learning_rate", "momentum", "loss_drop_tolerance", "max_epochs", "seed", "init_scale",
             "divergence_retries")
    return {k: getattr(args, k) for k in names if getattr(args, k, None) is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tarnet", description="Low-Tucker-rank autoregression toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a low-Tucker-rank VAR sequence",
                       description="Simulate T + P rows of a stationary low-Tucker-rank process and "
                                   "write them as a series CSV plus a JSON sidecar with the true weights "
                                   "and spectral dependence summary.")
    p.add_argument("--n", type=int, required=True, help="number of variables N")
    p.add_argument("--p", type=int, required=True, help="lag order P")
    p.add_argument("--ranks", type=_ranks, required=True, help="Tucker ranks r1,r2,r3")
    p.add_argument("--t", type=int, required=True, help="effective sample size T (rows written: T + P)")
    p.add_argument("--burn-in", type=int, default=500, help="discarded warm-up steps (default 500)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--dgp", choices=("ltr", "nl"), default="ltr",
                   help="linear low-Tucker-rank process or its cosine-gated nonlinear variant")
    p.add_argument("--out", type=Path, required=True, help="output series CSV")
    p.add_argument("--sidecar", type=Path, help="sidecar JSON path (default: OUT with .json suffix)")

    p = sub.add_parser("fit", help="fit an estimator or network and save the model",
                       description="Fit OLS, LR, LTR, TAR or TAR-2 on a series CSV and write the model JSON.")
    p.add_argument("--method", choices=("ols", "lr", "ltr", "tar", "tar2"), required=True, help="estimator")
    p.add_argument("--ranks", type=_ranks, help="Tucker ranks r1,r2,r3 (ltr, tar, tar2)")
    p.add_argument("--r", type=int, help="matrix rank (lr)")
    p.add_argument("--lags", type=int, required=True, help="lag order P")
    p.add_argument("--input", type=Path, required=True, help="series CSV")
    p.add_argument("--codes-row", action="store_true", help="the CSV has a transform-code row (applied before fitting)")
    p.add_argument("--model-out", type=Path, required=True, help="model JSON to write")
    p.add_argument("--bias", action="store_true", help="trainable output bias (tar, tar2)")
    p.add_argument("--activation", choices=ACTIVATIONS, default="relu", help="network activation (default relu)")
    p.add_argument("--placement", type=_layers, default=LAYERS,
                   help="layers that get the activation, comma list of c1,c2,f1 (default all)")
    _add_training(p)

    p = sub.add_parser("forecast", help="rolling one-step-ahead forecasts from a saved model",
                       description="Forecast rows TRAIN_LEN .. TRAIN_LEN+TEST_LEN-1 one step ahead from the "
                                   "P true rows before each, without refitting, and report l2/rmse/mae.")
    p.add_argument("--model", type=Path, required=True, help="model JSON")
    p.add_argument("--input", type=Path, required=True, help="series CSV")
    p.add_argument("--codes-row", action="store_true", help="the CSV has a transform-code row (applied first)")
    p.add_argument("--train-len", type=int, required=True, help="rows before the first forecast")
    p.add_argument("--test-len", type=int, required=True, help="number of one-step forecasts")
    p.add_argument("--out", type=Path, help="predictions CSV (one row per step)")
    p.add_argument("--per-variable", metavar="NAME", help="also write a truth/prediction trace for this variable")
    p.add_argument("--trace-out", type=Path, help="trace CSV path (default: <NAME>_trace.csv)")

    p = sub.add_parser("transform", help="apply transform codes and optional standardization",
                       description="Apply per-variable transform codes 1-6 (from the CSV's code row or --codes), "
                                   "align columns, optionally standardize, and write a series CSV.")
    p.add_argument("--input", type=Path, required=True, help="series CSV")
    p.add_argument("--output", type=Path, required=True, help="transformed series CSV")
    p.add_argument("--codes", help="comma list of codes; otherwise read from the CSV's code row")
    p.add_argument("--standardize", action="store_true", help="zero mean, unit variance")
    p.add_argument("--stats-rows", type=int,
                   help="standardize with statistics of the first STATS_ROWS rows (default all)")

    p = sub.add_parser("experiment", help="run a replicated study from a config file",
                       description="Run a study and write records CSV, aggregate JSON, plot CSV and timing CSV. "
                                   "Command-line flags override the config file.")
    p.add_argument("--kind", choices=("sample-complexity", "dgp-comparison", "macro"), required=True,
                   help="which study")
    p.add_argument("--config", type=Path, required=True, help="INI file with [grid], [training], [output]")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a [grid] key, e.g. --set ratios=0.15,0.25 (repeatable)")
    p.add_argument("--master-seed", type=int, help="overrides [grid] master_seed")
    p.add_argument("--replications", type=int, help="overrides [grid] replications")
    p.add_argument("--data", help="macro: dataset CSV, overrides [grid] data_path")
    p.add_argument("--out-dir", type=Path, help="overrides [output] dir (default reports)")
    p.add_argument("--workers", type=int,
                   help="overrides [output] workers; 1 runs sequentially (default TARNET_THREADS or all CPUs)")
    _add_training(p)

    p = sub.add_parser("inspect", help="summarize a saved model",
                       description="Print kind, dimensions, ranks, parameter count and training info of a model JSON.")
    p.add_argument("--model", type=Path, required=True, help="model JSON")
    return parser


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _load_series(path, codes_row: bool) -> Series:
    s = read_series_csv(path, with_codes=codes_row)
    return transform_series(s) if codes_row else s


def cmd_simulate(args) -> int:
    if min(args.n, args.p, args.t) < 1 or args.burn_in < 0:
        raise UsageError("--n, --p and --t must be positive and --burn-in nonnegative")
    try:
        if args.dgp == "ltr":
            series, weights = generate_l_dgp(args.n, args.p, args.ranks, args.t, args.burn_in, seed=args.seed)
        else:
            series = generate_nl_dgp(args.n, args.p, args.ranks, args.t, args.burn_in, seed=args.seed)
            weights = dgp_weights(args.n, args.p, args.ranks, seed=args.seed)
    except NonStationaryError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    write_series_csv(Series(series), args.out)
    summary = spectral_summary(weights)
    sidecar = args.sidecar or args.out.with_suffix(".json")
    doc = {
        "n": args.n, "p": args.p, "ranks": list(args.ranks), "t": args.t, "burn_in": args.burn_in,
        "seed": args.seed, "dgp": args.dgp,
        "weights": {"dims": list(weights.w.shape), "data": weights.w.ravel().tolist()},
        "spectral": {"mu_min": summary.mu_min, "mu_max": summary.mu_max,
                     "m_constant": summary.m_constant, "grid_points": summary.grid_points},
    }
    with open(sidecar, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    print(f"wrote {len(series)} rows to {args.out}; sidecar {sidecar}")
    print(f"mu_min {summary.mu_min:.4f}  mu_max {summary.mu_max:.4f}  M {summary.m_constant:.4f}")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = dataclasses.replace(TrainConfig(), **_training_overrides(args))
    if args.method == "lr" and args.r is None:
        raise UsageError("--method lr needs --r")
    if args.method in ("ltr", "tar", "tar2") and args.ranks is None:
        raise UsageError(f"--method {args.method} needs --ranks")
    s = _load_series(args.input, args.codes_row)
    if len(s) < args.lags + 1:
        raise DataError(f"{args.input}: {len(s)} rows cannot supply lag order {args.lags}")
    d = build_design(s.values, args.lags)
    try:
        if args.method == "ols":
            fit = fit_ols(d)
        elif args.method == "lr":
            fit = fit_lr(d, args.r, cfg)
        elif args.method == "ltr":
            fit = fit_ltr(d, args.ranks, cfg)
        else:
            fit = train_tar(d, args.method, args.ranks, cfg, with_bias=args.bias,
                            activation=args.activation, placement=args.placement)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    save_model(fit, args.model_out)
    print(f"method {args.method}  final_loss {fit.final_loss:.6g}  epochs {fit.epochs_run}  "
          f"parameters {_count(fit)}")
    if fit.learning_rate is not None and fit.learning_rate != cfg.learning_rate:
        print(f"note: training diverged at the configured learning rate; finished at {fit.learning_rate:g}")
    if fit.non_unique:
        print("warning: the least-squares solution is not unique (rank-deficient design)")
    return EXIT_OK


def _count(fit) -> int:
    if fit.kind == "ols":
        return parameter_count("ols", fit.n, fit.p)
    if fit.kind == "lr":
        return parameter_count("lr", fit.n, fit.p, fit.r)
    return parameter_count(fit.kind, fit.n, fit.p, fit.ranks, bias=fit.bias is not None)


def cmd_forecast(args) -> int:
    fit = load_model(args.model)
    s = _load_series(args.input, args.codes_row)
    if s.n != fit.n:
        raise DataError(f"model expects N={fit.n} variables (P={fit.p}); {args.input} has N={s.n}")
    preds = rolling_forecast(fit, s.values, args.train_len, args.test_len)
    truth = s.values[args.train_len : args.train_len + args.test_len].T
    m = evaluate(preds, truth)
    if args.out:
        write_series_csv(Series(preds.T, list(s.names)), args.out)
    if args.per_variable:
        j = s.names.index(args.per_variable) if args.per_variable in s.names else None
        if j is None:
            raise DataError(f"unknown variable {args.per_variable!r}")
        path = args.trace_out or Path(f"{args.per_variable}_trace.csv")
        with open(path, "w") as fh:
            fh.write("step,truth,prediction\n")
            for k in range(args.test_len):
                fh.write(f"{k},{truth[j, k]:.17g},{preds[j, k]:.17g}\n")
    print(format_table([m], ["l2_norm", "rmse", "mae"]))
    return EXIT_OK


def cmd_transform(args) -> int:
    if args.codes:
        try:
            codes = [int(c) for c in args.codes.split(",")]
        except ValueError:
            raise UsageError("--codes must be a comma list of integers") from None
        s = transform_series(read_series_csv(args.input), codes)
    else:
        s = transform_series(read_series_csv(args.input, with_codes=True))
    if args.standardize:
        rows = slice(0, args.stats_rows) if args.stats_rows else slice(None)
        s, _ = standardize(s, rows)
    write_series_csv(s, args.output)
    print(f"wrote {len(s)} rows x {s.n} variables to {args.output}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        sections = read_config(args.config)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    grid = dict(sections["grid"])
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        grid[k.strip()] = v.strip()
    if args.master_seed is not None:
        grid["master_seed"] = str(args.master_seed)
    if args.replications is not None:
        grid["replications"] = str(args.replications)
    if args.data is not None:
        grid["data_path"] = args.data
    training = dict(sections["training"])
    training.update({k: str(v) for k, v in _training_overrides(args).items()})
    try:
        cfg = build_experiment_config(args.kind, grid, training)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    output = sections["output"]
    out_dir = args.out_dir or Path(output.get("dir", "reports"))
    workers = args.workers if args.workers is not None else (int(output["workers"]) if "workers" in output else None)
    records, macro = run_experiment(cfg, workers)
    paths = emit_report(records, out_dir, cfg.master_seed, macro)
    from .experiments import aggregate

    rows = aggregate(records)
    metric = "error" if args.kind == "sample-complexity" else "l2_norm"
    cols = {"sample-complexity": ["estimator", "n", "p", "ranks", "ratio", "t"],
            "dgp-comparison": ["dgp", "estimator", "n", "p", "t"],
            "macro": ["estimator"]}[args.kind]
    extra = [] if args.kind == "sample-complexity" else ["rmse_mean", "mae_mean"]
    print(format_table(rows, cols + ["count", f"{metric}_mean", f"{metric}_se"] + extra))
    for k, v in paths.items():
        print(f"{k}: {v}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    fit = load_model(args.model)
    print(f"kind        {fit.kind}")
    if fit.kind in ("tar", "tar2"):
        print(f"activation  {fit.net.activation}")
    print(f"n           {fit.n}")
    print(f"p           {fit.p}")
    if fit.ranks is not None:
        print(f"ranks       {','.join(map(str, fit.ranks))}")
    if fit.r is not None:
        print(f"r           {fit.r}")
    print(f"parameters  {_count(fit)}")
    print(f"epochs      {fit.epochs_run}")
    print(f"final_loss  {fit.final_loss:.6g}")
    if fit.learning_rate is not None:
        print(f"learning_rate {fit.learning_rate:g}")
    print(f"seed        {fit.seed}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "transform": cmd_transform,
    "experiment": cmd_experiment,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"tarnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelFormatError) as exc:
        print(f"tarnet {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, GenerationDivergedError, NonStationaryError, np.linalg.LinAlgError) as exc:
        print(f"tarnet {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"tarnet {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
