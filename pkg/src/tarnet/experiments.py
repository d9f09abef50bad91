"""Replicated studies: sample complexity, DGP comparison, macro forecasting benchmark.

Every replication gets its own seeds derived from ``(master_seed, stream,
cell, replication)`` through :class:`numpy.random.SeedSequence`, so results do
not depend on execution order and parallel runs reproduce sequential ones.
Fits run with BLAS pinned to a single thread for the same reason.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .estimators import (
    TrainConfig,
    build_design,
    estimation_error,
    fit_lr,
    fit_ltr,
    fit_ols,
)
from .pipeline import (
    MACRO_VARIABLES,
    DataError,
    Series,
    evaluate,
    read_series_csv,
    rolling_forecast,
    standardize,
    transform_series,
)
from .tar_net import train_tar
from .var_process import (
    DEFAULT_BURN_IN,
    NoiseSpec,
    generate_l_dgp,
    generate_low_tucker_weights,
    generate_nl_dgp,
    simulate_var,
)

LINEAR_ESTIMATORS = ("ols", "lr", "ltr")
NET_ARCHS = ("ltar", "tar", "tar2")
MACRO_MODELS = ("mlp0", "mlp1", "ltar", "tar", "tar2")

# independent seed streams
_WEIGHTS, _REPLICATION, _SEQUENCE, _MACRO = 1, 2, 3, 4


def derive_seeds(master_seed: int, *key: int, count: int = 2) -> list[int]:
    """`count` independent 63-bit integer seeds for one replication key."""
    ss = np.random.SeedSequence([master_seed, *key])
    return [int(v >> np.uint64(1)) for v in ss.generate_state(count, np.uint64)]


def _ranks_str(ranks) -> str:
    return ",".join(str(int(r)) for r in ranks)


def parse_ranks(text: str) -> tuple[int, int, int]:
    parts = [p for p in str(text).replace(" ", "").split(",") if p]
    if len(parts) != 3:
        raise ValueError(f"ranks must be three integers r1,r2,r3, got {text!r}")
    return tuple(int(p) for p in parts)


@dataclass
class ExperimentGrid:
    """Sample-complexity grid; ``T = round(N / ratio**2)`` training pairs per cell."""

    n: list[int] = field(default_factory=lambda: [9])
    p: list[int] = field(default_factory=lambda: [3])
    ranks: list[tuple[int, int, int]] = field(default_factory=lambda: [(2, 2, 2)])
    ratios: list[float] = field(default_factory=lambda: [0.15, 0.25, 0.35, 0.45])
    replications: int = 50
    master_seed: int = 0
    estimators: tuple[str, ...] = LINEAR_ESTIMATORS
    burn_in: int = DEFAULT_BURN_IN
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        bad = set(self.estimators) - set(LINEAR_ESTIMATORS)
        if bad:
            raise ValueError(f"unknown estimators {sorted(bad)}")
        if any(r <= 0 for r in self.ratios):
            raise ValueError("ratios must be positive")
        self.ranks = [tuple(int(v) for v in r) for r in self.ranks]

    def cells(self) -> list[tuple[int, int, tuple, float, int]]:
        """Grid cells ``(n, p, ranks, ratio, T)`` in a fixed order."""
        return [
            (n, p, r, ratio, round(n / ratio**2))
            for n in self.n
            for p in self.p
            for r in self.ranks
            for ratio in self.ratios
        ]


@dataclass
class DgpConfig:
    n: int = 25
    p: int = 3
    ranks: tuple[int, int, int] = (2, 2, 2)
    t: int = 500
    replications: int = 50
    master_seed: int = 0
    dgps: tuple[str, ...] = ("l", "nl")
    archs: tuple[str, ...] = NET_ARCHS
    # relu on the first layer drops the sign of the r2 compressed features, and
    # sigmoid on every layer stalls near the null predictor at small init
    activation: str = "sigmoid"
    placement: tuple[str, ...] = ("c2",)
    with_bias: bool = True
    burn_in: int = DEFAULT_BURN_IN
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.t < self.p + 1:
            raise ValueError(f"t={self.t} leaves no training pairs for P={self.p}")
        if set(self.dgps) - {"l", "nl"}:
            raise ValueError("dgps must be drawn from {'l', 'nl'}")
        if set(self.archs) - set(NET_ARCHS):
            raise ValueError(f"archs must be drawn from {NET_ARCHS}")
        self.ranks = tuple(int(v) for v in self.ranks)


@dataclass
class MacroConfig:
    data_path: str | None = None
    codes_row: bool = False
    p: int = 4
    ranks: tuple[int, int, int] = (4, 3, 2)
    hidden: int = 4
    train_len: int = 104
    test_len: int = 90
    with_bias: bool = True
    activation: str = "sigmoid"
    placement: tuple[str, ...] = ("c2",)
    models: tuple[str, ...] = MACRO_MODELS
    master_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if set(self.models) - set(MACRO_MODELS):
            raise ValueError(f"models must be drawn from {MACRO_MODELS}")
        self.ranks = tuple(int(v) for v in self.ranks)


@dataclass
class ResultRecord:
    experiment: str
    cell: int
    replication: int
    estimator: str
    n: int
    p: int
    ranks: str
    ratio: float | None = None
    t: int | None = None
    dgp: str | None = None
    error: float | None = None
    l2_norm: float | None = None
    rmse: float | None = None
    mae: float | None = None
    epochs: int | None = None
    converged: bool | None = None
    learning_rate: float | None = None
    non_unique: bool = False
    status: str = "ok"
    seed: int | None = None
    wall_seconds: float = 0.0


RECORD_FIELDS = [f.name for f in dataclasses.fields(ResultRecord)]
# wall-clock time varies between runs, so it goes to a separate file
REPORT_FIELDS = [f for f in RECORD_FIELDS if f != "wall_seconds"]
GROUP_FIELDS = ("experiment", "n", "p", "ranks", "ratio", "t", "dgp", "estimator")
METRICS = ("error", "l2_norm", "rmse", "mae", "epochs")


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------


def default_workers() -> int:
    """Worker count from ``TARNET_THREADS`` (unset or 0 means all CPUs)."""
    raw = os.environ.get("TARNET_THREADS", "0").strip() or "0"
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"TARNET_THREADS must be an integer, got {raw!r}") from None
    if value < 0:
        raise ValueError("TARNET_THREADS must be nonnegative")
    return value or (os.cpu_count() or 1)


def _single_thread(fn, task):
    with threadpool_limits(1):
        return fn(task)


def _run_tasks(fn, tasks: list, workers: int | None) -> list:
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(tasks) <= 1:
        return [_single_thread(fn, t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(_single_thread, [fn] * len(tasks), tasks, chunksize=1))


def _flatten(chunks) -> list[ResultRecord]:
    return [rec for chunk in chunks for rec in chunk]


# ---------------------------------------------------------------------------
# sample complexity
# ---------------------------------------------------------------------------


def _sample_task(task) -> list[ResultRecord]:
    grid, cell, (n, p, ranks, ratio, t), rep, weights = task
    noise_seed, train_seed = derive_seeds(grid.master_seed, _REPLICATION, cell, rep)
    base = dict(
        experiment="sample-complexity", cell=cell, replication=rep, n=n, p=p,
        ranks=_ranks_str(ranks), ratio=ratio, t=t, seed=train_seed,
    )
    series = simulate_var(weights, NoiseSpec.identity(n, noise_seed), t, burn_in=grid.burn_in)
    d = build_design(series, p)
    cfg = dataclasses.replace(grid.train, seed=train_seed)
    out = []
    for est in grid.estimators:
        start = time.perf_counter()
        try:
            if est == "ols":
                fit = fit_ols(d)
            elif est == "lr":
                fit = fit_lr(d, ranks[0], cfg)
            else:
                fit = fit_ltr(d, ranks, cfg)
        except FloatingPointError:
            out.append(ResultRecord(estimator=est, status="diverged",
                                    wall_seconds=time.perf_counter() - start, **base))
            continue
        out.append(ResultRecord(
            estimator=est, error=estimation_error(fit, weights), epochs=fit.epochs_run,
            converged=fit.converged, learning_rate=fit.learning_rate, non_unique=fit.non_unique,
            wall_seconds=time.perf_counter() - start, **base,
        ))
    return out


def run_sample_complexity(grid: ExperimentGrid, workers: int | None = None) -> list[ResultRecord]:
    """Estimation error of OLS/LR/LTR against the true weights over a ratio grid.

    The true weights are drawn once per cell and shared by all of its
    replications; each replication simulates a fresh sequence. LR uses
    matrix rank ``r1``. Cells with ``T < P + 1`` yield one ``skipped`` record.
    """
    tasks, records = [], []
    for cell, spec in enumerate(grid.cells()):
        n, p, ranks, ratio, t = spec
        if t < p + 1:
            records.append(ResultRecord(
                "sample-complexity", cell, -1, "none", n, p, _ranks_str(ranks),
                ratio=ratio, t=t, status="skipped",
            ))
            continue
        (wseed,) = derive_seeds(grid.master_seed, _WEIGHTS, cell, count=1)
        weights = generate_low_tucker_weights(n, p, ranks, seed=wseed)
        tasks.extend((grid, cell, spec, rep, weights) for rep in range(grid.replications))
    records.extend(_flatten(_run_tasks(_sample_task, tasks, workers)))
    return sorted(records, key=lambda r: (r.cell, r.replication))


# ---------------------------------------------------------------------------
# linear vs nonlinear DGP
# ---------------------------------------------------------------------------


def _dgp_task(task) -> list[ResultRecord]:
    cfg, cell, dgp, rep = task
    seq_seed, train_seed = derive_seeds(cfg.master_seed, _SEQUENCE, cell, rep)
    # a sequence of t + 1 points; the last one is held out
    t_eff = cfg.t + 1 - cfg.p
    if dgp == "l":
        series, _ = generate_l_dgp(cfg.n, cfg.p, cfg.ranks, t_eff, cfg.burn_in, seed=seq_seed)
    else:
        series = generate_nl_dgp(cfg.n, cfg.p, cfg.ranks, t_eff, cfg.burn_in, seed=seq_seed)
    train = series[: cfg.t]
    d = build_design(train, cfg.p)
    tcfg = dataclasses.replace(cfg.train, seed=train_seed)
    base = dict(
        experiment="dgp-comparison", cell=cell, replication=rep, n=cfg.n, p=cfg.p,
        ranks=_ranks_str(cfg.ranks), t=cfg.t, dgp=dgp, seed=train_seed,
    )
    out = []
    for arch in cfg.archs:
        start = time.perf_counter()
        try:
            fit = train_tar(d, arch, cfg.ranks, tcfg, with_bias=cfg.with_bias,
                            activation=cfg.activation, placement=cfg.placement)
        except FloatingPointError:
            out.append(ResultRecord(estimator=arch, status="diverged",
                                    wall_seconds=time.perf_counter() - start, **base))
            continue
        pred = rolling_forecast(fit, series, cfg.t, 1)
        m = evaluate(pred, series[cfg.t :].T)
        out.append(ResultRecord(
            estimator=arch, epochs=fit.epochs_run, converged=fit.converged, learning_rate=fit.learning_rate,
            wall_seconds=time.perf_counter() - start, **m, **base,
        ))
    return out


def run_dgp_comparison(cfg: DgpConfig, workers: int | None = None) -> list[ResultRecord]:
    """Held-out one-step error of LTAR, TAR and TAR-2 on linear and nonlinear sequences.

    Every replication draws a new sequence (with new weights) of ``t + 1``
    points, trains on the first ``t`` and forecasts the last.
    """
    tasks = [
        (cfg, cell, dgp, rep)
        for cell, dgp in enumerate(cfg.dgps)
        for rep in range(cfg.replications)
    ]
    return _flatten(_run_tasks(_dgp_task, tasks, workers))


# ---------------------------------------------------------------------------
# macro benchmark
# ---------------------------------------------------------------------------


def synthetic_macro_series(seed: int = 0, length: int = 194) -> Series:
    """A 40-variable stationary stand-in with the macro panel's names (code 1 each)."""
    names = list(MACRO_VARIABLES)
    values, _ = generate_l_dgp(len(names), 4, (4, 3, 2), length - 4, seed=seed)
    return Series(values, names, [1] * len(names))


def load_macro_series(cfg: MacroConfig) -> Series:
    if cfg.data_path is None:
        (seed,) = derive_seeds(cfg.master_seed, _MACRO, 0, count=1)
        return synthetic_macro_series(seed, cfg.train_len + cfg.test_len)
    s = read_series_csv(cfg.data_path, with_codes=cfg.codes_row)
    if cfg.codes_row:
        s = transform_series(s)
    need = cfg.train_len + cfg.test_len
    if len(s) < need:
        raise DataError(
            f"{cfg.data_path}: {len(s)} usable rows after transformation, need {need} "
            f"(train_len {cfg.train_len} + test_len {cfg.test_len}); expected a header of "
            "variable names, optionally a row of transform codes 1-6, then numeric rows"
        )
    return s


def _macro_task(task):
    cfg, values, idx, model = task
    (train_seed,) = derive_seeds(cfg.master_seed, _MACRO, 1, idx, count=1)
    tcfg = dataclasses.replace(cfg.train, seed=train_seed)
    d = build_design(values[: cfg.train_len], cfg.p)
    start = time.perf_counter()
    if model == "mlp0":
        fit = fit_ols(d)
    elif model == "mlp1":
        fit = fit_lr(d, cfg.hidden, tcfg)
    else:
        fit = train_tar(d, model, cfg.ranks, tcfg, with_bias=cfg.with_bias,
                        activation=cfg.activation, placement=cfg.placement)
    preds = rolling_forecast(fit, values, cfg.train_len, cfg.test_len)
    truth = values[cfg.train_len : cfg.train_len + cfg.test_len].T
    ranks = {"mlp0": "", "mlp1": str(cfg.hidden)}.get(model, _ranks_str(cfg.ranks))
    rec = ResultRecord(
        experiment="macro", cell=0, replication=0, estimator=model, n=values.shape[1],
        p=cfg.p, ranks=ranks,
        t=cfg.train_len - cfg.p, epochs=fit.epochs_run, converged=fit.converged, learning_rate=fit.learning_rate,
        non_unique=fit.non_unique, seed=train_seed,
        wall_seconds=time.perf_counter() - start, **evaluate(preds, truth),
    )
    return rec, preds


@dataclass
class MacroResult:
    records: list[ResultRecord]
    names: list[str]
    truth: np.ndarray  # N x test_len, standardized scale
    predictions: dict[str, np.ndarray]

    def trace(self, variable: str) -> dict[str, np.ndarray]:
        """Truth and every model's forecasts for one variable."""
        if variable not in self.names:
            raise DataError(f"unknown variable {variable!r}")
        j = self.names.index(variable)
        out = {"truth": self.truth[j]}
        out.update({m: p[j] for m, p in self.predictions.items()})
        return out


def run_macro_benchmark(cfg: MacroConfig, workers: int | None = None) -> MacroResult:
    """Rolling one-step forecasts of MLP-0 (OLS), MLP-1 (rank-`hidden` LR), LTAR, TAR, TAR-2.

    The series is standardized with statistics of the first `train_len`
    rows, models are fit on those rows once, and the following `test_len`
    rows are forecast without refitting.
    """
    s = load_macro_series(cfg)
    s, _ = standardize(s, slice(0, cfg.train_len))
    values = s.values[: cfg.train_len + cfg.test_len]
    tasks = [(cfg, values, i, m) for i, m in enumerate(cfg.models)]
    results = _run_tasks(_macro_task, tasks, workers)
    return MacroResult(
        records=[r for r, _ in results],
        names=list(s.names),
        truth=values[cfg.train_len :].T,
        predictions={r.estimator: p for r, p in results},
    )


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ResultRecord)}


def _parse(name: str, text: str):
    kind = _FIELD_TYPES[name]
    if text == "":
        return None if "None" in kind else ("" if kind.startswith("str") else None)
    if kind.startswith("bool"):
        return text == "true"
    if kind.startswith("int"):
        return int(text)
    if kind.startswith("float"):
        return float(text)
    return text


def aggregate(records: list[ResultRecord]) -> list[dict]:
    """Mean, standard error and count of each metric per group of replications.

    Values are summed in (cell, replication) order, so the result does not
    depend on the order of `records`.
    """
    groups: dict[tuple, list[ResultRecord]] = {}
    for r in records:
        if r.status != "ok":
            continue
        groups.setdefault(tuple(getattr(r, f) for f in GROUP_FIELDS), []).append(r)
    out = []
    for key in sorted(groups, key=lambda k: tuple((v is None, v if v is not None else 0) for v in k)):
        members = sorted(groups[key], key=lambda r: (r.cell, r.replication))
        row = dict(zip(GROUP_FIELDS, key))
        row["count"] = len(members)
        row["non_unique"] = sum(r.non_unique for r in members)
        for m in METRICS:
            vals = [float(getattr(r, m)) for r in members if getattr(r, m) is not None]
            if not vals:
                continue
            mean = math.fsum(vals) / len(vals)
            if len(vals) > 1:
                var = math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
                se = math.sqrt(var / len(vals))
            else:
                se = None
            row[f"{m}_mean"] = mean
            row[f"{m}_se"] = se
        out.append(row)
    return out


def report_stem(experiment: str, master_seed: int) -> str:
    return f"{experiment}_seed{master_seed}"


def emit_report(records: list[ResultRecord], out_dir, master_seed: int, traces: MacroResult | None = None) -> dict:
    """Write the flat record CSV, aggregate JSON, plot CSV and timing CSV.

    Returns the written paths keyed by ``records``, ``aggregate``, ``plot``,
    ``timing`` (and ``traces`` for the macro benchmark). All files except the
    timing file are byte-identical across reruns with the same seed.
    """
    if not records:
        raise ValueError("no records to report")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out_dir}: {exc}") from exc
    stem = report_stem(records[0].experiment, master_seed)
    paths = {k: out_dir / f"{stem}_{k}.{ext}" for k, ext in
             (("records", "csv"), ("aggregate", "json"), ("plot", "csv"), ("timing", "csv"))}

    with open(paths["records"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, f)) for f in REPORT_FIELDS])

    agg = aggregate(records)
    with open(paths["aggregate"], "w") as fh:
        json.dump({"experiment": records[0].experiment, "master_seed": master_seed,
                   "groups": agg}, fh, indent=1)
        fh.write("\n")

    metric = "error" if records[0].experiment == "sample-complexity" else "l2_norm"
    with open(paths["plot"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["estimator", "n", "p", "ranks", "dgp", "ratio", "t", f"{metric}_mean", f"{metric}_se"])
        for row in agg:
            if f"{metric}_mean" in row:
                w.writerow([_fmt(row[k]) for k in ("estimator", "n", "p", "ranks", "dgp", "ratio", "t")]
                           + [_fmt(row[f"{metric}_mean"]), _fmt(row[f"{metric}_se"])])

    with open(paths["timing"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "replication", "estimator", "wall_seconds"])
        for r in records:
            w.writerow([r.cell, r.replication, r.estimator, _fmt(r.wall_seconds)])

    if traces is not None:
        paths["traces"] = out_dir / f"{stem}_traces.csv"
        models = list(traces.predictions)
        with open(paths["traces"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variable", "step", "truth", *models])
            for j, name in enumerate(traces.names):
                for k in range(traces.truth.shape[1]):
                    w.writerow([name, k, _fmt(float(traces.truth[j, k]))]
                               + [_fmt(float(traces.predictions[m][j, k])) for m in models])
    return paths


def load_records(path) -> list[ResultRecord]:
    """Read a record CSV written by :func:`emit_report`."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [ResultRecord(**{k: _parse(k, v) for k, v in row.items()}) for row in reader]


def format_table(rows: list[dict], columns: list[str]) -> str:
    """Aligned text table; floats rounded to 4 decimals."""
    cells = [[("" if r.get(c) is None else f"{r[c]:.4f}" if isinstance(r.get(c), float) else str(r[c]))
              for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------

_TRAIN_FIELDS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _as_list(text, cast):
    return [cast(v) for v in str(text).replace(";", " ").replace(",", " ").split()]


def _as_bool(text) -> bool:
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def train_config_from(values: dict, base: TrainConfig | None = None) -> TrainConfig:
    base = base or TrainConfig()
    kw = {}
    for k, v in values.items():
        if k not in _TRAIN_FIELDS:
            raise ValueError(f"unknown training option {k!r}")
        t = _TRAIN_FIELDS[k]
        kw[k] = _as_bool(v) if t.startswith("bool") else int(v) if t.startswith("int") else float(v)
    return dataclasses.replace(base, **kw)


def read_config(path) -> dict[str, dict[str, str]]:
    """Parse an INI file with ``[grid]``, ``[training]`` and ``[output]`` sections."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ValueError(f"malformed config {path}: {exc}") from exc
    unknown = set(parser.sections()) - {"grid", "training", "output"}
    if unknown:
        raise ValueError(f"unknown config sections {sorted(unknown)}")
    return {s: dict(parser[s]) if parser.has_section(s) else {} for s in ("grid", "training", "output")}


def build_experiment_config(kind: str, grid: dict, training: dict):
    """Experiment configuration of the given kind from string key/value pairs."""
    train = train_config_from(training)
    g = dict(grid)
    common = {}
    if "master_seed" in g:
        common["master_seed"] = int(g.pop("master_seed"))
    if kind == "sample-complexity":
        kw = {}
        for key, cast in (("n", int), ("p", int), ("ratios", float)):
            if key in g:
                kw[key] = _as_list(g.pop(key), cast)
        if "ranks" in g:
            kw["ranks"] = [parse_ranks(r) for r in g.pop("ranks").split(";")]
        if "replications" in g:
            kw["replications"] = int(g.pop("replications"))
        if "burn_in" in g:
            kw["burn_in"] = int(g.pop("burn_in"))
        if "estimators" in g:
            kw["estimators"] = tuple(_as_list(g.pop("estimators"), str))
        cfg = ExperimentGrid(**kw, **common, train=train)
    elif kind == "dgp-comparison":
        kw = {}
        for key in ("n", "p", "t", "replications", "burn_in"):
            if key in g:
                kw[key] = int(g.pop(key))
        if "ranks" in g:
            kw["ranks"] = parse_ranks(g.pop("ranks"))
        for key in ("dgps", "archs", "placement"):
            if key in g:
                kw[key] = tuple(_as_list(g.pop(key), str))
        if "activation" in g:
            kw["activation"] = g.pop("activation")
        if "with_bias" in g:
            kw["with_bias"] = _as_bool(g.pop("with_bias"))
        cfg = DgpConfig(**kw, **common, train=train)
    elif kind == "macro":
        kw = {}
        for key in ("p", "hidden", "train_len", "test_len"):
            if key in g:
                kw[key] = int(g.pop(key))
        if "ranks" in g:
            kw["ranks"] = parse_ranks(g.pop("ranks"))
        for key in ("models", "placement"):
            if key in g:
                kw[key] = tuple(_as_list(g.pop(key), str))
        for key in ("codes_row", "with_bias"):
            if key in g:
                kw[key] = _as_bool(g.pop(key))
        if "activation" in g:
            kw["activation"] = g.pop("activation")
        if "data_path" in g:
            kw["data_path"] = g.pop("data_path") or None
        cfg = MacroConfig(**kw, **common, train=train)
    else:
        raise ValueError(f"unknown experiment kind {kind!r}")
    if g:
        raise ValueError(f"unknown [grid] options for {kind}: {sorted(g)}")
    return cfg


def run_experiment(cfg, workers: int | None = None):
    """Dispatch on the configuration type; returns records (and the macro result)."""
    if isinstance(cfg, ExperimentGrid):
        return run_sample_complexity(cfg, workers), None
    if isinstance(cfg, DgpConfig):
        return run_dgp_comparison(cfg, workers), None
    if isinstance(cfg, MacroConfig):
        res = run_macro_benchmark(cfg, workers)
        return res.records, res
    raise TypeError(f"not an experiment configuration: {type(cfg).__name__}")
