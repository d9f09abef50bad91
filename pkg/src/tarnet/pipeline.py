"""Series ingestion, stationarity transforms, standardization and rolling forecasts."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np


class DataError(ValueError):
    """Malformed or unusable input data."""


# differencing order of each transformation code
TRANSFORM_ORDER = {1: 0, 2: 1, 3: 2, 4: 0, 5: 1, 6: 2}

# Quarterly US macro panel: short name -> transformation code.
MACRO_VARIABLES = {
    "GDP251": 5, "CPIAUCSL": 6, "FYFF": 2, "PSCCOMR": 5, "FMRNBA": 3,
    "FMRRA": 6, "FM2": 6, "GDP252": 5, "IPS10": 5, "UTL11": 1,
    "LHUR": 2, "HSFR": 4, "PWFSA": 6, "GDP273": 6, "CES275R": 5,
    "FM1": 6, "FSPIN": 5, "FYGT10": 2, "EXRUS": 5, "CES002": 5,
    "SEYGT10": 1, "HHSNTN": 2, "PMI": 1, "PMDEL": 1, "PMCP": 1,
    "GDP256": 5, "LBOUT": 5, "PMNV": 1, "GDP263": 5, "GDP264": 5,
    "GDP265": 5, "LBMNU": 5, "PMNO": 1, "CCINRV": 6, "BUSLOANS": 6,
    "PMP": 1, "GDP276_1": 6, "GDP270": 5, "GDP253": 5, "LHEL": 2,
}


@dataclass
class Standardization:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean


@dataclass
class Series:
    """A time-major ``T x N`` panel with variable names."""

    values: np.ndarray
    names: list[str] = field(default_factory=list)
    codes: list[int] | None = None
    stats: Standardization | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2:
            raise DataError("series values must be a T x N matrix")
        if not self.names:
            self.names = [f"y{i + 1}" for i in range(self.values.shape[1])]
        if len(self.names) != self.values.shape[1]:
            raise DataError(f"{len(self.names)} names for {self.values.shape[1]} columns")
        if self.codes is not None and len(self.codes) != len(self.names):
            raise DataError("one transform code is needed per variable")

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise DataError(f"unknown variable {name!r}") from None


def read_series_csv(path, with_codes: bool = False) -> Series:
    """Load a series CSV: a header of names, optionally a row of transform codes, then data."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    names = [c.strip() for c in rows[0]]
    body = rows[1:]
    codes = None
    if with_codes:
        if not body:
            raise DataError(f"{path}: missing transform-code row")
        try:
            codes = [int(c) for c in body[0]]
        except ValueError:
            raise DataError(f"{path}: transform-code row must hold integers") from None
        bad = [c for c in codes if c not in TRANSFORM_ORDER]
        if bad:
            raise DataError(f"{path}: transform codes must lie in 1..6, got {bad}")
        body = body[1:]
    if not body:
        raise DataError(f"{path}: no data rows")
    values = np.empty((len(body), len(names)))
    first = 3 if with_codes else 2
    for i, row in enumerate(body):
        if len(row) != len(names):
            raise DataError(f"{path}: line {i + first} has {len(row)} fields, expected {len(names)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise DataError(f"{path}: missing or invalid value {cell!r} at line {i + first}, column {names[j]!r}")
            values[i, j] = v
    return Series(values, names, codes)


def write_series_csv(series: Series, path, with_codes: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(series.names)
        if with_codes:
            w.writerow(series.codes)
        for row in series.values:
            w.writerow([f"{v:.17g}" for v in row])


def apply_transform(column: np.ndarray, code: int, name: str = "series") -> np.ndarray:
    """Apply a stationarity transformation code.

    1 none, 2 first difference, 3 second difference, 4 log, 5 first
    difference of log, 6 second difference of log. The result is shorter than
    the input by the differencing order.
    """
    if code not in TRANSFORM_ORDER:
        raise ValueError(f"transform code must lie in 1..6, got {code!r}")
    x = np.asarray(column, dtype=float)
    if code >= 4:
        bad = np.flatnonzero(x <= 0)
        if bad.size:
            raise DataError(f"{name}: log transform needs positive values, got {x[bad[0]]!r} at row {bad[0]}")
        x = np.log(x)
    return np.diff(x, n=TRANSFORM_ORDER[code]) if TRANSFORM_ORDER[code] else x


def invert_transform(z: np.ndarray, code: int, head: np.ndarray) -> np.ndarray:
    """Rebuild the raw column from transformed values and its first raw values.

    `head` holds the first ``TRANSFORM_ORDER[code]`` raw values (the
    integration constants).
    """
    order = TRANSFORM_ORDER[code]
    head = np.asarray(head, dtype=float)[:order]
    if code >= 4:
        head = np.log(head)
    x = np.asarray(z, dtype=float)
    for k in range(order, 0, -1):
        # level k-1 starts from the (k-1)-th difference of the head values
        start = np.diff(head, n=k - 1)[0]
        x = np.concatenate([[start], start + np.cumsum(x)])
    return np.exp(x) if code >= 4 else x


def transform_series(series: Series, codes: list[int] | None = None) -> Series:
    """Transform every column by its code and trim to the common aligned length."""
    codes = codes if codes is not None else series.codes
    if codes is None:
        raise DataError("no transform codes given")
    if len(codes) != series.n:
        raise DataError(f"{len(codes)} codes for {series.n} variables")
    cols = [apply_transform(series.values[:, j], c, series.names[j]) for j, c in enumerate(codes)]
    length = min(len(c) for c in cols)
    if length < 1:
        raise DataError("series too short for its transform codes")
    values = np.column_stack([c[len(c) - length :] for c in cols])
    return Series(values, list(series.names), list(codes))


def standardize(series: Series, rows: slice = slice(None)) -> tuple[Series, Standardization]:
    """Zero mean, unit (population) variance using statistics from `rows`."""
    ref = series.values[rows]
    if ref.shape[0] < 2:
        raise DataError("standardization needs at least two rows")
    mean = ref.mean(axis=0)
    std = ref.std(axis=0)
    zero = np.flatnonzero(std == 0)
    if zero.size:
        raise DataError(f"zero variance in column {series.names[zero[0]]!r}")
    stats = Standardization(mean, std)
    return replace(series, values=stats.apply(series.values), stats=stats), stats


def rolling_forecast(model, values: np.ndarray, train_len: int, test_len: int) -> np.ndarray:
    """One-step-ahead forecasts for rows ``train_len .. train_len + test_len - 1``.

    Each step feeds the model only the `P` true rows preceding the target; the
    model is never refit. Training means (``model.means``) are removed from
    the inputs and added back to the predictions. Returns ``N x test_len``.
    """
    values = np.asarray(values, dtype=float)
    p = model.p
    if train_len < p:
        raise DataError(f"train_len={train_len} leaves fewer than P={p} lag rows")
    if test_len < 1 or train_len + test_len > values.shape[0]:
        raise DataError(
            f"need {train_len + test_len} rows for train_len={train_len}, test_len={test_len}; have {values.shape[0]}"
        )
    means = model.means if model.means is not None else np.zeros(values.shape[1])
    preds = np.empty((values.shape[1], test_len))
    for k in range(test_len):
        t = train_len + k
        window = values[t - p : t]
        x = (window[::-1] - means).reshape(-1)
        preds[:, k] = np.asarray(model.predict(x[:, None]))[:, 0] + means
    return preds


def evaluate(preds: np.ndarray, truth: np.ndarray) -> dict:
    """Averaged L2 norm of the per-step error, RMSE and MAE over all entries.

    Both arrays are ``N x steps``.
    """
    preds = np.asarray(preds, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if preds.shape != truth.shape:
        raise ValueError(f"shape mismatch: {preds.shape} vs {truth.shape}")
    err = preds - truth
    return {
        "l2_norm": float(np.mean(np.linalg.norm(err, axis=0))),
        "rmse": float(np.sqrt(np.mean(err**2))),
        "mae": float(np.mean(np.abs(err))),
    }
