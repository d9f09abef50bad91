"""Model files: JSON with named row-major arrays, exact round trip."""
from __future__ import annotations

import json

import numpy as np

from .estimators import FitReport
from .tar_net import LAYERS, Tar2Params, TarParams
from .tensor_core import TuckerFactors, fold
from .var_process import VarWeights

FORMAT_VERSION = 1
KINDS = ("ols", "lr", "ltr", "tar", "tar2")


class ModelFormatError(ValueError):
    """A model file that cannot be interpreted."""


def _pack(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"dims": list(a.shape), "data": a.ravel().tolist()}


def _unpack(entry) -> np.ndarray:
    try:
        return np.asarray(entry["data"], dtype=float).reshape(entry["dims"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed array entry: {exc}") from exc


def model_to_dict(fit: FitReport) -> dict:
    if fit.kind not in KINDS:
        raise ValueError(f"cannot persist model kind {fit.kind!r}")
    arrays = {}
    doc = {"format_version": FORMAT_VERSION, "kind": fit.kind, "n": fit.n, "p": fit.p}
    if fit.r is not None:
        doc["r"] = fit.r
    if fit.ranks is not None:
        doc["ranks"] = list(fit.ranks)
    doc["centered_means"] = None if fit.means is None else [float(v) for v in fit.means]
    if fit.kind in ("tar", "tar2"):
        net = fit.net
        lane = net if isinstance(net, TarParams) else net.lane_a
        doc["activation"] = lane.activation
        doc["placement"] = list(lane.placement)
        if isinstance(net, TarParams):
            doc["order"] = net.order
        arrays.update({k: _pack(v) for k, v in net.blocks().items()})
    else:
        arrays["w"] = _pack(fit.weights.matrix)
        if fit.bias is not None:
            arrays["bias"] = _pack(fit.bias)
        if fit.kind == "lr" and fit.factors is not None:
            arrays["a"], arrays["b"] = _pack(fit.factors[0]), _pack(fit.factors[1])
        if fit.kind == "ltr" and fit.factors is not None:
            f = fit.factors
            arrays.update(core=_pack(f.core), u1=_pack(f.u1), u2=_pack(f.u2), u3=_pack(f.u3))
    doc["arrays"] = arrays
    doc["training"] = {
        "epochs": fit.epochs_run,
        "final_loss": fit.final_loss,
        "seed": fit.seed,
        "converged": fit.converged,
        "non_unique": fit.non_unique,
        "learning_rate": fit.learning_rate,
    }
    return doc


def model_from_dict(doc: dict) -> FitReport:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {doc.get('format_version')!r}")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ModelFormatError(f"unknown model kind {kind!r}")
    try:
        n, p = int(doc["n"]), int(doc["p"])
        arrays = {k: _unpack(v) for k, v in doc["arrays"].items()}
        training = doc.get("training", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"missing field: {exc}") from exc
    means = doc.get("centered_means")
    means = None if means is None else np.asarray(means, dtype=float)
    ranks = tuple(doc["ranks"]) if "ranks" in doc else None
    common = dict(
        n=n, p=p, final_loss=training.get("final_loss", float("nan")),
        epochs_run=training.get("epochs", 0), converged=training.get("converged", True),
        seed=training.get("seed"), non_unique=training.get("non_unique", False),
        learning_rate=training.get("learning_rate"),
        means=means, ranks=ranks, r=doc.get("r"),
    )
    if kind in ("tar", "tar2"):
        act = doc.get("activation", "relu")
        placement = tuple(doc.get("placement", LAYERS))
        bias = arrays.get("bias")
        if kind == "tar":
            blocks = {k: arrays[k] for k in ("u1", "u2", "u3", "g1")}
            net = TarParams(**blocks, bias=bias, activation=act,
                            order=doc.get("order", "column"), placement=placement)
        else:
            lanes = [
                TarParams(**{k: arrays[f"{s}_{k}"] for k in ("u1", "u2", "u3", "g1")},
                          activation=act, order=order, placement=placement)
                for s, order in (("a", "column"), ("b", "row"))
            ]
            net = Tar2Params(*lanes, bias=bias)
        weights = net.linear_weights() if kind == "tar" and act == "identity" else None
        return FitReport(kind=kind, weights=weights, net=net, bias=bias, **common)
    w = arrays["w"]
    if w.shape != (n, n * p):
        raise ModelFormatError(f"weight matrix has shape {w.shape}, expected {(n, n * p)}")
    factors = None
    if kind == "lr" and "a" in arrays:
        factors = (arrays["a"], arrays["b"])
    if kind == "ltr" and "core" in arrays:
        factors = TuckerFactors(arrays["core"], arrays["u1"], arrays["u2"], arrays["u3"])
    return FitReport(kind=kind, weights=VarWeights(fold(w, 1, (n, n, p))),
                     factors=factors, bias=arrays.get("bias"), **common)


def save_model(fit: FitReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(fit), fh, indent=1)
        fh.write("\n")


def load_model(path) -> FitReport:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(doc)
