"""Tucker autoregressive (TAR) networks.

A lane maps a lag matrix ``X`` (N x P) through

    C1  N x 1 convolutions   h1 = act(U2^T X)            r2 maps of size 1 x P
    C2  1 x P convolutions   h2 = act(h1 U3)             r2 r3 scalars
    F1  full connection      h3 = act(G1 vec(h2))        r1 features
    OUT linear readout       out = U1 h3 (+ bias)

With ``order="row"`` the two convolutions are applied in the other order,
``h1 = act(X U3)``, ``h2 = act(U2^T h1)``. TAR-2 averages a column-first and a
row-first lane and adds one shared output bias. With the identity activation
a lane is exactly the linear map ``U1 G_(1) (U3 kron U2)^T x`` (LTAR).

All functions work on batches: lag matrices are stacked as ``(B, N, P)`` and
outputs as ``(B, N)``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .estimators import (
    DesignPair,
    FitReport,
    TrainConfig,
    check_ltr_ranks,
    descent_scale,
    init_ltr_params,
    ltr_weight_matrix,
    momentum_descent,
)
from .tensor_core import fold
from .var_process import VarWeights

ACTIVATIONS = ("relu", "sigmoid", "identity")
LAYERS = ("c1", "c2", "f1")


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def _act_grad(name, z, h):
    if name == "relu":
        return z > 0
    if name == "sigmoid":
        return h * (1.0 - h)
    return 1.0


@dataclass
class TarParams:
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    g1: np.ndarray
    bias: np.ndarray | None = None
    activation: str = "relu"
    order: str = "column"
    placement: tuple[str, ...] = LAYERS

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.order not in ("column", "row"):
            raise ValueError(f"order must be 'column' or 'row', got {self.order!r}")
        if not set(self.placement) <= set(LAYERS):
            raise ValueError(f"placement must be a subset of {LAYERS}")
        n, r1 = self.u1.shape
        if self.u2.shape[0] != n:
            raise ValueError("u1 and u2 must have the same number of rows")
        if self.g1.shape != (r1, self.u2.shape[1] * self.u3.shape[1]):
            raise ValueError(
                f"g1 has shape {self.g1.shape}, expected ({r1}, {self.u2.shape[1] * self.u3.shape[1]})"
            )
        if self.bias is not None and self.bias.shape != (n,):
            raise ValueError(f"bias must have shape ({n},)")

    @property
    def n(self) -> int:
        return self.u1.shape[0]

    @property
    def p(self) -> int:
        return self.u3.shape[0]

    @property
    def ranks(self) -> tuple[int, int, int]:
        return (self.u1.shape[1], self.u2.shape[1], self.u3.shape[1])

    def layer_activation(self, layer: str) -> str:
        return self.activation if layer in self.placement else "identity"

    def blocks(self) -> dict:
        out = {"u1": self.u1, "u2": self.u2, "u3": self.u3, "g1": self.g1}
        if self.bias is not None:
            out["bias"] = self.bias
        return out

    def with_blocks(self, blocks: dict) -> "TarParams":
        return replace(self, **blocks)

    def linear_weights(self) -> VarWeights:
        """Weights of the equivalent linear map; only meaningful for the identity activation."""
        w = ltr_weight_matrix(self.u1, self.u2, self.u3, self.g1)
        return VarWeights(fold(w, 1, (self.n, self.n, self.p)))


@dataclass
class Tar2Params:
    lane_a: TarParams
    lane_b: TarParams
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.lane_a.n != self.lane_b.n or self.lane_a.p != self.lane_b.p:
            raise ValueError("TAR-2 lanes must share N and P")
        if self.lane_a.bias is not None or self.lane_b.bias is not None:
            raise ValueError("TAR-2 lanes carry no bias of their own; use the shared bias")

    @property
    def n(self) -> int:
        return self.lane_a.n

    @property
    def p(self) -> int:
        return self.lane_a.p

    @property
    def activation(self) -> str:
        return self.lane_a.activation

    def blocks(self) -> dict:
        out = {f"a_{k}": v for k, v in self.lane_a.blocks().items()}
        out.update({f"b_{k}": v for k, v in self.lane_b.blocks().items()})
        if self.bias is not None:
            out["bias"] = self.bias
        return out

    def with_blocks(self, blocks: dict) -> "Tar2Params":
        lane = lambda prefix: {k[2:]: v for k, v in blocks.items() if k.startswith(prefix)}
        return Tar2Params(
            self.lane_a.with_blocks(lane("a_")),
            self.lane_b.with_blocks(lane("b_")),
            blocks.get("bias", self.bias),
        )


def _check_lags(p: TarParams, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (p.n, p.p):
        raise ValueError(f"lag input of shape {x.shape} does not match (B, {p.n}, {p.p})")
    return x, single


def _feature_first(x: np.ndarray) -> np.ndarray:
    """(B, N, P) lags as one contiguous N x (B P) matrix shared by both lane orders."""
    b, n, lag = x.shape
    return np.ascontiguousarray(np.transpose(x, (1, 0, 2))).reshape(n, b * lag)


def _lane_forward(p: TarParams, xc: np.ndarray) -> tuple[np.ndarray, dict]:
    # Intermediates are kept feature-first, (r2, B, .), so every layer is one 2-D matmul.
    a1, a2, a3 = (p.layer_activation(k) for k in LAYERS)
    n, lag = p.n, p.p
    b = xc.shape[1] // lag
    r2, r3 = p.u2.shape[1], p.u3.shape[1]
    cache = {}
    if p.order == "column":
        z1 = p.u2.T @ xc
        h1 = _act(a1, z1)
        z2 = (h1.reshape(r2 * b, lag) @ p.u3).reshape(r2, b, r3)
        cache["xc"] = xc
    else:
        xr = xc.reshape(n * b, lag)
        z1 = xr @ p.u3
        h1 = _act(a1, z1)
        h1n = h1.reshape(n, b * r3)
        z2 = (p.u2.T @ h1n).reshape(r2, b, r3)
        cache.update(xr=xr, h1n=h1n)
    h2 = _act(a2, z2)
    v = np.transpose(h2, (1, 2, 0)).reshape(b, r3 * r2)
    z3 = v @ p.g1.T
    h3 = _act(a3, z3)
    out = h3 @ p.u1.T
    if p.bias is not None:
        out = out + p.bias
    cache.update(z1=z1, h1=h1, z2=z2, h2=h2, v=v, z3=z3, h3=h3)
    return out, cache


def _lane_backward(p: TarParams, cache: dict, dout: np.ndarray) -> dict:
    a1, a2, a3 = (p.layer_activation(k) for k in LAYERS)
    b = dout.shape[0]
    n = p.n
    lag = p.p
    r2, r3 = p.u2.shape[1], p.u3.shape[1]
    h1, h3 = cache["h1"], cache["h3"]
    grads = {"u1": dout.T @ h3}
    dz3 = (dout @ p.u1) * _act_grad(a3, cache["z3"], h3)
    grads["g1"] = dz3.T @ cache["v"]
    dh2 = np.transpose((dz3 @ p.g1).reshape(b, r3, r2), (2, 0, 1))
    dz2 = (dh2 * _act_grad(a2, cache["z2"], cache["h2"])).reshape(r2 * b, r3)
    if p.order == "column":
        grads["u3"] = h1.reshape(r2 * b, lag).T @ dz2
        dz1 = (dz2 @ p.u3.T).reshape(r2, b * lag) * _act_grad(a1, cache["z1"], h1)
        grads["u2"] = cache["xc"] @ dz1.T
    else:
        dz2 = dz2.reshape(r2, b * r3)
        grads["u2"] = cache["h1n"] @ dz2.T
        dh1 = (p.u2 @ dz2).reshape(n * b, r3)
        dz1 = dh1 * _act_grad(a1, cache["z1"], h1)
        grads["u3"] = cache["xr"].T @ dz1
    if p.bias is not None:
        grads["bias"] = dout.sum(axis=0)
    return grads


def tar_forward(p: TarParams, x: np.ndarray) -> np.ndarray:
    """Output for one lag matrix (N x P) or a batch (B, N, P)."""
    x, single = _check_lags(p, x)
    out = _lane_forward(p, _feature_first(x))[0]
    return out[0] if single else out


def tar2_forward(p: Tar2Params, x: np.ndarray) -> np.ndarray:
    x, single = _check_lags(p.lane_a, x)
    xc = _feature_first(x)
    out = 0.5 * (_lane_forward(p.lane_a, xc)[0] + _lane_forward(p.lane_b, xc)[0])
    if p.bias is not None:
        out = out + p.bias
    return out[0] if single else out


def net_forward(net, x: np.ndarray) -> np.ndarray:
    return tar2_forward(net, x) if isinstance(net, Tar2Params) else tar_forward(net, x)


def tar_backward(p: TarParams, x: np.ndarray, upstream_grad: np.ndarray) -> dict:
    """Parameter gradients given ``dL/d out`` for each sample, shape (B, N)."""
    x, single = _check_lags(p, x)
    up = np.atleast_2d(np.asarray(upstream_grad, dtype=float))
    _, cache = _lane_forward(p, _feature_first(x))
    return _lane_backward(p, cache, up)


def tar2_backward(p: Tar2Params, x: np.ndarray, upstream_grad: np.ndarray) -> dict:
    x, _ = _check_lags(p.lane_a, x)
    up = np.atleast_2d(np.asarray(upstream_grad, dtype=float))
    xc = _feature_first(x)
    grads = {}
    for prefix, lane in (("a_", p.lane_a), ("b_", p.lane_b)):
        _, cache = _lane_forward(lane, xc)
        grads.update({prefix + k: v for k, v in _lane_backward(lane, cache, 0.5 * up).items()})
    if p.bias is not None:
        grads["bias"] = up.sum(axis=0)
    return grads


def net_loss_grad(template, lags: np.ndarray, targets: np.ndarray):
    """Mean squared loss ``(1/T) sum_t ||y_t - net(X_t)||^2`` and its gradient.

    `lags` is (T, N, P) and `targets` is (T, N). Returns a closure over a
    parameter-block dict, suitable for :func:`momentum_descent`.
    """
    lags = np.asarray(lags, dtype=float)
    t = lags.shape[0]
    xc = _feature_first(lags)
    is_pair = isinstance(template, Tar2Params)

    def loss_grad(blocks):
        net = template.with_blocks(blocks)
        if is_pair:
            out_a, cache_a = _lane_forward(net.lane_a, xc)
            out_b, cache_b = _lane_forward(net.lane_b, xc)
            out = 0.5 * (out_a + out_b)
            if net.bias is not None:
                out = out + net.bias
        else:
            out, cache = _lane_forward(net, xc)
        resid = targets - out
        loss = float(np.sum(resid**2) / t)
        dout = -2.0 * resid / t
        if is_pair:
            grads = {"a_" + k: v for k, v in _lane_backward(net.lane_a, cache_a, 0.5 * dout).items()}
            grads.update({"b_" + k: v for k, v in _lane_backward(net.lane_b, cache_b, 0.5 * dout).items()})
            if net.bias is not None:
                grads["bias"] = dout.sum(axis=0)
        else:
            grads = _lane_backward(net, cache, dout)
        return loss, grads

    return loss_grad


def init_tar(n, p, ranks, arch="tar", activation="relu", with_bias=False, cfg=None, placement=LAYERS):
    """Random initial network; LTAR draws its blocks exactly like :func:`fit_ltr`."""
    cfg = cfg or TrainConfig()
    ranks = check_ltr_ranks(n, p, ranks)
    rng = np.random.default_rng(cfg.seed)
    bias = np.zeros(n) if with_bias else None
    if arch == "ltar":
        activation = "identity"
    if arch in ("tar", "ltar"):
        return TarParams(**init_ltr_params(n, p, ranks, cfg, rng), bias=bias,
                         activation=activation, placement=tuple(placement))
    if arch == "tar2":
        lanes = [
            TarParams(**init_ltr_params(n, p, ranks, cfg, rng), activation=activation,
                      order=order, placement=tuple(placement))
            for order in ("column", "row")
        ]
        return Tar2Params(*lanes, bias=bias)
    raise ValueError(f"unknown architecture {arch!r}")


def train_tar(
    d: DesignPair,
    arch: str,
    ranks,
    cfg: TrainConfig | None = None,
    with_bias: bool = False,
    activation: str = "relu",
    placement=LAYERS,
) -> FitReport:
    """Train a TAR, TAR-2 or LTAR network with momentum gradient descent."""
    cfg = cfg or TrainConfig()
    start = time.perf_counter()
    net = init_tar(d.n, d.p, ranks, arch, activation, with_bias, cfg, placement)
    lags, targets = d.lag_matrices(), d.y.T
    res = momentum_descent(
        net.blocks(), net_loss_grad(net, lags, targets), cfg, descent_scale(cfg, d.n)
    )
    net = net.with_blocks(res.params)
    linear = isinstance(net, TarParams) and net.activation == "identity"
    return FitReport(
        kind="tar2" if arch == "tar2" else "tar",
        n=d.n,
        p=d.p,
        weights=net.linear_weights() if linear else None,
        final_loss=net_mse(net, d),
        epochs_run=res.epochs,
        loss_trace=res.loss_trace,
        converged=res.converged,
        learning_rate=res.learning_rate,
        wall_seconds=time.perf_counter() - start,
        seed=cfg.seed,
        net=net,
        ranks=tuple(ranks),
        bias=net.bias,
        means=d.means,
    )


def net_mse(net, d: DesignPair) -> float:
    resid = d.y.T - net_forward(net, d.lag_matrices())
    return float(np.sum(resid**2) / d.t)
