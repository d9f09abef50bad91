"""OLS, low-rank (LR) and low-Tucker-rank (LTR) estimators of VAR weights.

All three minimise ``(1/T) sum_t ||y_t - W x_t||^2`` over centered data; they
differ in how ``W = unfold(w, 1)`` is parameterised:

* OLS: ``W`` free, solved in closed form;
* LR: ``W = A B`` with ``A`` (N x r), ``B`` (r x NP);
* LTR: ``W = U1 G_(1) (U3 kron U2)^T``.

LR and LTR are trained jointly over all factors by full-batch gradient
descent with classic momentum.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor_core import TuckerFactors, fold, frobenius_norm, kronecker
from .var_process import VarWeights


@dataclass
class DesignPair:
    """Stacked lag inputs ``x`` (NP x T) and targets ``y`` (N x T)."""

    x: np.ndarray
    y: np.ndarray
    p: int
    means: np.ndarray | None = None

    def __post_init__(self):
        if self.x.shape[1] != self.y.shape[1]:
            raise ValueError("inputs and targets must have the same number of columns")
        if self.x.shape[0] != self.y.shape[0] * self.p:
            raise ValueError(f"input rows {self.x.shape[0]} != N*P = {self.y.shape[0] * self.p}")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def t(self) -> int:
        return self.y.shape[1]

    def lag_matrices(self) -> np.ndarray:
        """Inputs as a ``(T, N, P)`` stack of lag matrices ``X_t = (y_{t-1}, ..., y_{t-P})``."""
        return np.ascontiguousarray(np.transpose(self.x.reshape(self.p, self.n, self.t), (2, 1, 0)))

    def moments(self) -> tuple[np.ndarray, np.ndarray, float]:
        """``(XX^T/T, YX^T/T, ||Y||^2/T)``."""
        t = self.t
        return self.x @ self.x.T / t, self.y @ self.x.T / t, float(np.sum(self.y**2) / t)


def build_design(series: np.ndarray, p: int, center: bool = True) -> DesignPair:
    """Turn a ``(T+P) x N`` series into ``T`` (input, target) pairs.

    With `center`, each variable's mean over `series` is removed from inputs
    and targets alike and kept on the design for forecasting.
    """
    s = np.asarray(series, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if p < 1:
        raise ValueError(f"lag order must be positive, got {p}")
    if s.shape[0] <= p:
        raise ValueError(f"series of length {s.shape[0]} is too short for lag order {p}")
    means = s.mean(axis=0) if center else None
    if center:
        s = s - means
    length = s.shape[0]
    y = s[p:].T.copy()
    x = np.vstack([s[p - k : length - k].T for k in range(1, p + 1)])
    return DesignPair(x, y, p, means)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    loss_drop_tolerance: float = 1e-8
    max_epochs: int = 10_000
    seed: int = 0
    init_scale: float = 0.1
    # average the squared error over outputs as well as samples while descending
    per_entry_loss: bool = True
    # a non-finite loss, or one above the initial loss, counts as divergence;
    # descent then resumes from the best point so far at half the rate
    divergence_retries: int = 3

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.loss_drop_tolerance <= 0:
            raise ValueError("loss_drop_tolerance must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be nonnegative")
        if self.divergence_retries < 0:
            raise ValueError("divergence_retries must be nonnegative")


@dataclass
class FitReport:
    kind: str
    n: int
    p: int
    weights: VarWeights | None
    final_loss: float
    epochs_run: int = 0
    loss_trace: list[float] = field(default_factory=list)
    converged: bool = True
    wall_seconds: float = 0.0
    seed: int | None = None
    factors: object = None
    net: object = None
    ranks: tuple[int, int, int] | None = None
    r: int | None = None
    bias: np.ndarray | None = None
    means: np.ndarray | None = None
    non_unique: bool = False
    learning_rate: float | None = None

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Predictions (N x B) for centered stacked inputs `x` (NP x B)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if self.net is not None:
            from .tar_net import net_forward

            lags = np.transpose(x.reshape(self.p, self.n, -1), (2, 1, 0))
            return net_forward(self.net, lags).T
        out = self.weights.matrix @ x
        if self.bias is not None:
            out = out + self.bias[:, None]
        return out


# ---------------------------------------------------------------------------
# momentum gradient descent
# ---------------------------------------------------------------------------

LossGrad = Callable[[dict], tuple[float, dict]]


@dataclass
class DescentResult:
    params: dict
    loss: float
    loss_trace: list[float]
    epochs: int
    converged: bool
    learning_rate: float


def momentum_descent(
    params: dict, loss_grad: LossGrad, cfg: TrainConfig, scale: float = 1.0
) -> DescentResult:
    """Full-batch gradient descent with classic momentum.

    ``v <- momentum * v - lr * scale * grad; theta <- theta + v``. The
    objective being descended is ``scale * loss``; it stops once that changes
    by less than ``cfg.loss_drop_tolerance`` between consecutive epochs, or
    after ``cfg.max_epochs`` updates. Losses in the trace are unscaled, and the
    returned loss is the one at the returned parameters.

    The loss diverges when it becomes non-finite or rises above its value at
    the initial point. Descent then returns to the best parameters seen,
    clears the velocity and halves the learning rate, at most ``cfg.divergence_retries`` times within the same
    epoch budget; one more divergence raises ``FloatingPointError``. The
    final learning rate is returned.
    """
    lr = cfg.learning_rate
    halvings = 0
    # overflow shows up as a non-finite loss, which is handled below
    with np.errstate(over="ignore", invalid="ignore"):
        params = {k: np.array(v, dtype=float) for k, v in params.items()}
        velocity = {k: np.zeros_like(v) for k, v in params.items()}
        loss, grads = loss_grad(params)
        if not np.isfinite(loss):
            raise FloatingPointError("loss is non-finite at the initial point")
        trace = [loss]
        best = (loss, {k: v.copy() for k, v in params.items()}, grads)
        converged = False
        epochs = 0
        while epochs < cfg.max_epochs:
            for k in params:
                velocity[k] *= cfg.momentum
                velocity[k] -= (lr * scale) * grads[k]
                params[k] += velocity[k]
            epochs += 1
            prev = loss
            loss, grads = loss_grad(params)
            trace.append(loss)
            if _diverged(loss, trace[0], scale, cfg):
                if halvings == cfg.divergence_retries:
                    raise FloatingPointError(
                        f"loss {loss:.6g} at epoch {epochs} diverged above its initial value {trace[0]:.6g} "
                        f"at learning rate {lr:g} after {halvings} halvings"
                    )
                halvings += 1
                lr /= 2
                loss, saved, grads = best
                params = {k: v.copy() for k, v in saved.items()}
                velocity = {k: np.zeros_like(v) for k, v in params.items()}
                continue
            if loss < best[0]:
                best = (loss, {k: v.copy() for k, v in params.items()}, grads)
            if scale * abs(prev - loss) < cfg.loss_drop_tolerance:
                converged = True
                break
    return DescentResult(params, loss, trace, epochs, converged, lr)


def _diverged(loss, initial, scale, cfg) -> bool:
    # rises within the stop tolerance are rounding noise
    return not np.isfinite(loss) or scale * (loss - initial) > cfg.loss_drop_tolerance


# ---------------------------------------------------------------------------
# losses and analytic gradients
# ---------------------------------------------------------------------------


def mse_loss(w_unfolded: np.ndarray, d: DesignPair) -> float:
    """``(1/T) sum_t ||y_t - W x_t||^2``."""
    w_unfolded = np.asarray(w_unfolded, dtype=float)
    if w_unfolded.shape != (d.n, d.x.shape[0]):
        raise ValueError(f"weights of shape {w_unfolded.shape} do not match design ({d.n}, {d.x.shape[0]})")
    resid = d.y - w_unfolded @ d.x
    return float(np.sum(resid**2) / d.t)


def descent_scale(cfg: TrainConfig, n: int) -> float:
    return 1.0 / n if cfg.per_entry_loss else 1.0


class _Quadratic:
    """Loss and gradient in ``W`` from the second moments of the design."""

    def __init__(self, d: DesignPair):
        self.sxx, self.syx, self.syy = d.moments()

    def __call__(self, w):
        wsxx = w @ self.sxx
        loss = self.syy - 2.0 * np.sum(w * self.syx) + np.sum(wsxx * w)
        return float(loss), 2.0 * (wsxx - self.syx)


def lr_loss_grad(d: DesignPair) -> LossGrad:
    quad = _Quadratic(d)

    def loss_grad(params):
        a, b = params["a"], params["b"]
        loss, gw = quad(a @ b)
        return loss, {"a": gw @ b.T, "b": a.T @ gw}

    return loss_grad


def ltr_weight_matrix(u1, u2, u3, g1) -> np.ndarray:
    return u1 @ g1 @ kronecker(u3, u2).T


def ltr_grads_from_w(gw, u1, u2, u3, g1) -> dict:
    """Chain rule from ``dL/dW`` to the Tucker blocks of ``W = U1 G1 (U3 kron U2)^T``."""
    n, r2 = u2.shape
    p, r3 = u3.shape
    k = kronecker(u3, u2)
    gw_k = gw @ k
    gk = gw.T @ (u1 @ g1)
    gk4 = gk.reshape((n, p, r2, r3), order="F")
    return {
        "u1": gw_k @ g1.T,
        "u2": np.einsum("ijab,jb->ia", gk4, u3),
        "u3": np.einsum("ijab,ia->jb", gk4, u2),
        "g1": u1.T @ gw_k,
    }


def ltr_loss_grad(d: DesignPair) -> LossGrad:
    quad = _Quadratic(d)

    def loss_grad(params):
        u1, u2, u3, g1 = params["u1"], params["u2"], params["u3"], params["g1"]
        loss, gw = quad(ltr_weight_matrix(u1, u2, u3, g1))
        return loss, ltr_grads_from_w(gw, u1, u2, u3, g1)

    return loss_grad


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def _weights_from_matrix(w_unfolded, n, p) -> VarWeights:
    return VarWeights(fold(w_unfolded, 1, (n, n, p)))


def fit_ols(d: DesignPair) -> FitReport:
    """Closed-form least squares; minimum-norm solution if ``XX^T`` is singular."""
    start = time.perf_counter()
    sol, _, rank, _ = np.linalg.lstsq(d.x.T, d.y.T, rcond=None)
    w = sol.T
    loss = mse_loss(w, d)
    return FitReport(
        kind="ols",
        n=d.n,
        p=d.p,
        weights=_weights_from_matrix(w, d.n, d.p),
        final_loss=loss,
        loss_trace=[loss],
        wall_seconds=time.perf_counter() - start,
        means=d.means,
        non_unique=bool(rank < d.x.shape[0]),
    )


def init_ltr_params(n, p, ranks, cfg: TrainConfig, rng=None) -> dict:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    r1, r2, r3 = ranks
    s = cfg.init_scale
    return {
        "u1": s * rng.standard_normal((n, r1)),
        "u2": s * rng.standard_normal((n, r2)),
        "u3": s * rng.standard_normal((p, r3)),
        "g1": s * rng.standard_normal((r1, r2 * r3)),
    }


def fit_lr(d: DesignPair, r: int, cfg: TrainConfig | None = None) -> FitReport:
    cfg = cfg or TrainConfig()
    np_dim = d.x.shape[0]
    if not 1 <= r <= min(d.n, np_dim):
        raise ValueError(f"rank r={r} must lie in [1, {min(d.n, np_dim)}]")
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    init = {
        "a": cfg.init_scale * rng.standard_normal((d.n, r)),
        "b": cfg.init_scale * rng.standard_normal((r, np_dim)),
    }
    res = momentum_descent(init, lr_loss_grad(d), cfg, descent_scale(cfg, d.n))
    a, b = res.params["a"], res.params["b"]
    w = a @ b
    return FitReport(
        kind="lr",
        n=d.n,
        p=d.p,
        weights=_weights_from_matrix(w, d.n, d.p),
        final_loss=mse_loss(w, d),
        epochs_run=res.epochs,
        loss_trace=res.loss_trace,
        converged=res.converged,
        learning_rate=res.learning_rate,
        wall_seconds=time.perf_counter() - start,
        seed=cfg.seed,
        factors=(a, b),
        r=r,
        means=d.means,
        non_unique=bool(np.linalg.matrix_rank(d.x) < np_dim),
    )


def check_ltr_ranks(n, p, ranks) -> tuple[int, int, int]:
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != 3:
        raise ValueError(f"need three ranks, got {ranks}")
    for k, (r, dim) in enumerate(zip(ranks, (n, n, p)), start=1):
        if not 1 <= r <= dim:
            raise ValueError(f"rank r{k}={r} must lie in [1, {dim}]")
    return ranks


def fit_ltr(d: DesignPair, ranks, cfg: TrainConfig | None = None) -> FitReport:
    cfg = cfg or TrainConfig()
    ranks = check_ltr_ranks(d.n, d.p, ranks)
    start = time.perf_counter()
    res = momentum_descent(
        init_ltr_params(d.n, d.p, ranks, cfg), ltr_loss_grad(d), cfg, descent_scale(cfg, d.n)
    )
    u1, u2, u3, g1 = (res.params[k] for k in ("u1", "u2", "u3", "g1"))
    factors = TuckerFactors(fold(g1, 1, ranks), u1, u2, u3)
    w = ltr_weight_matrix(u1, u2, u3, g1)
    return FitReport(
        kind="ltr",
        n=d.n,
        p=d.p,
        weights=_weights_from_matrix(w, d.n, d.p),
        final_loss=mse_loss(w, d),
        epochs_run=res.epochs,
        loss_trace=res.loss_trace,
        converged=res.converged,
        learning_rate=res.learning_rate,
        wall_seconds=time.perf_counter() - start,
        seed=cfg.seed,
        factors=factors,
        ranks=ranks,
        means=d.means,
    )


def estimation_error(fit: FitReport, truth: VarWeights) -> float:
    if fit.weights is None:
        raise ValueError(f"a {fit.kind!r} fit has no full weight tensor")
    if fit.weights.w.shape != truth.w.shape:
        raise ValueError(f"dimension mismatch: {fit.weights.w.shape} vs {truth.w.shape}")
    return frobenius_norm(fit.weights.w - truth.w)


def parameter_count(kind: str, n: int, p: int, ranks_or_r=None, bias: bool = True) -> int:
    """Number of trainable weights.

    OLS ``N^2 P``; LR ``r(N + NP)``; LTR ``r1 r2 r3 + N r1 + N r2 + P r3``.
    TAR nets add ``N`` output biases when `bias` is set, and TAR-2 holds two
    independent LTR-sized lanes.
    """
    if kind == "ols":
        return n * n * p
    if kind == "lr":
        r = int(ranks_or_r)
        return r * (n + n * p)
    r1, r2, r3 = ranks_or_r
    ltr = r1 * r2 * r3 + n * r1 + n * r2 + p * r3
    extra = n if bias else 0
    if kind == "ltr":
        return ltr
    if kind in ("tar", "ltar"):
        return ltr + extra
    if kind == "tar2":
        return 2 * ltr + extra
    raise ValueError(f"unknown model kind {kind!r}")


def lags_to_x(lags: np.ndarray) -> np.ndarray:
    """Inverse of :meth:`DesignPair.lag_matrices` for a single ``N x P`` matrix."""
    return np.asarray(lags).reshape(-1, order="F")

