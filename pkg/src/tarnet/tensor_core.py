"""Dense matrix and third-order tensor algebra.

Unfoldings follow the Kolda convention: the mode-``n`` unfolding puts the
mode-``n`` fibers in its columns, and the surviving indices are laid out with
the lower-numbered mode varying fastest. With this convention the mode-1
unfolding of a weight tensor whose frontal slices are ``A_1..A_P`` is the
horizontal concatenation ``(A_1, ..., A_P)``. ``vec`` is column-major.

Modes are 1-based throughout to match the usual tensor notation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_TOL = 1e-8


@dataclass(frozen=True)
class TuckerFactors:
    """Core tensor plus one factor matrix per mode."""

    core: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray

    def __post_init__(self):
        if self.core.ndim != 3:
            raise ValueError(f"core must be third-order, got ndim={self.core.ndim}")
        for k, u in enumerate(self.factors, start=1):
            if u.ndim != 2 or u.shape[1] != self.core.shape[k - 1]:
                raise ValueError(
                    f"factor u{k} has shape {u.shape}, expected (*, {self.core.shape[k - 1]})"
                )

    @property
    def factors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.u1, self.u2, self.u3)

    @property
    def ranks(self) -> tuple[int, int, int]:
        return tuple(int(r) for r in self.core.shape)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(u.shape[0]) for u in self.factors)


def _check_tensor(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.ndim != 3:
        raise ValueError(f"expected a third-order tensor, got ndim={t.ndim}")
    return t


def _check_mode(mode: int) -> int:
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    return mode - 1


def vec(m: np.ndarray) -> np.ndarray:
    """Column-major vectorization."""
    return np.asarray(m).reshape(-1, order="F")


def unvec(v: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return np.asarray(v).reshape(shape, order="F")


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-`mode` unfolding of a third-order tensor.

    Parameters
    ----------
    t : ndarray of shape (p1, p2, p3)
    mode : {1, 2, 3}

    Returns
    -------
    ndarray of shape (p_mode, prod(other dims))
    """
    t = _check_tensor(t)
    axis = _check_mode(mode)
    return np.reshape(np.moveaxis(t, axis, 0), (t.shape[axis], -1), order="F")


def fold(m: np.ndarray, mode: int, dims: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    axis = _check_mode(mode)
    m = np.asarray(m, dtype=float)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 1:
        raise ValueError(f"dims must be three positive counts, got {dims}")
    rest = [d for k, d in enumerate(dims) if k != axis]
    if m.shape != (dims[axis], rest[0] * rest[1]):
        raise ValueError(
            f"cannot fold matrix of shape {m.shape} along mode {mode} into {dims}"
        )
    full = np.reshape(m, (dims[axis], *rest), order="F")
    return np.ascontiguousarray(np.moveaxis(full, 0, axis))


def mode_multiply(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """Mode-n product ``t x_n m``: contracts mode `mode` of `t` with the columns of `m`."""
    t = _check_tensor(t)
    axis = _check_mode(mode)
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[1] != t.shape[axis]:
        raise ValueError(
            f"matrix of shape {m.shape} cannot multiply mode {mode} of size {t.shape[axis]}"
        )
    out = np.tensordot(m, t, axes=(1, axis))
    return np.ascontiguousarray(np.moveaxis(out, 0, axis))


def kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.atleast_2d(a), np.atleast_2d(b))


def tucker_reconstruct(f: TuckerFactors) -> np.ndarray:
    """Full tensor ``core x_1 U1 x_2 U2 x_3 U3``."""
    out = f.core
    for mode, u in enumerate(f.factors, start=1):
        out = mode_multiply(out, u, mode)
    return out


def tucker_unfold1(f: TuckerFactors) -> np.ndarray:
    """Mode-1 unfolding of the reconstruction via ``U1 G_(1) (U3 kron U2)^T``."""
    return f.u1 @ unfold(f.core, 1) @ kronecker(f.u3, f.u2).T


def thin_svd(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``m = U diag(s) V^T`` with a deterministic sign convention.

    Each left singular vector is flipped so that its largest-magnitude entry
    is positive; the matching right singular vector is flipped with it.
    Returns ``(U, s, V)`` (note: ``V``, not ``V^T``).
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError("thin_svd input contains non-finite entries")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, s, vt.T * signs


def numerical_rank(m: np.ndarray, tol: float = RANK_TOL) -> int:
    """Number of singular values above ``tol`` times the largest one."""
    s = np.linalg.svd(np.asarray(m, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def tucker_ranks(t: np.ndarray, tol: float = RANK_TOL) -> tuple[int, int, int]:
    return tuple(numerical_rank(unfold(t, k), tol) for k in (1, 2, 3))


def hosvd(t: np.ndarray, ranks: tuple[int, int, int]) -> TuckerFactors:
    """Truncated higher-order SVD.

    Each factor holds the leading left singular vectors of the matching
    unfolding and the core is ``t x_1 U1^T x_2 U2^T x_3 U3^T``.
    """
    t = _check_tensor(t)
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != 3:
        raise ValueError(f"need three ranks, got {ranks}")
    for k, (r, p) in enumerate(zip(ranks, t.shape), start=1):
        if not 1 <= r <= p:
            raise ValueError(f"rank r{k}={r} must lie in [1, {p}]")
    us = []
    core = t
    for mode, r in enumerate(ranks, start=1):
        u = thin_svd(unfold(t, mode))[0][:, :r]
        us.append(u)
        core = mode_multiply(core, u.T, mode)
    return TuckerFactors(core, *us)


def inner_product(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(a * b))


def frobenius_norm(t: np.ndarray) -> float:
    return float(np.sqrt(inner_product(t, t)))
