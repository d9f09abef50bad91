"""VAR(P) processes: stationarity, spectral dependence measures, simulation.

The weight tensor ``w`` has shape ``(N, N, P)`` and its frontal slice
``w[:, :, k]`` is the lag-``k+1`` coefficient matrix, so that
``unfold(w, 1) = (A_1, ..., A_P)`` and ``y_t = W x_t + e_t`` with
``x_t = (y_{t-1}; ...; y_{t-P})``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .tensor_core import TuckerFactors, thin_svd, tucker_reconstruct, unfold

DEFAULT_BURN_IN = 500
DEFAULT_GRID_POINTS = 1024
DIVERGENCE_LIMIT = 1e6


class NonStationaryError(ValueError):
    pass


class GenerationDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class VarWeights:
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 3 or w.shape[0] != w.shape[1]:
            raise ValueError(f"VAR weights must have shape (N, N, P), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("VAR weights contain non-finite entries")
        object.__setattr__(self, "w", w)

    @classmethod
    def from_lags(cls, *lags: np.ndarray) -> "VarWeights":
        return cls(np.stack([np.atleast_2d(a) for a in lags], axis=2))

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def p(self) -> int:
        return self.w.shape[2]

    @property
    def matrix(self) -> np.ndarray:
        """``W = (A_1, ..., A_P)``, shape ``(N, NP)``."""
        return unfold(self.w, 1)

    def scaled(self, c: float) -> "VarWeights":
        return VarWeights(c * self.w)


@dataclass(frozen=True)
class NoiseSpec:
    covariance: np.ndarray
    seed: object = None

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape[0] != cov.shape[1]:
            raise ValueError(f"noise covariance must be square, got {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise ValueError("noise covariance is not symmetric")
        if np.linalg.eigvalsh(cov)[0] <= 0:
            raise ValueError("noise covariance is not positive definite")
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def identity(cls, n: int, seed=None) -> "NoiseSpec":
        return cls(np.eye(n), seed)


@dataclass(frozen=True)
class SpectralSummary:
    mu_min: float
    mu_max: float
    grid_points: int
    stationary: bool = True
    m_constant: float | None = field(default=None)


def companion_matrix(w: VarWeights) -> np.ndarray:
    n, p = w.n, w.p
    comp = np.zeros((n * p, n * p))
    comp[:n, :] = w.matrix
    if p > 1:
        comp[n:, : n * (p - 1)] = np.eye(n * (p - 1))
    return comp


def spectral_radius(w: VarWeights) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(companion_matrix(w)))))


def is_stationary(w: VarWeights, margin: float = 0.0) -> bool:
    """True iff the companion spectral radius is below ``1 - margin``."""
    if not 0.0 <= margin < 1.0:
        raise ValueError(f"margin must lie in [0, 1), got {margin}")
    return spectral_radius(w) < 1.0 - margin


def rescale_to_stationary(
    w: VarWeights, target_radius: float = 0.9, tol: float = 1e-9
) -> VarWeights:
    """Scale all lag matrices by one positive constant to hit `target_radius`.

    The multiplier is found by bisection; the returned weights sit on the
    stationary side of the target, within `tol` of it.
    """
    return w.scaled(stationary_multiplier(w, target_radius, tol))


def stationary_multiplier(w: VarWeights, target_radius: float = 0.9, tol: float = 1e-9) -> float:
    if not 0.0 < target_radius < 1.0:
        raise ValueError(f"target_radius must lie in (0, 1), got {target_radius}")
    if not np.any(w.w):
        raise ValueError("cannot rescale an all-zero weight tensor")

    def radius(c):
        return spectral_radius(w.scaled(c))

    lo, hi = 0.0, 1.0
    while radius(hi) <= target_radius:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise ValueError("weights are nilpotent; no scaling reaches the target radius")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = radius(mid)
        if r <= target_radius:
            lo = mid
            if target_radius - r < tol:
                break
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return lo


def spectral_mu(w: VarWeights, grid_points: int = DEFAULT_GRID_POINTS) -> SpectralSummary:
    """Extreme eigenvalues of ``A*(z) A(z)`` over a uniform grid on the unit circle.

    ``A(z) = I - A_1 z - ... - A_P z^P``. The continuum min/max is
    approximated by the grid extremes.
    """
    if grid_points < 64:
        raise ValueError(f"grid_points must be at least 64, got {grid_points}")
    stationary = is_stationary(w)
    if not stationary:
        warnings.warn("spectral_mu called on non-stationary weights", RuntimeWarning)
    theta = 2.0 * np.pi * np.arange(grid_points) / grid_points
    powers = np.exp(1j * np.outer(theta, np.arange(1, w.p + 1)))
    poly = np.eye(w.n) - np.einsum("gk,ijk->gij", powers, w.w)
    herm = np.conj(np.transpose(poly, (0, 2, 1))) @ poly
    eig = np.linalg.eigvalsh(herm)
    return SpectralSummary(
        mu_min=float(eig[:, 0].min()),
        mu_max=float(eig[:, -1].max()),
        grid_points=grid_points,
        stationary=stationary,
    )


def dependence_constant(mu: SpectralSummary, sigma_e: np.ndarray) -> float:
    """``lambda_max(Sigma_e) mu_max / (lambda_min(Sigma_e) sqrt(mu_min))``."""
    eig = np.linalg.eigvalsh(np.atleast_2d(np.asarray(sigma_e, dtype=float)))
    if eig[0] <= 0:
        raise ValueError("noise covariance must be positive definite")
    if mu.mu_min <= 0:
        raise ValueError("mu_min must be positive")
    return float(eig[-1] * mu.mu_max / (eig[0] * np.sqrt(mu.mu_min)))


def spectral_summary(
    w: VarWeights, sigma_e: np.ndarray | None = None, grid_points: int = DEFAULT_GRID_POINTS
) -> SpectralSummary:
    mu = spectral_mu(w, grid_points)
    sigma_e = np.eye(w.n) if sigma_e is None else sigma_e
    m = dependence_constant(mu, sigma_e)
    return SpectralSummary(mu.mu_min, mu.mu_max, mu.grid_points, mu.stationary, m)


def _check_ranks(n, p, ranks):
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != 3:
        raise ValueError(f"need three ranks, got {ranks}")
    for k, (r, d) in enumerate(zip(ranks, (n, n, p)), start=1):
        if not 1 <= r <= d:
            raise ValueError(f"rank r{k}={r} must lie in [1, {d}]")
    r1, r2, r3 = ranks
    if r1 > r2 * r3 or r2 > r1 * r3 or r3 > r1 * r2:
        raise ValueError(f"ranks {ranks} are not attainable: each must be <= product of the others")
    return ranks


def low_tucker_factors(
    n: int, p: int, ranks, core_gain: float = 0.9, target_radius: float = 0.9, seed=None
) -> tuple[TuckerFactors, VarWeights]:
    """Random low-Tucker-rank stationary weights and Tucker factors producing them.

    The core is rescaled so its mode-1 unfolding has largest singular value
    `core_gain`; after the stationarity rescale the multiplier is folded into
    the returned core, so ``tucker_reconstruct(factors) == weights.w``.
    """
    ranks = _check_ranks(n, p, ranks)
    rng = np.random.default_rng(seed)
    core = rng.standard_normal(ranks)
    core *= core_gain / np.linalg.norm(unfold(core, 1), 2)
    us = [thin_svd(rng.standard_normal((d, d)))[0][:, :r] for d, r in zip((n, n, p), ranks)]
    factors = TuckerFactors(core, *us)
    raw = VarWeights(tucker_reconstruct(factors))
    c = stationary_multiplier(raw, target_radius)
    return TuckerFactors(c * core, *us), raw.scaled(c)


def generate_low_tucker_weights(
    n: int, p: int, ranks, core_gain: float = 0.9, seed=None, target_radius: float = 0.9
) -> VarWeights:
    return low_tucker_factors(n, p, ranks, core_gain, target_radius, seed)[1]


def simulate_var(
    w: VarWeights, noise: NoiseSpec, t_effective: int, burn_in: int = DEFAULT_BURN_IN
) -> np.ndarray:
    """Simulate ``y_t = sum_k A_k y_{t-k} + e_t`` from a zero initial state.

    Returns ``t_effective + P`` rows (time-major) after discarding `burn_in`,
    i.e. exactly `t_effective` design pairs.
    """
    if burn_in < 0 or t_effective < 1:
        raise ValueError("need t_effective >= 1 and burn_in >= 0")
    if noise.covariance.shape[0] != w.n:
        raise ValueError("noise dimension does not match the weights")
    if not is_stationary(w):
        raise NonStationaryError("VAR weights are not stationary; simulation would diverge")
    n, p = w.n, w.p
    total = burn_in + t_effective + p
    chol = np.linalg.cholesky(noise.covariance)
    shocks = np.random.default_rng(noise.seed).standard_normal((total, n)) @ chol.T
    big_w = w.matrix
    y = np.zeros((total + p, n))
    for t in range(p, total + p):
        x = y[t - p : t][::-1].reshape(-1)
        y[t] = big_w @ x + shocks[t - p]
    return y[p + burn_in :]


def _dgp_seeds(seed):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(2)


def generate_l_dgp(n, p, ranks, t_effective, burn_in=DEFAULT_BURN_IN, seed=None):
    """Linear DGP: random stationary low-Tucker-rank weights driven by unit noise.

    Returns ``(series, weights)``.
    """
    w_seed, e_seed = _dgp_seeds(seed)
    weights = generate_low_tucker_weights(n, p, ranks, seed=w_seed)
    return simulate_var(weights, NoiseSpec.identity(n, e_seed), t_effective, burn_in), weights


def dgp_weights(n, p, ranks, seed=None) -> VarWeights:
    """The weights both DGPs draw for `seed` (the NL-DGP's linear counterpart)."""
    return generate_low_tucker_weights(n, p, ranks, seed=_dgp_seeds(seed)[0])


def cosine_gate(e: np.ndarray) -> np.ndarray:
    """``E * cos(1 / ||E||_F)``; the zero matrix passes through unchanged."""
    norm = np.linalg.norm(e)
    if norm == 0.0:
        return e
    return e * np.cos(1.0 / norm)


def generate_nl_dgp(
    n, p, ranks, t_effective, burn_in=DEFAULT_BURN_IN, seed=None, nonlinear: bool = True
) -> np.ndarray:
    """Nonlinear DGP built on a low-rank encoder/decoder.

    Each step encodes the lag matrix ``X_t`` (N x P, newest lag first) as
    ``E_t = U2^T X_t U3``, gates it with :func:`cosine_gate`, decodes with the
    fixed map ``U1 G_(1)`` and adds unit Gaussian noise. The random parameters
    are the ones :func:`generate_l_dgp` draws for the same seed, so with
    ``nonlinear=False`` the two generators produce the same recursion.
    """
    w_seed, e_seed = _dgp_seeds(seed)
    factors, _ = low_tucker_factors(n, p, ranks, seed=w_seed)
    decoder = factors.u1 @ unfold(factors.core, 1)
    u2, u3 = factors.u2, factors.u3
    total = burn_in + t_effective + p
    shocks = np.random.default_rng(e_seed).standard_normal((total, n))
    gate = cosine_gate if nonlinear else (lambda e: e)
    y = np.zeros((total + p, n))
    for t in range(p, total + p):
        lags = y[t - p : t][::-1].T
        code = gate(u2.T @ lags @ u3)
        y[t] = decoder @ code.reshape(-1, order="F") + shocks[t - p]
        if np.max(np.abs(y[t])) > DIVERGENCE_LIMIT:
            raise GenerationDivergedError(
                f"nonlinear DGP diverged at step {t - p} (|y| > {DIVERGENCE_LIMIT:g})"
            )
    return y[p + burn_in :]
