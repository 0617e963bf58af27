"""Exact batch GP regression and sampling.

Everything approximate elsewhere in the package is checked against these
dense-matrix routines.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InvalidArgumentError, NumericalError
from .paths import PathBundle, TimeGrid

# relative diagonal jitter tried in order before giving up on a Cholesky factorization
JITTER_LADDER = (0.0, 1e-9, 1e-6)


class KernelKind(enum.Enum):
    EXPONENTIAL = "exponential"  # Matern nu=1/2, state dimension 1
    MATERN32 = "matern32"  # Matern nu=3/2, state dimension 2

    @property
    def state_dim(self) -> int:
        return {KernelKind.EXPONENTIAL: 1, KernelKind.MATERN32: 2}[self]

    @classmethod
    def parse(cls, value) -> "KernelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise InvalidArgumentError(
                f"unknown kernel {value!r}; expected one of {[k.value for k in cls]}"
            ) from None


@dataclass(frozen=True)
class KernelHyperparams:
    """Kernel inverse length-scale ``lam``, kernel variance ``sigma2_k`` and noise ``sigma2_y``."""

    lam: float
    sigma2_k: float
    sigma2_y: float = 0.0

    def __post_init__(self):
        for name in ("lam", "sigma2_k", "sigma2_y"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidArgumentError(f"{name} must be finite, got {v}")
        if self.lam <= 0:
            raise InvalidArgumentError(f"lam must be > 0, got {self.lam}")
        if self.sigma2_k <= 0:
            raise InvalidArgumentError(f"sigma2_k must be > 0, got {self.sigma2_k}")
        if self.sigma2_y < 0:
            raise InvalidArgumentError(f"sigma2_y must be >= 0, got {self.sigma2_y}")

    def serialize(self) -> str:
        return f"lam={self.lam!r};sigma2_k={self.sigma2_k!r};sigma2_y={self.sigma2_y!r}"

    @classmethod
    def parse(cls, text: str) -> "KernelHyperparams":
        try:
            fields = dict(part.split("=", 1) for part in text.strip().split(";") if part)
            return cls(float(fields["lam"]), float(fields["sigma2_k"]), float(fields["sigma2_y"]))
        except (KeyError, ValueError) as exc:
            if isinstance(exc, InvalidArgumentError):
                raise
            raise InvalidArgumentError(f"cannot parse hyperparameters from {text!r}") from exc


@dataclass(frozen=True)
class Observations:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        y = np.asarray(self.values, dtype=float).reshape(-1)
        if t.size != y.size:
            raise InvalidArgumentError(f"{t.size} times but {y.size} values")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise InvalidArgumentError("observation times and values must be finite")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise InvalidArgumentError("observation times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)

    @classmethod
    def empty(cls) -> "Observations":
        return cls(np.empty(0), np.empty(0))

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class GpPosterior:
    grid: np.ndarray
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float).reshape(-1)
        mu = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if mu.size != g.size or cov.shape != (g.size, g.size):
            raise InvalidArgumentError("posterior dimensions do not match the grid")
        scale = max(float(np.max(np.abs(cov))) if cov.size else 0.0, 1.0)
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-10 * scale):
            raise InvalidArgumentError("posterior covariance is not symmetric")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "cov", cov)

    @property
    def var(self) -> np.ndarray:
        return np.clip(np.diag(self.cov), 0.0, None)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(np.asarray(a, dtype=float))):
            raise InvalidArgumentError("inputs must be finite")


def _kernel_of_distance(kind: KernelKind, hp: KernelHyperparams, r):
    if kind is KernelKind.EXPONENTIAL:
        return hp.sigma2_k * np.exp(-hp.lam * r)
    if kind is KernelKind.MATERN32:
        lr = hp.lam * r
        return hp.sigma2_k * (1.0 + lr) * np.exp(-lr)
    raise InvalidArgumentError(f"unsupported kernel {kind}")


def kernel_eval(kind: KernelKind, hp: KernelHyperparams, t: float, tp: float) -> float:
    """Stationary covariance k(t, t').

    Exponential: ``s2 * exp(-lam*r)``; Matern-3/2: ``s2 * (1 + lam*r) * exp(-lam*r)``
    with ``r = |t - t'|``.
    """
    _check_finite(t, tp)
    return float(_kernel_of_distance(KernelKind.parse(kind), hp, abs(float(t) - float(tp))))


def gram_matrix(kind: KernelKind, hp: KernelHyperparams, times_a, times_b) -> np.ndarray:
    a = np.asarray(times_a, dtype=float).reshape(-1)
    b = np.asarray(times_b, dtype=float).reshape(-1)
    _check_finite(a, b)
    return _kernel_of_distance(KernelKind.parse(kind), hp, np.abs(a[:, None] - b[None, :]))


def jittered_cholesky(mat: np.ndarray, scale: float) -> np.ndarray:
    """Lower Cholesky factor, retrying with growing diagonal jitter proportional to ``scale``."""
    n = mat.shape[0]
    for rel in JITTER_LADDER:
        try:
            return np.linalg.cholesky(mat + rel * scale * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    eig = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    raise NumericalError(
        f"Cholesky failed after jitter {JITTER_LADDER[-1] * scale:.3g}; "
        f"min eigenvalue {eig.min():.3g}, size {n}"
    )


def _solve_lower(L, B):
    return solve_triangular(L, B, lower=True)


def gp_regress(kind: KernelKind, hp: KernelHyperparams, obs: Observations, grid) -> GpPosterior:
    """Posterior moments of f on ``grid`` given noisy observations of f."""
    kind = KernelKind.parse(kind)
    grid = np.asarray(grid, dtype=float).reshape(-1)
    _check_finite(grid)
    k_ss = gram_matrix(kind, hp, grid, grid)
    if len(obs) == 0:
        return GpPosterior(grid, np.zeros(grid.size), k_ss)
    k_oo = gram_matrix(kind, hp, obs.times, obs.times) + hp.sigma2_y * np.eye(len(obs))
    k_os = gram_matrix(kind, hp, obs.times, grid)
    L = jittered_cholesky(k_oo, hp.sigma2_k)
    alpha = _solve_lower(L, obs.values)
    v = _solve_lower(L, k_os)
    mean = v.T @ alpha
    cov = k_ss - v.T @ v
    cov = 0.5 * (cov + cov.T)
    return GpPosterior(grid, mean, cov)


def gp_log_marginal(kind: KernelKind, hp: KernelHyperparams, obs: Observations) -> float:
    """log N(y; 0, K + sigma2_y I) from the dense Gram matrix."""
    n = len(obs)
    if n == 0:
        return 0.0
    k_oo = gram_matrix(kind, hp, obs.times, obs.times) + hp.sigma2_y * np.eye(n)
    L = jittered_cholesky(k_oo, hp.sigma2_k)
    alpha = _solve_lower(L, obs.values)
    return float(-0.5 * alpha @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2 * math.pi))


def gp_sample(posterior: GpPosterior, n: int, seed) -> PathBundle:
    """``n`` joint draws ``mean + L z`` on the posterior grid, as an ``m = 1`` bundle."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    rng = np.random.default_rng(seed)
    size = posterior.grid.size
    scale = float(np.max(np.diag(posterior.cov))) if size else 0.0
    z = rng.standard_normal((n, size))
    if scale <= 0.0:
        draws = np.broadcast_to(posterior.mean, (n, size)).copy()
    else:
        L = jittered_cholesky(posterior.cov, scale)
        draws = posterior.mean[None, :] + z @ L.T
    return PathBundle(TimeGrid(posterior.grid), draws[:, :, None])
