"""Companion-form SDE realisation of stationary kernels, solved with Kalman/RTS."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import InvalidArgumentError, NumericalError
from .gp_core import KernelHyperparams, KernelKind, Observations
from .paths import DEDUP_TOL


@dataclass(frozen=True)
class StateSpaceModel:
    """Linear SDE ``df = F f dt + L dbeta`` with white-noise spectral density ``q``."""

    F: np.ndarray
    L: np.ndarray
    q: float
    H: np.ndarray
    P_inf: np.ndarray

    @property
    def m(self) -> int:
        return self.F.shape[0]

    def lyapunov_residual(self) -> np.ndarray:
        return self.F @ self.P_inf + self.P_inf @ self.F.T + self.q * self.L @ self.L.T


def build_ssm(kind: KernelKind, hp: KernelHyperparams) -> StateSpaceModel:
    kind = KernelKind.parse(kind)
    lam, s2 = hp.lam, hp.sigma2_k
    if kind is KernelKind.EXPONENTIAL:
        # OU process: df = -lam f dt + dbeta, q = 2 s2 lam
        F = np.array([[-lam]])
        L = np.array([[1.0]])
        q = 2.0 * s2 * lam
        P_inf = np.array([[s2]])
    elif kind is KernelKind.MATERN32:
        F = np.array([[0.0, 1.0], [-lam * lam, -2.0 * lam]])
        L = np.array([[0.0], [1.0]])
        q = 4.0 * lam**3 * s2
        P_inf = np.diag([s2, lam * lam * s2])
    else:
        raise InvalidArgumentError(f"state-space form not available for {kind}")
    H = np.zeros((1, F.shape[0]))
    H[0, 0] = 1.0
    return StateSpaceModel(F, L, q, H, P_inf)


def discretize(ssm: StateSpaceModel, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact transition ``(A, Q)`` over a step ``dt`` for a stationary model."""
    if not (math.isfinite(dt) and dt > 0):
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    if ssm.m == 1:
        A = np.exp(ssm.F * dt)
    else:
        A = expm(ssm.F * dt)
    Q = ssm.P_inf - A @ ssm.P_inf @ A.T
    return A, 0.5 * (Q + Q.T)


@dataclass(frozen=True)
class KalmanResult:
    grid: np.ndarray
    filtered_means: np.ndarray  # (K, m)
    filtered_covs: np.ndarray  # (K, m, m)
    smoothed_means: np.ndarray
    smoothed_covs: np.ndarray
    log_likelihood: float

    def projected(self, H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and marginal variance of ``H f`` at every grid point."""
        h = H.reshape(-1)
        mean = self.smoothed_means @ h
        var = np.einsum("i,kij,j->k", h, self.smoothed_covs, h)
        return mean, np.clip(var, 0.0, None)


def _sym(P):
    return 0.5 * (P + P.T)


def _clamp_diag(P):
    d = np.diagonal(P).copy()
    if np.any(d < 0):
        P = P.copy()
        np.fill_diagonal(P, np.clip(d, 0.0, None))
    return P


def match_obs_to_grid(grid: np.ndarray, times: np.ndarray) -> dict[int, int]:
    idx = {}
    for j, tau in enumerate(times):
        k = int(np.searchsorted(grid, tau - DEDUP_TOL))
        if k >= grid.size or abs(grid[k] - tau) > DEDUP_TOL:
            raise InvalidArgumentError(f"observation time {tau} is not on the grid")
        idx[k] = j
    return idx


def kalman_smooth(ssm: StateSpaceModel, obs: Observations, grid, sigma2_y: float) -> KalmanResult:
    """Kalman filter from N(0, P_inf) followed by an RTS backward pass."""
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise InvalidArgumentError("grid must be strictly increasing")
    obs_at = match_obs_to_grid(grid, obs.times)
    K, m = grid.size, ssm.m
    H = ssm.H
    h = H.reshape(-1)

    pred_m = np.zeros((K, m))
    pred_P = np.zeros((K, m, m))
    filt_m = np.zeros((K, m))
    filt_P = np.zeros((K, m, m))
    trans = [None] * K
    loglik = 0.0

    mean = np.zeros(m)
    P = ssm.P_inf.copy()
    for k in range(K):
        if k > 0:
            A, Q = discretize(ssm, grid[k] - grid[k - 1])
            trans[k] = A
            mean = A @ mean
            P = _sym(A @ P @ A.T + Q)
        pred_m[k], pred_P[k] = mean, P
        if k in obs_at:
            y = obs.values[obs_at[k]]
            S = float(h @ P @ h) + sigma2_y
            if not S > 0:
                raise NumericalError(f"innovation variance {S} <= 0 at grid index {k}")
            resid = y - float(h @ mean)
            gain = P @ h / S
            mean = mean + gain * resid
            P = _sym(P - np.outer(gain, h @ P))
            P = _clamp_diag(P)
            loglik += -0.5 * (math.log(2 * math.pi * S) + resid * resid / S)
        filt_m[k], filt_P[k] = mean, P

    smooth_m = filt_m.copy()
    smooth_P = filt_P.copy()
    for k in range(K - 2, -1, -1):
        A = trans[k + 1]
        Pp = pred_P[k + 1]
        G = np.linalg.solve(Pp, A @ filt_P[k]).T
        smooth_m[k] = filt_m[k] + G @ (smooth_m[k + 1] - pred_m[k + 1])
        Ps = filt_P[k] + G @ (smooth_P[k + 1] - Pp) @ G.T
        smooth_P[k] = _clamp_diag(_sym(Ps))

    return KalmanResult(grid, filt_m, filt_P, smooth_m, smooth_P, float(loglik))
