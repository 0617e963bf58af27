"""Euler-Maruyama transitions, prior path simulation and path log-densities."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import autodiff as ad
from .errors import InvalidArgumentError, NumericalError
from .gp_core import jittered_cholesky
from .paths import PathBundle, TimeGrid
from .ssm import StateSpaceModel, discretize

__all__ = [
    "PathBundle",
    "TimeGrid",
    "em_step_density_params",
    "simulate_prior",
    "em_log_density",
    "ou_em_log_density",
]


def em_step_density_params(
    drift: Callable, diffusion: Callable, f_k, dt: float, theta
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian transition ``N(f_k + dt g(f_k), c c^T dt)`` of one Euler-Maruyama step.

    ``diffusion`` returns the loading matrix ``c`` (``m x r``); a vector is
    read as a single noise channel.
    """
    if not (math.isfinite(dt) and dt > 0):
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    f_k = np.atleast_1d(np.asarray(f_k, dtype=float))
    g = np.atleast_1d(np.asarray(drift(f_k, theta), dtype=float))
    c = np.asarray(diffusion(f_k, theta), dtype=float)
    if c.ndim < 2:
        c = np.atleast_1d(c).reshape(-1, 1)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(c))):
        raise NumericalError("drift or diffusion produced a non-finite value")
    return f_k + dt * g, (c @ c.T) * dt


def _linear_drift(ssm: StateSpaceModel):
    return lambda f, _theta: ssm.F @ f


def _linear_diffusion(ssm: StateSpaceModel):
    load = ssm.L * math.sqrt(ssm.q)
    return lambda _f, _theta: load


def simulate_prior(ssm: StateSpaceModel, grid: TimeGrid, n: int, seed) -> PathBundle:
    """Euler-Maruyama draws of the prior SDE started from N(0, P_inf).

    A single generator seeded with ``seed`` draws the initial states
    ``(n, m)`` and then the step noise ``(n, T, r)`` in that order; path ``i``
    uses row ``i`` of each, so any subset of paths can be regenerated by
    slicing the same draws.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    rng = np.random.default_rng(seed)
    m = ssm.m
    chol0 = jittered_cholesky(ssm.P_inf, float(np.max(np.diag(ssm.P_inf))))
    z0 = rng.standard_normal((n, m))
    dts = grid.dts
    eps = rng.standard_normal((n, dts.size, ssm.L.shape[1]))
    load = ssm.L * math.sqrt(ssm.q)  # (m, r)
    states = np.empty((n, len(grid), m))
    states[:, 0] = z0 @ chol0.T
    for k, dt in enumerate(dts):
        f = states[:, k]
        states[:, k + 1] = f + dt * f @ ssm.F.T + math.sqrt(dt) * eps[:, k] @ load.T
    return PathBundle(grid, states)


def _gauss_logpdf(x, mean, cov) -> float:
    cov = np.atleast_2d(cov)
    resid = np.atleast_1d(x) - np.atleast_1d(mean)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NumericalError("singular step covariance") from None
    z = np.linalg.solve(L, resid)
    return float(-0.5 * z @ z - np.log(np.diag(L)).sum() - 0.5 * resid.size * math.log(2 * math.pi))


def em_log_density(ssm: StateSpaceModel, path, grid: TimeGrid) -> float:
    """log N(f_0; 0, P_inf) plus the log transition density of every step.

    For ``m = 1`` each step is the Euler-Maruyama Gaussian. For ``m > 1`` the
    Euler-Maruyama covariance ``q L L^T dt`` is rank one, so the exact
    discretisation covariance is used with the Euler-Maruyama mean.
    """
    path = np.asarray(path, dtype=float)
    if path.ndim == 1:
        path = path[:, None]
    if path.shape != (len(grid), ssm.m):
        raise InvalidArgumentError(f"path shape {path.shape} does not match grid/state dim")
    total = _gauss_logpdf(path[0], np.zeros(ssm.m), ssm.P_inf)
    drift, diffusion = _linear_drift(ssm), _linear_diffusion(ssm)
    for k, dt in enumerate(grid.dts):
        mean, cov = em_step_density_params(drift, diffusion, path[k], dt, None)
        if ssm.m > 1:
            cov = discretize(ssm, dt)[1]
        total += _gauss_logpdf(path[k + 1], mean, cov)
    return total


def ou_em_log_density(lam, sigma2_k, paths, dts) -> ad.Tensor:
    """Differentiable Euler-Maruyama log density of OU paths, one value per path.

    ``lam`` and ``sigma2_k`` have shape ``(n, 1)``, ``paths`` ``(n, K)`` and
    ``dts`` ``(K - 1,)``. Any argument may be a constant array.
    """
    tape = ad._tape_of(lam, sigma2_k, paths)
    paths = ad._lift(paths, tape)
    lam = ad._lift(lam, tape)
    sigma2_k = ad._lift(sigma2_k, tape)
    dts = np.asarray(dts, dtype=float)[None, :]
    init = ad.gaussian_log_pdf(paths[:, 0:1], 0.0, sigma2_k, axis=1)
    prev = paths[:, :-1]
    mean = prev - prev * lam * dts
    var = 2.0 * sigma2_k * lam * dts
    steps = ad.gaussian_log_pdf(paths[:, 1:], mean, var, axis=1)
    return init + steps
