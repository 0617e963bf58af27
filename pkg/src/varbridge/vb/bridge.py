"""Rollout of the variational bridge: the implicit map from noise to paths."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..errors import InvalidArgumentError, NumericalError
from ..gp_core import KernelHyperparams, Observations
from ..paths import TimeGrid
from .rnn import BridgeRnn


def step_features(obs: Observations, grid: TimeGrid) -> np.ndarray:
    """Observation-dependent cell inputs for every step ``k -> k+1``, shape ``(K-1, 5)``.

    Columns: normalised ``t_k``, ``dt_k``, time to the next observation strictly
    after ``t_k``, that observation's value, and 1 once the last observation has
    been passed (time and value are then 0).
    """
    t = grid.points
    span = t[-1] - t[0] if t.size > 1 else 1.0
    feats = np.zeros((t.size - 1, 5))
    feats[:, 0] = (t[:-1] - t[0]) / span
    feats[:, 1] = np.diff(t)
    nxt = np.searchsorted(obs.times, t[:-1], side="right")
    has_next = nxt < len(obs)
    idx = np.minimum(nxt, max(len(obs) - 1, 0))
    if len(obs):
        feats[:, 2] = np.where(has_next, obs.times[idx] - t[:-1], 0.0)
        feats[:, 3] = np.where(has_next, obs.values[idx], 0.0)
    feats[:, 4] = (~has_next).astype(float)
    return feats


@dataclass
class RolloutTrace:
    paths: ad.Tensor  # (n, K)
    log_q: ad.Tensor  # (n,)
    drift: ad.Tensor  # (n, K-1)
    diffusion: ad.Tensor  # (n, K-1)
    init_mean: ad.Tensor
    init_std: ad.Tensor


def rollout_tensor(cell, tape: ad.Tape, log_theta: ad.Tensor, obs: Observations, grid: TimeGrid,
                   eps0: np.ndarray, eps: np.ndarray) -> RolloutTrace:
    """Batched rollout on ``tape``; ``eps0`` is ``(n, 1)`` and ``eps`` ``(n, K-1)``."""
    n = eps0.shape[0]
    feats = step_features(obs, grid)
    dts = grid.dts
    if eps.shape != (n, dts.size):
        raise InvalidArgumentError(f"noise shape {eps.shape} does not match ({n}, {dts.size})")
    mean0, std0, h = cell.initial(n, tape, log_theta)
    f = mean0 + std0 * eps0
    fs, gs, cs = [f], [], []
    for k, dt in enumerate(dts):
        x = ad.concat([f, np.broadcast_to(feats[k], (n, feats.shape[1])), log_theta], axis=1)
        h, g, c = cell.step(x, h)
        f = f + g * dt + c * (math.sqrt(dt) * eps[:, k : k + 1])
        if not np.all(np.isfinite(f.value)):
            raise NumericalError(f"non-finite bridge state at step {k}")
        fs.append(f)
        gs.append(g)
        cs.append(c)
    paths = ad.concat(fs, axis=1)
    if not gs:
        empty = tape.const(np.zeros((n, 0)))
        log_q = ad.gaussian_log_pdf(fs[0], mean0, ad.square(std0), axis=1)
        return RolloutTrace(paths, log_q, empty, empty, mean0, std0)
    drift = ad.concat(gs, axis=1)
    diffusion = ad.concat(cs, axis=1)
    log_q = ad.gaussian_log_pdf(fs[0], mean0, ad.square(std0), axis=1) + ad.gaussian_log_pdf(
        paths[:, 1:] - paths[:, :-1], drift * dts, ad.square(diffusion) * dts, axis=1
    )
    return RolloutTrace(paths, log_q, drift, diffusion, mean0, std0)


def draw_noise(rng: np.random.Generator, n: int, n_steps: int, n_theta: int = 2):
    """Noise for ``n`` joint (theta, path) draws, always consumed in this order."""
    z_theta = rng.standard_normal((n, n_theta))
    eps0 = rng.standard_normal((n, 1))
    eps = rng.standard_normal((n, n_steps))
    return z_theta, eps0, eps


@dataclass
class BridgeSample:
    path: np.ndarray  # (K, 1)
    log_q_path: float
    drift: np.ndarray  # (K-1,)
    diffusion: np.ndarray  # (K-1,)
    init_mean: float
    init_std: float


def rollout_bridge_trace(rnn: BridgeRnn, theta: KernelHyperparams, obs: Observations,
                         grid: TimeGrid, seed) -> BridgeSample:
    rng = np.random.default_rng(seed)
    eps0 = rng.standard_normal((1, 1))
    eps = rng.standard_normal((1, len(grid) - 1))
    tape = ad.Tape()
    cell = rnn.bind(tape.const(rnn.weights))
    log_theta = tape.const(np.log([[theta.lam, theta.sigma2_k]]))
    tr = rollout_tensor(cell, tape, log_theta, obs, grid, eps0, eps)
    return BridgeSample(
        tr.paths.value[0][:, None],
        float(tr.log_q.value[0]),
        tr.drift.value[0],
        tr.diffusion.value[0],
        float(np.ravel(tr.init_mean.value)[0]),
        float(np.ravel(tr.init_std.value)[0]),
    )


def rollout_bridge(rnn: BridgeRnn, theta: KernelHyperparams, obs: Observations, grid: TimeGrid,
                   seed) -> tuple[np.ndarray, float]:
    """One bridge path ``(K, 1)`` and its log density under the variational law."""
    s = rollout_bridge_trace(rnn, theta, obs, grid, seed)
    return s.path, s.log_q_path
