"""Log-normal mean-field family over the positive kernel hyperparameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..errors import InvalidArgumentError
from ..gp_core import KernelHyperparams

# order of the unconstrained coordinates eta = log(theta)
THETA_NAMES = ("lam", "sigma2_k")


@dataclass(frozen=True)
class MeanFieldGaussian:
    """Independent Gaussians over ``eta = log(theta)``: means ``mu``, log std devs ``log_s``."""

    mu: np.ndarray
    log_s: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        log_s = np.asarray(self.log_s, dtype=float).reshape(-1)
        if mu.shape != log_s.shape:
            raise InvalidArgumentError("mu and log_s must have equal length")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(log_s))):
            raise InvalidArgumentError("mean-field parameters must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "log_s", log_s)

    @property
    def s(self) -> np.ndarray:
        return np.exp(self.log_s)

    @property
    def size(self) -> int:
        return self.mu.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.mu, self.log_s])

    @classmethod
    def from_flat(cls, flat) -> "MeanFieldGaussian":
        flat = np.asarray(flat, dtype=float)
        half = flat.size // 2
        return cls(flat[:half], flat[half:])


def sample_theta_tensor(mu: ad.Tensor, log_s: ad.Tensor, z: np.ndarray):
    """Reparameterised draw ``theta = exp(mu + s z)`` for a batch of noise rows ``z``.

    Returns ``(eta, log_q)``; ``eta`` has the shape of ``z`` and ``log_q``
    holds, per row, the log density of ``theta`` (Gaussian density of
    ``eta`` minus the log-Jacobian ``sum(eta)`` of the exp map).
    """
    s = ad.exp(log_s)
    eta = mu + s * z
    log_q = ad.gaussian_log_pdf(eta, mu, ad.square(s), axis=1) - ad.sum(eta, axis=1)
    return eta, log_q


def log_normal_prior(eta, prior_mean: float, prior_std: float) -> ad.Tensor:
    """Per-row log density of ``theta = exp(eta)`` with ``log(theta_i) ~ N(prior_mean, prior_std^2)``."""
    return ad.gaussian_log_pdf(eta, prior_mean, prior_std**2, axis=1) - ad.sum(eta, axis=1)


def sample_hyperparams(dist: MeanFieldGaussian, seed, sigma2_y: float = 0.0, z=None):
    """Draw ``(KernelHyperparams, log_q_theta)`` from ``dist``.

    ``z`` forces the standard-normal noise (used to pin the reparameterisation).
    """
    rng = np.random.default_rng(seed)
    if z is None:
        z = rng.standard_normal(dist.size)
    z = np.asarray(z, dtype=float).reshape(1, -1)
    tape = ad.Tape()
    eta, log_q = sample_theta_tensor(tape.const(dist.mu), tape.const(dist.log_s), z)
    theta = np.exp(eta.value[0])
    return KernelHyperparams(float(theta[0]), float(theta[1]), sigma2_y), float(log_q.value[0])
