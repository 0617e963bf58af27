"""Monte Carlo evidence lower bound for the bridge posterior."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..errors import InvalidArgumentError, NumericalError, UnsupportedOperationError
from ..gp_core import KernelKind, Observations
from ..paths import TimeGrid
from ..sde_sim import ou_em_log_density
from .bridge import draw_noise, rollout_tensor
from .meanfield import MeanFieldGaussian, log_normal_prior, sample_theta_tensor
from .rnn import BridgeRnn, PriorCell

TERMS = ("log_p_theta", "log_p_f", "log_p_y", "neg_log_q_theta", "neg_log_q_f")


class Link(enum.Enum):
    IDENTITY = "identity"
    SQUARE = "square"


@dataclass(frozen=True)
class LikelihoodSpec:
    """``y_j ~ N(h(f(tau_j)), sigma2_y)`` with ``h`` the identity or the square."""

    link: Link = Link.IDENTITY
    sigma2_y: float = 0.1

    def apply(self, f):
        return ad.square(f) if self.link is Link.SQUARE else f


@dataclass(frozen=True)
class ThetaPrior:
    """Independent log-normal prior: ``log(theta_i) ~ N(mean, std^2)``."""

    mean: float = 0.0
    std: float = 1.0


@dataclass
class VariationalParams:
    theta_dist: MeanFieldGaussian
    rnn: BridgeRnn

    @classmethod
    def init(cls, hidden_size: int, seed, theta_mu=(0.0, 0.0), theta_log_s=(-1.0, -1.0)):
        return cls(MeanFieldGaussian(theta_mu, theta_log_s), BridgeRnn.init(hidden_size, seed))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.theta_dist.flat(), self.rnn.weights])

    def with_flat(self, flat) -> "VariationalParams":
        flat = np.asarray(flat, dtype=float)
        k = 2 * self.theta_dist.size
        rnn = BridgeRnn(self.rnn.hidden_size, flat[k:].copy(), self.rnn.m, self.rnn.input_dim)
        return VariationalParams(MeanFieldGaussian.from_flat(flat[:k]), rnn)


@dataclass
class ElboEstimate:
    value: float
    n_samples: int
    terms: dict[str, float] = field(default_factory=dict)  # per-term means over samples


@dataclass
class ElboGraph:
    """Everything built on one tape for a single ELBO evaluation."""

    tape: ad.Tape
    phi: ad.Tensor
    value: ad.Tensor
    per_sample: dict[str, ad.Tensor]
    paths: ad.Tensor
    eta: ad.Tensor

    def estimate(self) -> ElboEstimate:
        n = self.paths.shape[0]
        return ElboEstimate(
            float(self.value.value),
            n,
            {k: float(np.mean(v.value)) for k, v in self.per_sample.items()},
        )


def _check_kind(kind):
    if KernelKind.parse(kind) is not KernelKind.EXPONENTIAL:
        raise UnsupportedOperationError("variational bridges are implemented for the exponential kernel only")


def build_elbo(params: VariationalParams, obs: Observations, grid: TimeGrid, likelihood: LikelihoodSpec,
               n: int, seed, prior: ThetaPrior = ThetaPrior(), kind=KernelKind.EXPONENTIAL,
               wire_prior: bool = False, phi_value=None) -> ElboGraph:
    """Record the ``n``-sample ELBO on a fresh tape with ``phi`` as the single parameter leaf.

    ``wire_prior`` swaps the RNN for heads equal to the prior SDE terms, so the
    path terms of the bound cancel.
    """
    _check_kind(kind)
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    obs_idx = grid.indices_of(obs.times)
    rng = np.random.default_rng(seed)
    z_theta, eps0, eps = draw_noise(rng, n, len(grid) - 1, params.theta_dist.size)

    tape = ad.Tape()
    phi = tape.param(params.flat() if phi_value is None else phi_value)
    k = params.theta_dist.size
    mu, log_s = phi[0:k], phi[k : 2 * k]
    cell = PriorCell() if wire_prior else params.rnn.bind(phi[2 * k :])

    eta, log_q_theta = sample_theta_tensor(mu, log_s, z_theta)
    log_p_theta = log_normal_prior(eta, prior.mean, prior.std)
    lam = ad.exp(eta[:, 0:1])
    s2 = ad.exp(eta[:, 1:2])

    trace = rollout_tensor(cell, tape, eta, obs, grid, eps0, eps)
    paths = trace.paths
    log_p_f = ou_em_log_density(lam, s2, paths, grid.dts)

    if obs_idx.size:
        f_obs = ad.concat([paths[:, i : i + 1] for i in obs_idx], axis=1)
        log_p_y = ad.gaussian_log_pdf(obs.values[None, :], likelihood.apply(f_obs), likelihood.sigma2_y, axis=1)
    else:
        log_p_y = tape.const(np.zeros(n))

    per_sample = {
        "log_p_theta": log_p_theta,
        "log_p_f": log_p_f,
        "log_p_y": log_p_y,
        "neg_log_q_theta": -log_q_theta,
        "neg_log_q_f": -trace.log_q,
    }
    total = log_p_theta + log_p_f + log_p_y - log_q_theta - trace.log_q
    value = ad.mean(total)
    if not np.isfinite(value.value):
        bad = int(np.argmax(~np.isfinite(total.value)))
        raise NumericalError(f"non-finite ELBO term in Monte Carlo sample {bad}")
    return ElboGraph(tape, phi, value, per_sample, paths, eta)


def elbo(params: VariationalParams, obs: Observations, grid: TimeGrid, likelihood: LikelihoodSpec,
         n: int, seed, prior: ThetaPrior = ThetaPrior(), kind=KernelKind.EXPONENTIAL,
         wire_prior: bool = False) -> ElboEstimate:
    return build_elbo(params, obs, grid, likelihood, n, seed, prior, kind, wire_prior).estimate()


def elbo_and_grad(params: VariationalParams, obs: Observations, grid: TimeGrid, likelihood: LikelihoodSpec,
                  n: int, seed, prior: ThetaPrior = ThetaPrior(), kind=KernelKind.EXPONENTIAL,
                  phi_value=None) -> tuple[ElboEstimate, np.ndarray]:
    """ELBO estimate and its reparameterised gradient w.r.t. the flat ``phi``."""
    g = build_elbo(params, obs, grid, likelihood, n, seed, prior, kind, phi_value=phi_value)
    (dphi,) = ad.grad(g.value, [g.phi])
    return g.estimate(), dphi
