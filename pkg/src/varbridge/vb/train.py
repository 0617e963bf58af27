"""Stochastic ELBO maximisation, checkpoints and path generation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..errors import InvalidArgumentError, NumericalError, TrainingDivergedError
from ..gp_core import Observations
from ..paths import PathBundle, TimeGrid
from .bridge import draw_noise, rollout_tensor
from .elbo import LikelihoodSpec, ThetaPrior, VariationalParams, elbo_and_grad
from .meanfield import sample_theta_tensor

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
MAX_BAD_EPOCHS = 3


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 2500
    lr: float = 1e-3
    n_samples: int = 10
    hidden_size: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 10.0
    checkpoint_every: int = 500
    prior: ThetaPrior = ThetaPrior()

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidArgumentError("epochs must be >= 0")
        for name in ("n_samples", "hidden_size", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be >= 1")
        if self.lr < 0:
            raise InvalidArgumentError("lr must be >= 0")


class Adam:
    """Adaptive-moment ascent on a flat vector with global-norm clipping."""

    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=None):
        self.lr, self.beta1, self.beta2, self.eps, self.clip_norm = lr, beta1, beta2, eps, clip_norm
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Return ``params`` moved uphill along ``grad``."""
        if self.clip_norm is not None:
            norm = float(np.linalg.norm(grad))
            if norm > self.clip_norm:
                grad = grad * (self.clip_norm / norm)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class Checkpoint:
    """Everything needed to continue training bit-exactly from ``epoch``."""

    epoch: int
    seed: int
    hidden_size: int
    phi: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    adam_t: int
    trace: list[float] = field(default_factory=list)

    @property
    def rng_position(self) -> int:
        # the ELBO noise for epoch e is drawn from default_rng([seed, e])
        return self.epoch

    def params(self, template: VariationalParams) -> VariationalParams:
        return template.with_flat(self.phi)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [
            f"varbridge-checkpoint {CHECKPOINT_VERSION}",
            f"epoch {self.epoch}",
            f"seed {self.seed}",
            f"rng_position {self.rng_position}",
            f"hidden_size {self.hidden_size}",
            f"adam_t {self.adam_t}",
        ]
        for name in ("phi", "adam_m", "adam_v", "trace"):
            vec = np.asarray(getattr(self, name), dtype=float)
            lines.append(f"{name} shape={vec.size}")
            lines.append(" ".join(repr(float(x)) for x in vec))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        head = lines[0].split()
        if head[0] != "varbridge-checkpoint" or int(head[1]) != CHECKPOINT_VERSION:
            raise InvalidArgumentError(f"{path}: not a version {CHECKPOINT_VERSION} checkpoint")
        scalars, vectors = {}, {}
        i = 1
        while i < len(lines):
            key, rest = lines[i].split(" ", 1)
            if rest.startswith("shape="):
                size = int(rest[len("shape=") :])
                body = lines[i + 1].split() if i + 1 < len(lines) else []
                if len(body) != size:
                    raise InvalidArgumentError(f"{path}: {key} has {len(body)} values, header says {size}")
                vectors[key] = np.array([float(x) for x in body])
                i += 2
            else:
                scalars[key] = int(rest)
                i += 1
        return cls(
            scalars["epoch"], scalars["seed"], scalars["hidden_size"], vectors["phi"],
            vectors["adam_m"], vectors["adam_v"], scalars["adam_t"], list(vectors["trace"]),
        )


@dataclass
class TrainResult:
    params: VariationalParams
    trace: list[float]
    snapshots: dict[int, VariationalParams] = field(default_factory=dict)
    checkpoints: list[Path] = field(default_factory=list)

    def __iter__(self):
        return iter((self.params, self.trace))


def train(obs: Observations, grid: TimeGrid, likelihood: LikelihoodSpec, settings: TrainSettings, seed: int,
          resume: Checkpoint | None = None, checkpoint_dir=None, snapshot_epochs=()) -> TrainResult:
    """Maximise the Monte Carlo ELBO over all variational parameters jointly.

    Epoch ``e`` (1-based) evaluates the bound with noise from
    ``default_rng([seed, e])`` and then takes one Adam step. ``snapshot_epochs``
    keeps a copy of the parameters after those epochs (0 = initial values).
    """
    template = VariationalParams.init(settings.hidden_size, np.random.default_rng([seed, 0]))
    opt = Adam(template.flat().size, settings.lr, settings.beta1, settings.beta2,
               settings.adam_eps, settings.clip_norm)
    phi = template.flat()
    trace: list[float] = []
    start = 0
    if resume is not None:
        if resume.hidden_size != settings.hidden_size or resume.phi.size != phi.size:
            raise InvalidArgumentError("checkpoint does not match the network size")
        phi = resume.phi.copy()
        opt.m, opt.v, opt.t = resume.adam_m.copy(), resume.adam_v.copy(), resume.adam_t
        trace = list(resume.trace)
        start = resume.epoch

    snapshot_epochs = set(snapshot_epochs)
    snapshots = {}
    written: list[Path] = []
    if 0 in snapshot_epochs and start == 0:
        snapshots[0] = template.with_flat(phi)

    def make_checkpoint(epoch):
        return Checkpoint(epoch, seed, settings.hidden_size, phi.copy(), opt.m.copy(), opt.v.copy(), opt.t,
                          list(trace))

    last_good = make_checkpoint(start)
    bad = 0
    for epoch in range(start + 1, settings.epochs + 1):
        try:
            est, g = elbo_and_grad(template, obs, grid, likelihood, settings.n_samples, [seed, epoch],
                                   settings.prior, phi_value=phi)
            ok = np.isfinite(est.value) and np.all(np.isfinite(g))
        except NumericalError as exc:
            log.warning("epoch %d: %s", epoch, exc)
            est, ok = None, False
        if not ok:
            bad += 1
            trace.append(math.nan)
            if bad >= MAX_BAD_EPOCHS:
                raise TrainingDivergedError(
                    f"non-finite ELBO for {bad} consecutive epochs (last epoch {epoch})", last_good
                )
            continue
        bad = 0
        trace.append(est.value)
        phi = opt.step(phi, g)
        if epoch in snapshot_epochs:
            snapshots[epoch] = template.with_flat(phi)
        if epoch % settings.checkpoint_every == 0:
            last_good = make_checkpoint(epoch)
            if checkpoint_dir is not None:
                written.append(last_good.save(Path(checkpoint_dir) / f"checkpoint_{epoch:06d}.txt"))
    return TrainResult(template.with_flat(phi), trace, snapshots, written)


def generate_paths(params: VariationalParams, obs: Observations, grid: TimeGrid, n: int, seed) -> PathBundle:
    """``n`` bridge paths, each with its own hyperparameter draw, projected to the latent function."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    rng = np.random.default_rng(seed)
    z_theta, eps0, eps = draw_noise(rng, n, len(grid) - 1, params.theta_dist.size)
    tape = ad.Tape()
    mu = tape.const(params.theta_dist.mu)
    log_s = tape.const(params.theta_dist.log_s)
    eta, _ = sample_theta_tensor(mu, log_s, z_theta)
    cell = params.rnn.bind(tape.const(params.rnn.weights))
    tr = rollout_tensor(cell, tape, eta, obs, grid, eps0, eps)
    return PathBundle(grid, tr.paths.value[:, :, None])
