"""Experiment configuration: flat ``key = value`` files with strict validation."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidArgumentError
from .gp_core import KernelHyperparams, KernelKind
from .paths import TimeGrid
from .vb import LikelihoodSpec, Link, ThetaPrior, TrainSettings

_SECTION = "experiment"


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: str = "exponential"
    # data-generating hyperparameters, also used for the exact GP fit
    lam: float = 1.0
    sigma2_k: float = 1.0
    sigma2_y: float = 0.1
    n_obs: int = 6
    t_start: float = 0.0
    t_end: float = 10.0
    n_steps: int = 64
    likelihood: str = "identity"
    # variational inference
    epochs: int = 2500
    lr: float = 1e-3
    n_samples: int = 10
    hidden_size: int = 50
    clip_norm: float = 10.0
    checkpoint_every: int = 500
    prior_log_mean: float = 0.0
    prior_log_std: float = 1.0
    # outputs and criticism
    n_paths: int = 30
    n_permutations: int = 1000
    alpha: float = 0.05
    milestones: tuple[int, ...] = (10, 100, 500, 1000, 2500)
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------ validation

    def validate(self):
        try:
            KernelKind.parse(self.kernel)
        except InvalidArgumentError as exc:
            raise ConfigError("kernel", str(exc)) from None
        if self.likelihood not in ("identity", "square"):
            raise ConfigError("likelihood", f"must be 'identity' or 'square', got {self.likelihood!r}")
        for name in ("n_obs", "n_steps", "n_samples", "hidden_size", "checkpoint_every", "n_paths"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.n_paths < 2:
            raise ConfigError("n_paths", "must be >= 2 for the two-sample test")
        if self.epochs < 0:
            raise ConfigError("epochs", "must be >= 0")
        if self.n_permutations < 100:
            raise ConfigError("n_permutations", "must be >= 100")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha", "must lie in (0, 1)")
        if not self.t_end > self.t_start:
            raise ConfigError("t_end", "span must be positive (t_end > t_start)")
        for name in ("lam", "sigma2_k", "prior_log_std", "clip_norm"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be > 0")
        for name in ("sigma2_y", "lr"):
            if not getattr(self, name) >= 0:
                raise ConfigError(name, "must be >= 0")
        if any(e < 0 for e in self.milestones):
            raise ConfigError("milestones", "epochs must be >= 0")
        if not str(self.out_dir):
            raise ConfigError("out_dir", "must not be empty")

    # ----------------------------------------------------------- derived views

    @property
    def kind(self) -> KernelKind:
        return KernelKind.parse(self.kernel)

    @property
    def hyperparams(self) -> KernelHyperparams:
        return KernelHyperparams(self.lam, self.sigma2_k, self.sigma2_y)

    @property
    def likelihood_spec(self) -> LikelihoodSpec:
        return LikelihoodSpec(Link(self.likelihood), self.sigma2_y)

    def obs_times(self) -> np.ndarray:
        """Observation times at the midpoints of ``n_obs`` equal sub-intervals of the span."""
        width = (self.t_end - self.t_start) / self.n_obs
        return self.t_start + (np.arange(self.n_obs) + 0.5) * width

    def grid(self, obs_times=None) -> TimeGrid:
        times = self.obs_times() if obs_times is None else np.asarray(obs_times, dtype=float)
        if times.size and (times.min() < self.t_start or times.max() > self.t_end):
            raise InvalidArgumentError(f"observation times fall outside [{self.t_start}, {self.t_end}]")
        return TimeGrid.build(self.t_start, self.t_end, self.n_steps, times)

    def train_settings(self) -> TrainSettings:
        return TrainSettings(
            epochs=self.epochs, lr=self.lr, n_samples=self.n_samples, hidden_size=self.hidden_size,
            clip_norm=self.clip_norm, checkpoint_every=self.checkpoint_every,
            prior=ThetaPrior(self.prior_log_mean, self.prior_log_std),
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # --------------------------------------------------------- serialization

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        parser.optionxform = str
        try:
            parser.read_string(f"[{_SECTION}]\n" + text)
        except configparser.Error as exc:
            raise ConfigError("<file>", f"malformed config: {exc}") from None
        known = {f.name: f for f in fields(cls)}
        values = {}
        for key, raw in parser[_SECTION].items():
            if key not in known:
                raise ConfigError(key, "unknown key")
            values[key] = _coerce(key, known[key], raw.strip())
        if base is None:
            return cls(**values)
        return dataclasses.replace(base, **values)

    @classmethod
    def load(cls, path, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), base)


def _coerce(key: str, f: dataclasses.Field, raw: str):
    typ = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ.startswith("tuple"):
            return tuple(int(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {typ}") from None


PRESETS = {
    "exp-gp": ExperimentConfig(),
    "criticize-sweep": ExperimentConfig(),
    "nonlinear": ExperimentConfig(t_start=18.0, t_end=30.0, n_obs=12, likelihood="square"),
}

