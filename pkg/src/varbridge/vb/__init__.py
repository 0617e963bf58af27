"""Variational bridge posterior over GP paths and kernel hyperparameters."""

from .bridge import rollout_bridge, rollout_bridge_trace, step_features
from .elbo import (
    ElboEstimate,
    LikelihoodSpec,
    Link,
    ThetaPrior,
    VariationalParams,
    build_elbo,
    elbo,
    elbo_and_grad,
)
from .meanfield import MeanFieldGaussian, sample_hyperparams
from .rnn import BridgeRnn, PriorCell, param_count
from .train import Adam, Checkpoint, TrainResult, TrainSettings, generate_paths, train

__all__ = [
    "Adam",
    "BridgeRnn",
    "Checkpoint",
    "ElboEstimate",
    "LikelihoodSpec",
    "Link",
    "MeanFieldGaussian",
    "PriorCell",
    "ThetaPrior",
    "TrainResult",
    "TrainSettings",
    "VariationalParams",
    "build_elbo",
    "elbo",
    "elbo_and_grad",
    "generate_paths",
    "param_count",
    "rollout_bridge",
    "rollout_bridge_trace",
    "sample_hyperparams",
    "step_features",
    "train",
]
