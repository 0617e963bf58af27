"""Command line experiment runner.

Every command is a pure function of its config, input files and seed. Random
streams are tagged so that the commands never share draws::

    [seed, 1]  ground-truth path and observation noise   (simulate)
    [seed, 2]  GP posterior comparison samples           (criticize)
    [seed, 3]  variational paths                         (train-vb)
    [seed, 4]  stand-in paths for --self-test            (criticize)
    seed       training noise and permutations, see ``vb.train`` and ``criticism``
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import csvio
from .config import PRESETS, ExperimentConfig
from .criticism import MmdReport, mmd_test
from .errors import (
    ConfigError,
    InvalidArgumentError,
    NumericalError,
    TrainingDivergedError,
    UnsupportedOperationError,
)
from .gp_core import KernelHyperparams, Observations, gp_regress, gp_sample
from .ssm import build_ssm, kalman_smooth
from .vb import Checkpoint, VariationalParams, generate_paths, train

log = logging.getLogger("varbridge")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

TAG_SIMULATE, TAG_GP_SAMPLES, TAG_VB_PATHS, TAG_SELF_TEST = 1, 2, 3, 4

OBSERVATIONS = "observations.csv"
TRUTH = "truth.csv"
POSTERIOR = "posterior.csv"
TRACE = "elbo_trace.csv"
PATHS = "paths.csv"
SQUARED_SUMMARY = "squared_summary.csv"
MMD_REPORT = "mmd_report.csv"
SWEEP = "mmd_sweep.csv"
MANIFEST = "manifest.txt"
CHECKPOINTS = "checkpoints"


# ------------------------------------------------------------------ commands


def cmd_simulate(config: ExperimentConfig, out: Path) -> list[Path]:
    """Draw a latent path from the GP prior on the grid and observe it with noise."""
    rng = np.random.default_rng([config.seed, TAG_SIMULATE])
    grid = config.grid()
    prior = gp_regress(config.kind, KernelHyperparams(config.lam, config.sigma2_k), Observations.empty(),
                       grid.points)
    u = gp_sample(prior, 1, rng.integers(2**63)).projected()[0]
    f = u**2 if config.likelihood == "square" else u
    y = f[grid.obs_grid_indices()] + np.sqrt(config.sigma2_y) * rng.standard_normal(config.n_obs)
    return [
        csvio.write_truth(out / TRUTH, grid.points, u, f),
        csvio.write_observations(out / OBSERVATIONS, Observations(config.obs_times(), y)),
    ]


def exact_posterior(config: ExperimentConfig, obs: Observations, kalman: bool = False):
    """Grid, posterior mean and marginal variance of the exact GP fit."""
    if config.likelihood != "identity":
        raise UnsupportedOperationError(
            "exact GP regression needs an identity likelihood; use train-vb for the square link"
        )
    grid = config.grid(obs.times)
    if kalman:
        ssm = build_ssm(config.kind, config.hyperparams)
        mean, var = kalman_smooth(ssm, obs, grid.points, config.sigma2_y).projected(ssm.H)
        return grid.points, mean, var
    post = gp_regress(config.kind, config.hyperparams, obs, grid.points)
    return grid.points, post.mean, post.var


def cmd_fit_exact(config: ExperimentConfig, obs: Observations, out: Path, kalman: bool = False) -> list[Path]:
    t, mean, var = exact_posterior(config, obs, kalman)
    return [csvio.write_posterior(out / POSTERIOR, t, mean, var)]


def squared_summary(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pointwise mean and central 95% interval of ``values**2`` across paths."""
    sq = values**2
    lower, upper = np.quantile(sq, [0.025, 0.975], axis=0)
    return sq.mean(axis=0), lower, upper


def cmd_train_vb(config: ExperimentConfig, obs: Observations, out: Path, checkpoint: Path | None = None,
                 snapshot_epochs=()):
    """Train the bridge; returns (written files, TrainResult)."""
    grid = config.grid(obs.times)
    resume = Checkpoint.load(checkpoint) if checkpoint is not None else None
    ckpt_dir = out / CHECKPOINTS
    try:
        result = train(obs, grid, config.likelihood_spec, config.train_settings(), config.seed, resume=resume,
                       checkpoint_dir=ckpt_dir, snapshot_epochs=snapshot_epochs)
    except TrainingDivergedError as exc:
        where = exc.checkpoint.save(ckpt_dir / "last_good.txt") if exc.checkpoint is not None else None
        raise TrainingDivergedError(f"{exc} (last good checkpoint: {where})", exc.checkpoint) from exc
    bundle = generate_paths(result.params, obs, grid, config.n_paths, [config.seed, TAG_VB_PATHS])
    written = list(result.checkpoints)
    written.append(csvio.write_trace(out / TRACE, result.trace))
    written.append(csvio.write_paths(out / PATHS, bundle))
    if config.likelihood == "square":
        mean, lower, upper = squared_summary(bundle.projected())
        written.append(csvio.write_summary(out / SQUARED_SUMMARY, grid.points, mean, lower, upper))
    return written, result


def criticize_values(config: ExperimentConfig, obs: Observations, values: np.ndarray,
                     t: np.ndarray | None = None) -> MmdReport:
    """Compare path values (n, K) on the config grid against exact GP posterior draws."""
    if config.likelihood != "identity":
        raise UnsupportedOperationError("criticism compares against the exact GP and needs an identity likelihood")
    grid = config.grid(obs.times)
    if t is not None and (len(t) != len(grid) or not np.array_equal(np.asarray(t), grid.points)):
        raise InvalidArgumentError("paths file grid does not match the configured grid")
    post = gp_regress(config.kind, config.hyperparams, obs, grid.points)
    gp = gp_sample(post, config.n_paths, [config.seed, TAG_GP_SAMPLES]).projected()
    return mmd_test(values, gp, config.n_permutations, config.alpha, config.seed)


def cmd_criticize(config: ExperimentConfig, obs: Observations, out: Path, paths_file: Path | None = None,
                  self_test: bool = False) -> list[Path]:
    if self_test:
        grid = config.grid(obs.times)
        post = gp_regress(config.kind, config.hyperparams, obs, grid.points)
        t, values = grid.points, gp_sample(post, config.n_paths, [config.seed, TAG_SELF_TEST]).projected()
    else:
        t, values = csvio.read_paths(paths_file if paths_file is not None else out / PATHS)
    report = criticize_values(config, obs, values, t)
    path = out / MMD_REPORT
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_csv(), encoding="utf-8", newline="")
    return [path]


def _write_manifest(out: Path, files: list[Path]) -> Path:
    names = sorted({str(Path(f).relative_to(out)) for f in files})
    path = out / MANIFEST
    path.write_text("".join(n + "\n" for n in names), encoding="utf-8", newline="")
    return path


def cmd_experiment(name: str, config: ExperimentConfig, out: Path) -> list[Path]:
    """simulate, then fit, train and criticize as the experiment allows."""
    if name not in PRESETS:
        raise ConfigError("experiment", f"unknown experiment {name!r}; choose from {sorted(PRESETS)}")
    files = cmd_simulate(config, out)
    obs = csvio.read_observations(out / OBSERVATIONS)
    if name == "nonlinear":
        written, _ = cmd_train_vb(config, obs, out)
        files += written
    elif name == "exp-gp":
        files += cmd_fit_exact(config, obs, out)
        written, _ = cmd_train_vb(config, obs, out)
        files += written
        files += cmd_criticize(config, obs, out)
    else:
        milestones = sorted(e for e in config.milestones if e <= config.epochs)
        files += cmd_fit_exact(config, obs, out)
        written, result = cmd_train_vb(config, obs, out, snapshot_epochs=milestones)
        files += written
        grid = config.grid(obs.times)
        rows = []
        for epoch in milestones:
            params: VariationalParams = result.snapshots[epoch]
            values = generate_paths(params, obs, grid, config.n_paths, [config.seed, TAG_VB_PATHS]).projected()
            rows.append((epoch, criticize_values(config, obs, values)))
        files.append(csvio.write_sweep(out / SWEEP, rows))
    files.append(_write_manifest(out, files))
    return files


# ---------------------------------------------------------------- argparse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", type=Path, help="output directory (overrides out_dir)")
    common.add_argument("--obs", type=Path, help="observations CSV (default: OUT/observations.csv)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="varbridge", description="Variational bridge GP experiments")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="ground truth and noisy observations")
    fe = sub.add_parser("fit-exact", parents=[common], help="exact GP posterior on the grid")
    fe.add_argument("--kalman", action="store_true", help="use the state-space smoother")
    tv = sub.add_parser("train-vb", parents=[common], help="train the variational bridge")
    tv.add_argument("--checkpoint", type=Path, help="resume from this checkpoint")
    cr = sub.add_parser("criticize", parents=[common], help="MMD test of paths against the exact GP")
    cr.add_argument("--paths", type=Path, help="paths CSV (default: OUT/paths.csv)")
    cr.add_argument("--self-test", action="store_true", help="criticize GP samples against the GP")
    ex = sub.add_parser("experiment", parents=[common], help="run a full experiment")
    ex.add_argument("name", choices=sorted(PRESETS))
    return p


def resolve_config(args) -> ExperimentConfig:
    base = PRESETS.get(getattr(args, "name", None), ExperimentConfig())
    config = ExperimentConfig.load(args.config, base) if args.config else base
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = str(args.out)
    return config.replace(**changes) if changes else config


def run(argv=None) -> list[Path]:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    config = resolve_config(args)
    out = Path(config.out_dir)
    if args.command == "simulate":
        return cmd_simulate(config, out)
    if args.command == "experiment":
        return cmd_experiment(args.name, config, out)
    obs = csvio.read_observations(args.obs if args.obs else out / OBSERVATIONS)
    if args.command == "fit-exact":
        return cmd_fit_exact(config, obs, out, args.kalman)
    if args.command == "train-vb":
        written, _ = cmd_train_vb(config, obs, out, args.checkpoint)
        return written
    return cmd_criticize(config, obs, out, args.paths, args.self_test)


def main(argv=None) -> int:
    try:
        for path in run(argv):
            print(path)
    except (ConfigError, InvalidArgumentError, UnsupportedOperationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
