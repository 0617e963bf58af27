"""Exponential-kernel experiment: simulate, exact fit, bridge training, MMD report.

    python3 scripts/run_exp_gp.py --out runs/exp_gp --seed 0
"""

import argparse
from pathlib import Path

from varbridge import cli
from varbridge.config import PRESETS, ExperimentConfig
from varbridge.criticism import MmdReport


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs/exp_gp"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", type=Path)
    args = p.parse_args()
    cfg = PRESETS["exp-gp"]
    if args.config:
        cfg = ExperimentConfig.load(args.config, cfg)
    cfg = cfg.replace(seed=args.seed, out_dir=str(args.out))
    cli.cmd_experiment("exp-gp", cfg, args.out)
    r = MmdReport.from_csv((args.out / cli.MMD_REPORT).read_text())
    print(f"mmd2 {r.mmd2:.5f}  threshold {r.threshold:.5f}  reject {r.reject}")


if __name__ == "__main__":
    main()
