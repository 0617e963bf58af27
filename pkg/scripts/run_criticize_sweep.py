"""MMD^2 of bridge paths against exact GP draws at several training epochs, over seeds.

Writes one ``mmd_sweep.csv`` per seed plus ``table.csv`` stacking them.

    python3 scripts/run_criticize_sweep.py --out runs/sweep --seeds 0 1 2 3 4
"""

import argparse
from pathlib import Path

from varbridge import cli, csvio
from varbridge.config import PRESETS, ExperimentConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs/sweep"))
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--milestones", type=int, nargs="+", default=[10, 100, 500, 1000, 2500])
    p.add_argument("--config", type=Path)
    args = p.parse_args()
    base = PRESETS["criticize-sweep"]
    if args.config:
        base = ExperimentConfig.load(args.config, base)
    rows = []
    for seed in args.seeds:
        out = args.out / f"seed_{seed}"
        cfg = base.replace(seed=seed, milestones=tuple(args.milestones), out_dir=str(out))
        cli.cmd_experiment("criticize-sweep", cfg, out)
        for r in csvio.read_sweep(out / cli.SWEEP):
            rows.append((seed, r["epoch"], r["mmd2"], r["threshold"], r["reject"]))
            print(f"seed {seed} epoch {r['epoch']:>5}  mmd2 {r['mmd2']:.5f}  threshold {r['threshold']:.5f}  "
                  f"reject {r['reject']}")
    csvio.write_table(args.out / "table.csv", ["seed", "epoch", "mmd2", "threshold", "reject"], rows)


if __name__ == "__main__":
    main()
