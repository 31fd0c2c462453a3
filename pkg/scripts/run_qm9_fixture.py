#!/usr/bin/env python3
"""Desk-scale molecule experiment on the QM9-like fixture set.

Trains the HVAE once, then trains and samples all three score-target variants
(true, ps, psdc), writing a VUN metrics CSV per variant.

Usage: python scripts/run_qm9_fixture.py [--workdir DIR] [--seed N] [--variants LIST]
"""

import argparse
import sys
from pathlib import Path

from hgdm.cli import main as hgdm


def run(workdir: Path, seed: int, variants: list[str]) -> int:
    data_dir = workdir / "data"
    run_dir = workdir / "run"
    workdir.mkdir(parents=True, exist_ok=True)
    cfg = workdir / "qm9.cfg"
    cfg.write_text("dataset = qm9_fixture\n")
    data = str(data_dir / "qm9_fixture.txt")
    prelude = [
        ["gen-data", "qm9_fixture", "--count", "500", "--seed", str(seed),
         "--out", str(data_dir)],
        ["train", "--stage", "hvae", "--seed", str(seed), "--config", str(cfg),
         "--data", data, "--out", str(run_dir)],
    ]
    for argv in prelude:
        code = hgdm(argv)
        if code != 0:
            print(f"step failed with exit {code}: {argv}", file=sys.stderr)
            return code
    for variant in variants:
        steps = [
            ["train", "--stage", "score", "--seed", str(seed), "--config", str(cfg),
             "--variant", variant, "--data", data,
             "--hvae", str(run_dir / "hvae.ckpt"), "--out", str(run_dir)],
            ["sample", "--checkpoint", str(run_dir / f"score_{variant}.ckpt"),
             "--count", "500", "--seed", str(seed),
             "--out", str(workdir / f"samples_{variant}")],
            ["eval", "--generated", str(workdir / f"samples_{variant}" / "samples.txt"),
             "--reference", data, "--seed", str(seed),
             "--out", str(workdir / f"metrics_{variant}.csv")],
        ]
        for argv in steps:
            code = hgdm(argv)
            if code != 0:
                print(f"step failed with exit {code}: {argv}", file=sys.stderr)
                return code
        print(f"{variant}: metrics -> {workdir / f'metrics_{variant}.csv'}")
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", type=Path, default=Path("experiments/qm9_fixture"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--variants", default="true,ps,psdc")
    args = ap.parse_args()
    sys.exit(run(args.workdir, args.seed, args.variants.split(",")))
