#!/usr/bin/env python3
"""Desk-scale Community-small experiment: data -> HVAE -> score nets -> samples -> MMD.

Usage: python scripts/run_community_small.py [--workdir DIR] [--seed N]
"""

import argparse
import sys
from pathlib import Path

from hgdm.cli import main as hgdm


def run(workdir: Path, seed: int) -> int:
    data_dir = workdir / "data"
    run_dir = workdir / "run"
    steps = [
        ["gen-data", "community_small", "--count", "100", "--seed", str(seed),
         "--out", str(data_dir)],
        ["train", "--stage", "hvae", "--seed", str(seed),
         "--config", str(workdir / "community.cfg"),
         "--data", str(data_dir / "community_small.txt"), "--out", str(run_dir)],
        ["train", "--stage", "score", "--seed", str(seed),
         "--config", str(workdir / "community.cfg"),
         "--data", str(data_dir / "community_small.txt"),
         "--hvae", str(run_dir / "hvae.ckpt"), "--out", str(run_dir)],
        ["sample", "--checkpoint", str(run_dir / "score_true.ckpt"),
         "--count", "100", "--seed", str(seed), "--out", str(workdir / "samples")],
        ["eval", "--generated", str(workdir / "samples" / "samples.txt"),
         "--reference", str(data_dir / "community_small.txt"),
         "--seed", str(seed), "--out", str(workdir / "metrics.csv")],
    ]
    workdir.mkdir(parents=True, exist_ok=True)
    (workdir / "community.cfg").write_text("dataset = community_small\n")
    for argv in steps:
        code = hgdm(argv)
        if code != 0:
            print(f"step failed with exit {code}: {argv}", file=sys.stderr)
            return code
    print(f"metrics written to {workdir / 'metrics.csv'}")
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", type=Path, default=Path("experiments/community_small"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    sys.exit(run(args.workdir, args.seed))
