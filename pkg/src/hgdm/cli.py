"""Command-line entry points: gen-data, train, sample, eval, geom-check.

Exit codes: 0 success, 1 property failure, 2 usage/config error, 3 numeric
failure. Every command is deterministic given (config, seed); manifests and
metric CSVs embed both. HGDM_THREADS caps torch parallelism (default 1, which
is also the bit-reproducible mode).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import checks, graphs as G, pipeline
from .config import PRESETS, RunConfig, config_hash, parse_config, preset, with_overrides
from .models import save_checkpoint
from .pipeline import NumericError
from .sampler import SamplerError

EXIT_OK = 0
EXIT_PROPERTY = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _setup_threads() -> None:
    torch.set_num_threads(int(os.environ.get("HGDM_THREADS", "1")))


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = parse_config(args.config)
    elif getattr(args, "dataset", None):
        cfg = preset(args.dataset)
    else:
        cfg = RunConfig()
    return with_overrides(
        cfg,
        seed=getattr(args, "seed", None),
        variant=getattr(args, "variant", None),
        sample_count=getattr(args, "count", None),
    )


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    count = args.count if args.count is not None else 100
    if cfg.dataset == "community_small":
        gs = G.gen_community_small(count, rng)
    elif cfg.dataset == "grid":
        gs = G.gen_grid_set(count, rng)
    elif cfg.dataset == "qm9_fixture":
        gs = G.gen_qm9_fixture(count, rng)
    else:
        print(f"error: unknown dataset {cfg.dataset!r}", file=sys.stderr)
        return EXIT_USAGE
    path = out / f"{cfg.dataset}.txt"
    G.save_graphs(path, gs)
    manifest = {
        "dataset": cfg.dataset, "count": count, "seed": cfg.seed,
        "file": path.name, "config_hash": config_hash(cfg),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"wrote {count} graphs to {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph_list = G.load_graphs(args.data)
    rng = np.random.default_rng(cfg.seed)
    try:
        if args.stage == "hvae":
            hvae, meta, rows = pipeline.train_hvae(cfg, graph_list, rng)
            tensors, ckpt_cfg = pipeline.checkpoint_payload(
                cfg, meta, hvae, seed=cfg.seed, step=len(rows)
            )
            save_checkpoint(out / "hvae.ckpt", tensors, ckpt_cfg)
            pipeline.write_csv(out / "hvae_loss.csv",
                               [("step", "loss", "ce", "kl")] + rows)
            print(f"hvae checkpoint -> {out / 'hvae.ckpt'} (final loss {rows[-1][1]:.4f})")
        else:
            if not args.hvae:
                print("error: --stage score requires --hvae CHECKPOINT", file=sys.stderr)
                return EXIT_USAGE
            _, meta, _, hvae, _, _ = pipeline.restore(args.hvae)
            score_x, score_a, rows = pipeline.train_score(cfg, graph_list, hvae, rng)
            tensors, ckpt_cfg = pipeline.checkpoint_payload(
                cfg, meta, hvae, score_x, score_a, seed=cfg.seed, step=len(rows)
            )
            name = f"score_{cfg.variant}.ckpt"
            save_checkpoint(out / name, tensors, ckpt_cfg)
            pipeline.write_csv(out / f"score_{cfg.variant}_loss.csv",
                               [("step", "loss", "loss_x", "loss_a")] + rows)
            print(f"score checkpoint -> {out / name} (final loss {rows[-1][1]:.4f})")
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg_ckpt, meta, ckpt_cfg, hvae, score_x, score_a = pipeline.restore(args.checkpoint)
    if score_x is None:
        print("error: checkpoint holds no score networks (train stage=score first)",
              file=sys.stderr)
        return EXIT_USAGE
    cfg = with_overrides(cfg_ckpt, seed=args.seed, variant=args.variant)
    if args.sde is not None and args.sde != cfg.sde_x_kind:
        print(f"error: checkpoint was trained with {cfg.sde_x_kind} schedules, "
              f"requested {args.sde}", file=sys.stderr)
        return EXIT_USAGE
    count = args.count if args.count is not None else cfg.sample_count
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    try:
        gs = pipeline.sample_graphs(cfg, meta, hvae, score_x, score_a, count, rng)
    except SamplerError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    path = out / "samples.txt"
    G.save_graphs(path, gs)
    manifest = {
        "count": count, "seed": cfg.seed, "variant": cfg.variant,
        "config_hash": config_hash(cfg), "file": path.name,
        "checkpoint": str(args.checkpoint),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"wrote {count} samples to {path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    generated = G.load_graphs(args.generated)
    reference = G.load_graphs(args.reference)
    if not generated or not reference:
        print("error: empty generated or reference set", file=sys.stderr)
        return EXIT_USAGE
    mode = G.MOLECULE if isinstance(generated[0], G.MoleculeGraph) else G.GENERIC
    rows = pipeline.eval_rows(cfg, mode, generated, reference, cfg.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pipeline.write_csv(out, rows)
    for name, val in rows:
        print(f"{name},{val}")
    return EXIT_OK


def cmd_eval_sweep(args) -> int:
    """Grid search over sampler SNR/scale; selects best average MMD or validity."""
    cfg_ckpt, meta, _, hvae, score_x, score_a = pipeline.restore(args.checkpoint)
    if score_x is None:
        print("error: checkpoint holds no score networks", file=sys.stderr)
        return EXIT_USAGE
    reference = G.load_graphs(args.reference)
    snr_grid = [float(v) for v in args.snr_grid.split(",")]
    scale_grid = [float(v) for v in args.scale_grid.split(",")]
    mode = meta["mode"]
    rows: list[tuple] = [("snr", "scale", "objective", "value")]
    best: tuple | None = None
    for snr in snr_grid:
        for scale in scale_grid:
            cfg = with_overrides(cfg_ckpt, seed=args.seed, snr_x=snr, snr_a=snr,
                                 scale_x=scale, scale_a=scale)
            rng = np.random.default_rng(cfg.seed)
            gs = pipeline.sample_graphs(cfg, meta, hvae, score_x, score_a,
                                        args.count or 20, rng)
            if mode == G.MOLECULE:
                hashes = {G.canonical_hash(m) for m in reference}
                validity, _, _ = G.metrics_vun(gs, hashes)
                value, better = validity, (best is None or validity > best[3])
                objective = "validity_pct"
            else:
                from . import evaluation
                value = evaluation.mmd_report(reference, gs).average
                better = best is None or value < best[3]
                objective = "average_mmd"
            rows.append((snr, scale, objective, f"{value:.6f}"))
            if better:
                best = (snr, scale, objective, value)
    rows.append(("selected", f"snr={best[0]};scale={best[1]}", best[2], f"{best[3]:.6f}"))
    rows.append(("meta", f"seed={args.seed};config_hash={config_hash(cfg_ckpt)}", "", ""))
    pipeline.write_csv(Path(args.out), rows)
    print(f"sweep best: snr={best[0]} scale={best[1]} {best[2]}={best[3]:.6f}")
    return EXIT_OK


def cmd_geom_check(args) -> int:
    kappas = [float(k) for k in args.kappa] if args.kappa else list(checks.DEFAULT_KAPPAS)
    results = checks.run_all(kappas=kappas, n=args.cases, seed=args.seed or 0,
                             bug=args.inject_bug)
    rows = [("property", "worst_rel_error", "tolerance", "passed", "worst_input")]
    rows += [(r.name, f"{r.worst:.3e}", f"{r.tol:.0e}", str(r.passed).lower(),
              r.worst_input.replace(",", ";")) for r in results]
    if args.out:
        pipeline.write_csv(Path(args.out), rows)
    failures = [r for r in results if not r.passed]
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{status:4s} {r.name}: worst {r.worst:.3e} (tol {r.tol:.0e})")
    if failures:
        worst = max(failures, key=lambda r: r.worst / r.tol)
        print(f"FAILED: {worst.name} worst {worst.worst:.3e} at {worst.worst_input}",
              file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hgdm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="flat key=value config file")
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("gen-data", help="generate a dataset")
    sp.add_argument("dataset", choices=sorted(PRESETS))
    common(sp)
    sp.add_argument("--count", type=int, default=None)
    sp.add_argument("--out", default="data")

    sp = sub.add_parser("train", help="train the HVAE or the score networks")
    sp.add_argument("--stage", choices=("hvae", "score"), required=True)
    common(sp)
    sp.add_argument("--data", required=True, help="graph file")
    sp.add_argument("--hvae", help="HVAE checkpoint (stage=score)")
    sp.add_argument("--variant", choices=("true", "ps", "psdc"), default=None)
    sp.add_argument("--out", default="runs")

    sp = sub.add_parser("sample", help="sample graphs from a trained checkpoint")
    sp.add_argument("--checkpoint", required=True)
    common(sp, config=False)
    sp.add_argument("--count", type=int, default=None)
    sp.add_argument("--variant", choices=("true", "ps", "psdc"), default=None)
    sp.add_argument("--sde", choices=("ve", "vp"), default=None,
                    help="assert the schedule kind recorded in the checkpoint")
    sp.add_argument("--out", default="samples")

    sp = sub.add_parser("eval", help="evaluate generated graphs against a reference set")
    common(sp)
    sp.add_argument("--generated", required=True)
    sp.add_argument("--reference", required=True)
    sp.add_argument("--out", default="metrics.csv")
    sp.add_argument("--sweep", action="store_true",
                    help="grid-search sampler SNR/scale from a checkpoint")
    sp.add_argument("--checkpoint", help="checkpoint for --sweep")
    sp.add_argument("--count", type=int, default=None, help="samples per sweep point")
    sp.add_argument("--snr-grid", default="0.1,0.2")
    sp.add_argument("--scale-grid", default="0.5,1.0")

    sp = sub.add_parser("geom-check", help="run the geometry/HWN property suites")
    sp.add_argument("--kappa", action="append", help="curvature magnitude (repeatable)")
    sp.add_argument("--cases", type=int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="per-property CSV path")
    sp.add_argument("--inject-bug", choices=("log_map_sign",), default=None,
                    help="test mode: verify the harness catches a planted defect")
    return p


def main(argv=None) -> int:
    _setup_threads()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else EXIT_USAGE
    try:
        if args.command == "gen-data":
            return cmd_gen_data(args)
        if args.command == "train":
            return cmd_train(args)
        if args.command == "sample":
            return cmd_sample(args)
        if args.command == "eval":
            if args.sweep:
                if not args.checkpoint:
                    print("error: --sweep requires --checkpoint", file=sys.stderr)
                    return EXIT_USAGE
                return cmd_eval_sweep(args)
            return cmd_eval(args)
        if args.command == "geom-check":
            return cmd_geom_check(args)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
