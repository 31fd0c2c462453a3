"""End-to-end wiring: featurization, two-stage training, sampling, evaluation."""

from __future__ import annotations

from dataclasses import asdict

import numpy as np
import torch

from . import graphs as G
from . import models, sampler, sde
from .config import RunConfig, config_hash
from .geom import PoincareBall

BOND_SCALE = 3.0  # molecule bond orders are diffused in [0, 1]


class NumericError(RuntimeError):
    """Training produced a non-finite loss; carries the step index."""

    def __init__(self, step: int):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step


def featurize(graph_list: list, cfg: RunConfig) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, dict]:
    """Pad a graph list into one-hot features X, adjacency A, mask, plus metadata.

    Generic graphs use degree one-hots (capped); molecule bond matrices are
    scaled by 1/3 so both SDE ranges see comparable magnitudes.
    """
    if not graph_list:
        raise ValueError("empty graph list")
    molecule = isinstance(graph_list[0], G.MoleculeGraph)
    n_max = max(g.n for g in graph_list)
    b = len(graph_list)
    if molecule:
        feat_dim = len(G.QM9_ALPHABET)
        type_index = {s: i for i, s in enumerate(G.QM9_ALPHABET)}
    else:
        observed = max(int((g.adj != 0).sum(axis=1).max()) for g in graph_list)
        feat_dim = min(observed, cfg.max_degree) + 1
    x = torch.zeros(b, n_max, feat_dim, dtype=torch.float64)
    a = torch.zeros(b, n_max, n_max, dtype=torch.float64)
    mask = torch.zeros(b, n_max, dtype=torch.bool)
    for k, g in enumerate(graph_list):
        mask[k, : g.n] = True
        if molecule:
            for i, sym in enumerate(g.types):
                x[k, i, type_index[sym]] = 1.0
            a[k, : g.n, : g.n] = torch.from_numpy(g.bonds.astype(np.float64)) / BOND_SCALE
        else:
            x[k, : g.n] = torch.from_numpy(G.degree_onehot(g, feat_dim - 1))
            a[k, : g.n, : g.n] = torch.from_numpy(g.adj.astype(np.float64))
    counts = np.bincount([g.n for g in graph_list], minlength=n_max + 1)
    meta = {
        "mode": G.MOLECULE if molecule else G.GENERIC,
        "feat_dim": feat_dim,
        "node_hist": counts.tolist(),
    }
    return x, a, mask, meta


def build_models(cfg: RunConfig, feat_dim: int, rng: np.random.Generator):
    hvae = models.Hvae(
        models.HvaeConfig(
            feat_dim=feat_dim, latent_dim=cfg.latent_dim, n_layers=cfg.hvae_layers,
            heads=cfg.heads, n_centroids=cfg.n_centroids, mlp_hidden=cfg.mlp_hidden,
            kappa=cfg.kappa, beta_kl=cfg.beta_kl,
        ),
        rng,
    )
    score_x = models.ScoreNetX(
        models.ScoreXConfig(
            latent_dim=cfg.latent_dim, n_layers=cfg.score_x_layers, heads=cfg.heads,
            mlp_hidden=cfg.mlp_hidden, kappa=cfg.kappa,
        ),
        rng,
    )
    score_a = models.ScoreNetA(
        models.ScoreAConfig(
            latent_dim=cfg.latent_dim, n_centroids=cfg.n_centroids,
            n_gcn_layers=cfg.score_a_layers, gcn_hidden=cfg.gcn_hidden,
            init_channels=cfg.init_channels, hidden_channels=cfg.hidden_channels,
            final_channels=cfg.final_channels, pair_hidden=cfg.pair_hidden,
            kappa=cfg.kappa,
        ),
        rng,
    )
    return hvae, score_x, score_a


def schedules(cfg: RunConfig) -> tuple[sde.NoiseSchedule, sde.NoiseSchedule]:
    sched_x = sde.NoiseSchedule(cfg.sde_x_kind, cfg.sde_x_min, cfg.sde_x_max, cfg.num_steps)
    sched_a = sde.NoiseSchedule(cfg.sde_a_kind, cfg.sde_a_min, cfg.sde_a_max, cfg.num_steps)
    return sched_x, sched_a


def _batches(b: int, batch_size: int, rng: np.random.Generator):
    if b <= batch_size:
        yield np.arange(b)
        return
    order = rng.permutation(b)
    for start in range(0, b, batch_size):
        yield order[start : start + batch_size]


def train_hvae(cfg: RunConfig, graph_list: list, rng: np.random.Generator,
               log_every: int = 1) -> tuple[models.Hvae, dict, list[tuple]]:
    """Stage 1: fit the HVAE; returns the model, data meta, and loss-curve rows."""
    x, a, mask, meta = featurize(graph_list, cfg)
    hvae, _, _ = build_models(cfg, meta["feat_dim"], rng)
    opt = models.make_optimizer([hvae], lr=cfg.lr, weight_decay=cfg.weight_decay)
    rows = []
    step = 0
    for _ in range(cfg.epochs_hvae):
        for idx in _batches(len(graph_list), cfg.batch_size, rng):
            sel = torch.from_numpy(np.asarray(idx))
            out = hvae.loss(x[sel], a[sel], mask[sel], rng)
            if not torch.isfinite(out["loss"]):
                raise NumericError(step)
            opt.zero_grad()
            out["loss"].backward()
            opt.step()
            if step % log_every == 0:
                rows.append((step, float(out["loss"]), float(out["ce"]), float(out["kl"])))
            step += 1
    return hvae, meta, rows


def train_score(cfg: RunConfig, graph_list: list, hvae: models.Hvae,
                rng: np.random.Generator, log_every: int = 1,
                ) -> tuple[models.ScoreNetX, models.ScoreNetA, list[tuple]]:
    """Stage 2: fit both score networks against the frozen HVAE latents."""
    x, a, mask, meta = featurize(graph_list, cfg)
    if meta["feat_dim"] != hvae.cfg.feat_dim:
        raise ValueError("data feature dim does not match the HVAE checkpoint")
    _, score_x, score_a = build_models(cfg, meta["feat_dim"], rng)
    hvae.requires_grad_(False)
    sched_x, sched_a = schedules(cfg)
    opt = models.make_optimizer([score_x, score_a], lr=cfg.lr, weight_decay=cfg.weight_decay)
    rows = []
    step = 0
    for _ in range(cfg.epochs_score):
        for idx in _batches(len(graph_list), cfg.batch_size, rng):
            sel = torch.from_numpy(np.asarray(idx))
            loss_x, loss_a = models.dsm_step(
                hvae, score_x, score_a, x[sel], a[sel], mask[sel],
                sched_x, sched_a, cfg.variant, rng,
            )
            loss = loss_x + loss_a
            if not torch.isfinite(loss):
                raise NumericError(step)
            opt.zero_grad()
            loss.backward()
            opt.step()
            if step % log_every == 0:
                rows.append((step, float(loss), float(loss_x), float(loss_a)))
            step += 1
    return score_x, score_a, rows


def checkpoint_payload(cfg: RunConfig, meta: dict, hvae: models.Hvae,
                       score_x: models.ScoreNetX | None = None,
                       score_a: models.ScoreNetA | None = None,
                       seed: int = 0, step: int = 0) -> tuple[dict, dict]:
    tensors = models.module_tensors("hvae", hvae)
    stage = "hvae"
    if score_x is not None and score_a is not None:
        tensors.update(models.module_tensors("score_x", score_x))
        tensors.update(models.module_tensors("score_a", score_a))
        stage = "score"
    config = {
        "version": "HGDM1",
        "stage": stage,
        "run_config": asdict(cfg),
        "meta": meta,
        "seed": seed,
        "step": step,
    }
    return tensors, config


def restore(path):
    """Load a checkpoint into freshly-built modules; returns (cfg, meta, models...)."""
    tensors, config = models.load_checkpoint(path)
    cfg = RunConfig(**config["run_config"])
    meta = config["meta"]
    rng = np.random.default_rng(0)  # shapes only; weights are overwritten
    hvae, score_x, score_a = build_models(cfg, meta["feat_dim"], rng)
    models.load_module_tensors("hvae", hvae, tensors)
    if config["stage"] == "score":
        models.load_module_tensors("score_x", score_x, tensors)
        models.load_module_tensors("score_a", score_a, tensors)
    else:
        score_x = score_a = None
    return cfg, meta, config, hvae, score_x, score_a


def draw_node_counts(meta: dict, count: int, rng: np.random.Generator) -> np.ndarray:
    hist = np.asarray(meta["node_hist"], dtype=np.float64)
    probs = hist / hist.sum()
    return rng.choice(len(hist), size=count, p=probs)


def sample_graphs(cfg: RunConfig, meta: dict, hvae: models.Hvae,
                  score_x: models.ScoreNetX, score_a: models.ScoreNetA,
                  count: int, rng: np.random.Generator) -> list:
    """Run the PC sampler, decode node types, quantize adjacencies."""
    sched_x, sched_a = schedules(cfg)
    ball = PoincareBall(cfg.kappa)
    n_nodes = draw_node_counts(meta, count, rng)
    n_max = int(n_nodes.max())
    mask = torch.zeros(count, n_max, dtype=torch.bool)
    for i, n in enumerate(n_nodes):
        mask[i, : int(n)] = True
    scfg = sampler.SamplerConfig(
        predictor=cfg.predictor, corrector_steps=cfg.corrector_steps,
        snr_x=cfg.snr_x, snr_a=cfg.snr_a, scale_x=cfg.scale_x, scale_a=cfg.scale_a,
        num_steps=cfg.num_steps,
    )
    hvae.requires_grad_(False)
    score_x.requires_grad_(False)
    score_a.requires_grad_(False)

    def fx(x, a):
        with torch.no_grad():
            return score_x(x, a, mask)

    def fa(x, a):
        with torch.no_grad():
            return score_a(x, a, mask)

    x_lat, a_real = sampler.pc_sample(
        ball, sched_x, sched_a, fx, fa, scfg, count, n_max, cfg.latent_dim, rng, mask
    )
    types = sampler.decode_samples(hvae, x_lat, mask)
    out = []
    for i, n in enumerate(n_nodes):
        n = int(n)
        block = a_real[i, :n, :n]
        if meta["mode"] == G.MOLECULE:
            bonds = sampler.quantize(block * BOND_SCALE, sampler.MOLECULE)
            syms = tuple(G.QM9_ALPHABET[t] for t in types[i])
            out.append(G.MoleculeGraph(syms, bonds))
        else:
            out.append(G.GenericGraph(sampler.quantize(block, sampler.GENERIC)))
    return out


def eval_rows(cfg: RunConfig, mode: str, generated: list, reference: list,
              seed: int) -> list[tuple[str, str]]:
    """Metric CSV rows for either mode, ending with the meta row."""
    from . import evaluation

    rows: list[tuple[str, str]] = []
    if mode == G.MOLECULE:
        train_hashes = {G.canonical_hash(m) for m in reference}
        validity, uniqueness, novelty = G.metrics_vun(generated, train_hashes)
        rows += [
            ("validity_pct", f"{validity:.6f}"),
            ("uniqueness_pct", f"{uniqueness:.6f}"),
            ("novelty_pct", f"{novelty:.6f}"),
        ]
    else:
        report = evaluation.mmd_report(reference, generated)
        rows += [(name, f"{val:.8f}") for name, val in report.rows()]
    rows.append(("meta", f"seed={seed};config_hash={config_hash(cfg)}"))
    return rows


def write_csv(path, rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(",".join(str(v) for v in row) + "\n")
