"""HVAE, score networks, denoising-score losses, Riemannian Adam, checkpoints."""

from __future__ import annotations

import io
import json
import struct
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn as tnn

from . import hwn, sde
from .geom import PoincareBall, Tensor
from .nn import CentroidDistance, ConfigError, GcnLayer, HgatLayer, Mlp, _uniform_init

CHECKPOINT_MAGIC = b"HGDM1"
VARIANTS = ("true", "ps", "psdc")
T_MIN = 1e-5  # score targets divide by the kernel variance, which is 0 at t=0


@dataclass(frozen=True)
class HvaeConfig:
    feat_dim: int
    latent_dim: int = 32
    n_layers: int = 3
    heads: int = 4
    n_centroids: int = 32
    mlp_hidden: int = 32
    kappa: float = 0.01
    beta_kl: float = 0.01
    sigma_min: float = 1e-4
    sigma_max: float = 10.0

    def __post_init__(self) -> None:
        if min(self.feat_dim, self.latent_dim, self.n_layers, self.heads,
               self.n_centroids, self.mlp_hidden) <= 0:
            raise ConfigError("HvaeConfig dims must be positive")


@dataclass(frozen=True)
class ScoreXConfig:
    latent_dim: int = 32
    n_layers: int = 3
    heads: int = 4
    mlp_hidden: int = 32
    kappa: float = 0.01

    def __post_init__(self) -> None:
        if min(self.latent_dim, self.n_layers, self.heads, self.mlp_hidden) <= 0:
            raise ConfigError("ScoreXConfig dims must be positive")


@dataclass(frozen=True)
class ScoreAConfig:
    latent_dim: int = 32
    n_centroids: int = 32
    n_gcn_layers: int = 5
    gcn_hidden: int = 32
    init_channels: int = 2
    hidden_channels: int = 8
    final_channels: int = 4
    pair_hidden: int = 32
    kappa: float = 0.01

    def __post_init__(self) -> None:
        if min(self.latent_dim, self.n_centroids, self.n_gcn_layers, self.gcn_hidden,
               self.init_channels, self.hidden_channels, self.final_channels,
               self.pair_hidden) <= 0:
            raise ConfigError("ScoreAConfig dims must be positive")


class Hvae(tnn.Module):
    """Hyperbolic VAE: HGAT encoder to per-node wrapped-normal posteriors,
    centroid-distance decoder back to node-type logits."""

    def __init__(self, cfg: HvaeConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.ball = PoincareBall(cfg.kappa)
        bound = 1.0 / cfg.feat_dim**0.5
        self.embed = tnn.Parameter(
            torch.from_numpy(rng.uniform(-bound, bound, size=(cfg.feat_dim, cfg.latent_dim)))
        )
        self.layers = tnn.ModuleList(
            HgatLayer(cfg.latent_dim, cfg.heads, self.ball, rng) for _ in range(cfg.n_layers)
        )
        self.head = Mlp([cfg.latent_dim, cfg.mlp_hidden, cfg.latent_dim + 1], rng)
        self.centroid = CentroidDistance(cfg.n_centroids, cfg.latent_dim, self.ball, rng)
        self.dec_mlp = Mlp([cfg.n_centroids, cfg.mlp_hidden, cfg.feat_dim], rng)

    def encode(self, x: Tensor, a: Tensor, mask: Tensor) -> tuple[Tensor, Tensor]:
        """One-hot features + adjacency -> (mu ball points, sigma) per node."""
        h = self.ball.exp_map0(x.double() @ self.embed)
        h = h * mask.unsqueeze(-1)
        for layer in self.layers:
            h = layer(h, a, mask)
        out = self.head(self.ball.log_map0(h))
        mu = self.ball.exp_map0(out[..., : self.cfg.latent_dim])
        log_sigma = out[..., self.cfg.latent_dim :].clamp(
            np.log(self.cfg.sigma_min), np.log(self.cfg.sigma_max)
        )
        sigma = torch.exp(log_sigma)[..., 0]
        mu = mu * mask.unsqueeze(-1)
        return mu, sigma

    def decode(self, z: Tensor, mask: Tensor | None = None) -> Tensor:
        """Ball latents -> node-type logits via centroid distances + MLP."""
        logits = self.dec_mlp(self.centroid(z))
        if mask is not None:
            logits = logits * mask.unsqueeze(-1)
        return logits

    def reparameterize(
        self, mu: Tensor, sigma: Tensor, eps: Tensor
    ) -> Tensor:
        """z = exp_mu(PT_{o->mu}(sigma * eps)) for a standard-normal draw eps."""
        v = sigma.unsqueeze(-1) * eps
        return self.ball.exp_map(mu, self.ball.pt_from_origin(mu, v))

    def loss(
        self, x: Tensor, a: Tensor, mask: Tensor, rng: np.random.Generator
    ) -> dict[str, Tensor]:
        eps = torch.from_numpy(rng.standard_normal(x.shape[:-1] + (self.cfg.latent_dim,)))
        return self.loss_given_eps(x, a, mask, eps)

    def loss_given_eps(
        self, x: Tensor, a: Tensor, mask: Tensor, eps: Tensor
    ) -> dict[str, Tensor]:
        """Reconstruction CE plus a single-sample Monte-Carlo KL against HWN(o, 1)."""
        mu, sigma = self.encode(x, a, mask)
        z = self.reparameterize(mu, sigma, eps)
        logits = self.decode(z)
        target = x.argmax(dim=-1)
        ce_all = torch.nn.functional.cross_entropy(
            logits.reshape(-1, self.cfg.feat_dim), target.reshape(-1), reduction="none"
        ).reshape(target.shape)
        m = mask.double()
        n_valid = m.sum().clamp(min=1.0)
        ce = (ce_all * m).sum() / n_valid
        log_q = hwn.log_pdf(self.ball, mu, sigma.unsqueeze(-1), z)
        log_p = hwn.log_pdf(self.ball, torch.zeros_like(z), 1.0, z)
        kl = ((log_q - log_p) * m).sum() / n_valid
        loss = ce + self.cfg.beta_kl * kl
        return {"loss": loss, "ce": ce, "kl": kl}


class ScoreNetX(tnn.Module):
    """Node-score network: HGAT stack, concat of all log_o features, MLP head.

    Output is read as ambient coordinates of tangent vectors at the input points.
    """

    def __init__(self, cfg: ScoreXConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.ball = PoincareBall(cfg.kappa)
        self.layers = tnn.ModuleList(
            HgatLayer(cfg.latent_dim, cfg.heads, self.ball, rng) for _ in range(cfg.n_layers)
        )
        d = cfg.latent_dim
        self.head = Mlp(
            [(cfg.n_layers + 1) * d, cfg.mlp_hidden, cfg.mlp_hidden, d], rng
        )

    def forward(self, x: Tensor, a: Tensor, mask: Tensor | None = None) -> Tensor:
        if mask is None:
            mask = torch.ones(x.shape[:-1], dtype=torch.bool)
        feats = [self.ball.log_map0(x)]
        h = x
        for layer in self.layers:
            h = layer(h, a, mask)
            feats.append(self.ball.log_map0(h))
        out = self.head(torch.cat(feats, dim=-1))
        return out * mask.unsqueeze(-1)


class PairHead(tnn.Module):
    """Two-layer MLP over [h_i || h_j || e_ij] evaluated via split projections.

    Equivalent to Mlp([2*node_dim + chan_dim, hidden, 1]) with the first weight
    matrix partitioned into (source, target, channel) blocks, which avoids
    materializing the N x N concatenated input.
    """

    def __init__(self, node_dim: int, chan_dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        fan = 2 * node_dim + chan_dim
        self.w_src = tnn.Parameter(_uniform_init(rng, node_dim, hidden, fan_in=fan))
        self.w_dst = tnn.Parameter(_uniform_init(rng, node_dim, hidden, fan_in=fan))
        self.w_chan = tnn.Parameter(_uniform_init(rng, chan_dim, hidden, fan_in=fan))
        self.b_hidden = tnn.Parameter(_uniform_init(rng, hidden, fan_in=fan))
        self.w_out = tnn.Parameter(_uniform_init(rng, hidden, 1, fan_in=hidden))
        self.b_out = tnn.Parameter(_uniform_init(rng, 1, fan_in=hidden))

    def forward(self, nodes: Tensor, chans: Tensor) -> Tensor:
        # nodes: (b, n, F); chans: (b, n, n, C) -> (b, n, n)
        u = nodes @ self.w_src
        v = nodes @ self.w_dst
        hidden = torch.nn.functional.elu(
            u.unsqueeze(2) + v.unsqueeze(1) + chans @ self.w_chan + self.b_hidden
        )
        return (hidden @ self.w_out + self.b_out)[..., 0]


class ScoreNetA(tnn.Module):
    """Adjacency-score network: centroid-distance features, GCN stack, pair head
    over [h_i || h_j || adjacency channels]; output symmetrized and zero-diagonal."""

    def __init__(self, cfg: ScoreAConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.ball = PoincareBall(cfg.kappa)
        self.centroid = CentroidDistance(cfg.n_centroids, cfg.latent_dim, self.ball, rng)
        dims = [cfg.n_centroids] + [cfg.gcn_hidden] * cfg.n_gcn_layers
        self.gcns = tnn.ModuleList(
            GcnLayer(d_in, d_out, rng) for d_in, d_out in zip(dims[:-1], dims[1:])
        )
        self.chan1 = Mlp([cfg.init_channels, cfg.hidden_channels], rng)
        self.chan2 = Mlp([cfg.hidden_channels, cfg.final_channels], rng)
        node_feat = cfg.n_centroids + cfg.n_gcn_layers * cfg.gcn_hidden
        self.pair = PairHead(node_feat, cfg.final_channels, cfg.pair_hidden, rng)

    def _adjacency_channels(self, a: Tensor, mask: Tensor) -> Tensor:
        m2 = (mask.unsqueeze(1) & mask.unsqueeze(2)).double()
        a_m = a * m2
        deg = a_m.abs().sum(-1).clamp(min=1e-12)
        inv_sqrt = deg.pow(-0.5)
        a_norm = inv_sqrt.unsqueeze(-1) * a_m * inv_sqrt.unsqueeze(-2)
        chans = torch.stack([a_m, a_norm @ a_norm], dim=-1)  # (b, n, n, 2)
        extra = self.cfg.init_channels - 2
        if extra > 0:  # higher powers if configured wider
            cur = a_norm
            more = []
            for _ in range(extra):
                cur = cur @ a_norm
                more.append(cur)
            chans = torch.cat([chans, torch.stack(more, dim=-1)], dim=-1)
        return torch.nn.functional.elu(self.chan2(torch.nn.functional.elu(self.chan1(chans))))

    def forward(self, x: Tensor, a: Tensor, mask: Tensor | None = None) -> Tensor:
        b, n, _ = x.shape
        if mask is None:
            mask = torch.ones(b, n, dtype=torch.bool)
        h = self.centroid(x) * mask.unsqueeze(-1)
        feats = [h]
        for gcn in self.gcns:
            h = gcn(h, a, mask)
            feats.append(h)
        nodes = torch.cat(feats, dim=-1)  # (b, n, F)
        chans = self._adjacency_channels(a, mask)  # (b, n, n, C)
        s = self.pair(nodes, chans)
        s = 0.5 * (s + s.transpose(-1, -2))
        s = s * (1.0 - torch.eye(n, dtype=torch.float64))
        m2 = (mask.unsqueeze(1) & mask.unsqueeze(2)).double()
        return s * m2


def symmetric_noise(rng: np.random.Generator, b: int, n: int) -> Tensor:
    """Zero-diagonal symmetric standard noise built from an upper-triangular draw."""
    raw = torch.from_numpy(rng.standard_normal((b, n, n)))
    upper = torch.triu(raw, diagonal=1)
    return upper + upper.transpose(-1, -2)


def dsm_losses(
    score_x: ScoreNetX,
    score_a: ScoreNetA,
    x0_ball: Tensor,
    a0: Tensor,
    mask: Tensor,
    sched_x: sde.NoiseSchedule,
    sched_a: sde.NoiseSchedule,
    variant: str,
    t: Tensor,
    eps_x: Tensor,
    eps_a_sym: Tensor,
) -> tuple[Tensor, Tensor]:
    """Denoising-score-matching losses for fixed randomness (t, eps_x, eps_a)."""
    if variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}")
    ball = score_x.ball
    std_x = sched_x.kernel_std(t).reshape(-1, 1, 1)
    mean_scale_x = sched_x.mean_scale(t).reshape(-1, 1, 1)
    mean_x = x0_ball if sched_x.kind == sde.VE else ball.mobius_scalar_mul(mean_scale_x, x0_ball)
    v = std_x * eps_x
    x_t = hwn.sample_at(ball, mean_x, v)
    x_t = x_t * mask.unsqueeze(-1)
    p_x = sde.PerturbedSample(x_t=x_t, t=t, v=v, mean_t=mean_x, std=std_x, hyperbolic=True)

    std_a = sched_a.kernel_std(t).reshape(-1, 1, 1)
    mean_a = sched_a.mean_scale(t).reshape(-1, 1, 1) * a0
    a_t = mean_a + std_a * eps_a_sym
    m2 = (mask.unsqueeze(1) & mask.unsqueeze(2)).double()
    a_t = a_t * m2

    with torch.no_grad():
        if variant == "true":
            target_x = sde.score_target_true(ball, p_x)
        elif variant == "ps":
            target_x = sde.score_target_ps(ball, p_x)
        else:
            target_x = sde.score_target_psdc(ball, p_x)
        target_a = -(std_a * eps_a_sym) / (std_a * std_a)

    s_x = score_x(x_t, a_t, mask)
    s_a = score_a(x_t, a_t, mask)

    m = mask.double()
    lam_x = (std_x * std_x)[:, 0, 0]
    lam_a = (std_a * std_a)[:, 0, 0]
    per_graph_x = ((s_x - target_x) ** 2 * mask.unsqueeze(-1)).sum((-1, -2)) / (
        m.sum(-1).clamp(min=1.0) * x0_ball.shape[-1]
    )
    off_diag = m2 * (1.0 - torch.eye(a0.shape[-1], dtype=torch.float64))
    per_graph_a = ((s_a - target_a) ** 2 * off_diag).sum((-1, -2)) / off_diag.sum((-1, -2)).clamp(
        min=1.0
    )
    loss_x = (lam_x * per_graph_x).mean()
    loss_a = (lam_a * per_graph_a).mean()
    return loss_x, loss_a


def dsm_step(
    hvae: Hvae,
    score_x: ScoreNetX,
    score_a: ScoreNetA,
    x_onehot: Tensor,
    a0: Tensor,
    mask: Tensor,
    sched_x: sde.NoiseSchedule,
    sched_a: sde.NoiseSchedule,
    variant: str,
    rng: np.random.Generator,
) -> tuple[Tensor, Tensor]:
    """Sample t and kernel noise, encode with the frozen HVAE, return both losses."""
    b, n = mask.shape
    with torch.no_grad():
        x0_ball, _ = hvae.encode(x_onehot, a0, mask)
    t = torch.from_numpy(rng.uniform(T_MIN, 1.0, size=b))
    eps_x = torch.from_numpy(rng.standard_normal((b, n, score_x.cfg.latent_dim)))
    eps_a = symmetric_noise(rng, b, n)
    return dsm_losses(
        score_x, score_a, x0_ball, a0, mask, sched_x, sched_a, variant, t, eps_x, eps_a
    )


class RiemannianAdam(torch.optim.Optimizer):
    """Adam for Euclidean tensors plus the Riemannian variant for ball points.

    Ball parameters use the Riemannian gradient (grad / lambda^2), keep both
    moments elementwise in tangent coordinates, step via the exponential map,
    and parallel-transport the first moment to the new point. Weight decay
    applies to Euclidean parameters only. Non-finite gradients skip the update
    for that tensor and are counted in ``skipped_updates``.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        defaults = dict(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay, ball=None)
        super().__init__(params, defaults)
        self.skipped_updates = 0

    @torch.no_grad()
    def step(self, closure=None):
        loss = closure() if closure is not None else None
        for group in self.param_groups:
            beta1, beta2 = group["betas"]
            lr, eps, wd = group["lr"], group["eps"], group["weight_decay"]
            ball: PoincareBall | None = group["ball"]
            for p in group["params"]:
                if p.grad is None:
                    continue
                grad = p.grad
                if not torch.isfinite(grad).all():
                    self.skipped_updates += 1
                    warnings.warn("non-finite gradient; update skipped", RuntimeWarning)
                    continue
                state = self.state[p]
                if not state:
                    state["step"] = 0
                    state["exp_avg"] = torch.zeros_like(p)
                    state["exp_avg_sq"] = torch.zeros_like(p)
                state["step"] += 1
                m, v = state["exp_avg"], state["exp_avg_sq"]
                if ball is None:
                    if wd:
                        grad = grad + wd * p
                    m.mul_(beta1).add_(grad, alpha=1 - beta1)
                    v.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)
                    m_hat = m / (1 - beta1 ** state["step"])
                    v_hat = v / (1 - beta2 ** state["step"])
                    p.add_(-lr * m_hat / (v_hat.sqrt() + eps))
                else:
                    rgrad = ball.egrad2rgrad(p, grad)
                    m.mul_(beta1).add_(rgrad, alpha=1 - beta1)
                    v.mul_(beta2).addcmul_(rgrad, rgrad, value=1 - beta2)
                    m_hat = m / (1 - beta1 ** state["step"])
                    v_hat = v / (1 - beta2 ** state["step"])
                    direction = m_hat / (v_hat.sqrt() + eps)
                    new_p = ball.project(ball.exp_map(p, -lr * direction))
                    m.copy_(ball.parallel_transport(p, new_p, m))
                    p.copy_(new_p)
        return loss


def make_optimizer(
    modules: list[tnn.Module], lr: float, weight_decay: float = 0.0,
    betas=(0.9, 0.999), eps=1e-8,
) -> RiemannianAdam:
    """Split module parameters into Euclidean and ball groups (centroids are ball points)."""
    euclid, ball_params, ball = [], [], None
    for mod in modules:
        for name, p in mod.named_parameters():
            if name.endswith("centroids"):
                ball_params.append(p)
                owner = mod
                for attr in name.split(".")[:-1]:
                    owner = getattr(owner, attr)
                ball = owner.ball
            else:
                euclid.append(p)
    groups = [dict(params=euclid, ball=None)]
    if ball_params:
        groups.append(dict(params=ball_params, ball=ball))
    return RiemannianAdam(groups, lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)


# -- checkpoint serialization -------------------------------------------------
#
# Little-endian binary: magic "HGDM1"; u32 record count; per record a u16
# name length, utf-8 name, u32 rank, rank x u64 dims, then the f64 payload;
# finally a u64 config length and a utf-8 JSON config block.


def save_checkpoint(path, tensors: dict[str, Tensor], config: dict) -> None:
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", len(tensors)))
    for name, t in tensors.items():
        raw = name.encode("utf-8")
        arr = t.detach().numpy().astype("<f8")
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<Q", dim))
        buf.write(arr.tobytes())
    cfg = json.dumps(config, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<Q", len(cfg)))
    buf.write(cfg)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path) -> tuple[dict[str, Tensor], dict]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:5] != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    off = 5
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    tensors: dict[str, Tensor] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<I", data, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}Q", data, off)
        off += 8 * rank
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(dims)
        off += 8 * size
        tensors[name] = torch.from_numpy(arr.copy())
    (cfg_len,) = struct.unpack_from("<Q", data, off)
    off += 8
    config = json.loads(data[off : off + cfg_len].decode("utf-8"))
    return tensors, config


def module_tensors(prefix: str, module: tnn.Module) -> dict[str, Tensor]:
    return {f"{prefix}.{name}": p.detach().clone() for name, p in module.named_parameters()}


def load_module_tensors(prefix: str, module: tnn.Module, tensors: dict[str, Tensor]) -> None:
    with torch.no_grad():
        for name, p in module.named_parameters():
            key = f"{prefix}.{name}"
            if key not in tensors:
                raise ConfigError(f"checkpoint missing tensor {key}")
            if tuple(tensors[key].shape) != tuple(p.shape):
                raise ConfigError(f"checkpoint tensor {key} has shape {tuple(tensors[key].shape)}")
            p.copy_(tensors[key])
