"""Hyperbolic Predictor-Corrector sampling with joint Euclidean adjacency updates.

The VE chain initializes X ~ HWN(o, sigma_max^2 I) and A ~ N(0, sigma_max^2),
then walks the reverse discretization i = N-1..0: a reverse-diffusion (or
Euler-Maruyama) predictor followed by M Langevin corrector sweeps. X moves by
exponential-map steps and wrapped-normal noise; A by the Euclidean analogue.
Within a step both variables are advanced from the other's previous value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch

from . import hwn
from .geom import PoincareBall, Tensor
from .models import symmetric_noise
from .sde import VE, VP, NoiseSchedule

REVERSE_DIFFUSION = "reverse_diffusion"
EULER_MARUYAMA = "euler_maruyama"

ScoreFn = Callable[[Tensor, Tensor], Tensor]


class SamplerError(RuntimeError):
    """Raised when a chain produces non-finite state; carries the step index."""

    def __init__(self, step: int, what: str):
        super().__init__(f"non-finite {what} at sampler step {step}")
        self.step = step


@dataclass(frozen=True)
class SamplerConfig:
    predictor: str = REVERSE_DIFFUSION
    corrector_steps: int = 1
    snr_x: float = 0.2
    snr_a: float = 0.2
    scale_x: float = 1.0
    scale_a: float = 1.0
    num_steps: int = 1000
    eps_max: float = 1e-2

    def __post_init__(self) -> None:
        if self.predictor not in (REVERSE_DIFFUSION, EULER_MARUYAMA):
            raise ValueError(f"unknown predictor {self.predictor!r}")
        if self.num_steps < 1 or self.corrector_steps < 0:
            raise ValueError("num_steps >= 1 and corrector_steps >= 0 required")
        for name in ("snr_x", "snr_a", "scale_x", "scale_a"):
            val = getattr(self, name)
            if not (0.0 < val <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1], got {val}")


def langevin_eps(
    snr: float, scale: float, s: Tensor, z: Tensor,
    mask: Tensor | None = None, eps_max: float = 1e-2,
) -> Tensor:
    """Corrector step size 2*scale*(snr*|z|/|s|)^2 per batch item, shape (B,1,1).

    A vanishing score norm caps the step at eps_max.
    """
    if mask is not None:
        s = s * mask
        z = z * mask
    dims = tuple(range(1, s.dim()))
    s_norm = s.norm(dim=dims)
    z_norm = z.norm(dim=dims)
    eps = 2.0 * scale * (snr * z_norm / s_norm.clamp(min=1e-300)) ** 2
    eps = torch.where(s_norm > 0, eps, torch.full_like(eps, eps_max))
    return eps.reshape(-1, *([1] * (s.dim() - 1)))


def _check_finite(step: int, **states: Tensor) -> None:
    for what, t in states.items():
        if not bool(torch.isfinite(t).all()):
            raise SamplerError(step, what)


def pc_sample(
    ball: PoincareBall,
    sched_x: NoiseSchedule,
    sched_a: NoiseSchedule,
    score_x_fn: ScoreFn,
    score_a_fn: ScoreFn,
    cfg: SamplerConfig,
    n_graphs: int,
    n_nodes: int,
    latent_dim: int,
    rng: np.random.Generator,
    mask: Tensor | None = None,
    on_step: Callable[[int, Tensor, Tensor], None] | None = None,
) -> tuple[Tensor, Tensor]:
    """Run the joint PC chain; returns (X ball latents, A real matrices).

    Noise draw order per step is fixed (X before A, predictor before the M
    corrector sweeps) so chains are reproducible for a given rng stream.
    ``on_step(i, x, a)`` observes the state after each full step.
    """
    if sched_x.kind != sched_a.kind:
        raise ValueError("X and A schedules must share their SDE kind")
    b, n, d = n_graphs, n_nodes, latent_dim
    if mask is None:
        mask = torch.ones(b, n, dtype=torch.bool)
    mask_x = mask.unsqueeze(-1).double()
    m2 = (mask.unsqueeze(1) & mask.unsqueeze(2)).double()
    big_n = cfg.num_steps
    vp = sched_x.kind == VP

    sigma_x0 = 1.0 if vp else sched_x.maxval
    sigma_a0 = 1.0 if vp else sched_a.maxval
    x = hwn.sample(ball, torch.zeros(b, n, d, dtype=torch.float64), sigma_x0, rng) * mask_x
    a = sigma_a0 * symmetric_noise(rng, b, n) * m2

    for i in range(big_n - 1, -1, -1):
        t_hi = (i + 1) / big_n
        t_lo = i / big_n
        s_x = score_x_fn(x, a)
        s_a = score_a_fn(x, a)
        _check_finite(i, score_x=s_x, score_a=s_a)

        if vp:
            beta = sched_x.discrete_beta(i + 1)
            beta_a = sched_a.discrete_beta(i + 1)
            if cfg.predictor == REVERSE_DIFFUSION:
                coef, coef_a = 2.0 - (1.0 - beta) ** 0.5, 2.0 - (1.0 - beta_a) ** 0.5
            else:
                coef, coef_a = 1.0 + 0.5 * beta, 1.0 + 0.5 * beta_a
            x_mean = ball.mobius_scalar_mul(coef, x)
            x_mean = ball.exp_map(x_mean, beta * s_x)
            std_x, std_a = beta**0.5, beta_a**0.5
            a_mean = coef_a * a + beta_a * s_a
        else:
            var_x = float(sched_x.sigma(t_hi) ** 2 - sched_x.sigma(t_lo) ** 2)
            var_a = float(sched_a.sigma(t_hi) ** 2 - sched_a.sigma(t_lo) ** 2)
            x_mean = ball.exp_map(x, var_x * s_x)
            std_x, std_a = var_x**0.5, var_a**0.5
            a_mean = a + var_a * s_a

        eps_x = torch.from_numpy(rng.standard_normal((b, n, d)))
        x = hwn.sample_at(ball, x_mean, std_x * eps_x) * mask_x
        eps_a = symmetric_noise(rng, b, n)
        a = (a_mean + std_a * eps_a) * m2
        _check_finite(i, x=x, a=a)

        for _ in range(cfg.corrector_steps):
            s_x = score_x_fn(x, a)
            s_a = score_a_fn(x, a)
            _check_finite(i, score_x=s_x, score_a=s_a)
            z_x = torch.from_numpy(rng.standard_normal((b, n, d)))
            e_x = langevin_eps(cfg.snr_x, cfg.scale_x, s_x, z_x, mask_x, cfg.eps_max)
            x_mean = ball.exp_map(x, e_x * s_x)
            x = hwn.sample_at(ball, x_mean, (2.0 * e_x).sqrt() * z_x) * mask_x
            z_a = symmetric_noise(rng, b, n)
            e_a = langevin_eps(cfg.snr_a, cfg.scale_a, s_a, z_a, m2, cfg.eps_max)
            a = (a + e_a * s_a + (2.0 * e_a).sqrt() * z_a) * m2
            _check_finite(i, x=x, a=a)

        if on_step is not None:
            on_step(i, x, a)

    return x, a


def pc_sample_ve(ball, sched_x, sched_a, score_x_fn, score_a_fn, cfg, n_graphs,
                 n_nodes, latent_dim, rng, mask=None, on_step=None):
    """Algorithm-1 chain; requires VE schedules."""
    if sched_x.kind != VE or sched_a.kind != VE:
        raise ValueError("pc_sample_ve requires VE schedules")
    return pc_sample(ball, sched_x, sched_a, score_x_fn, score_a_fn, cfg,
                     n_graphs, n_nodes, latent_dim, rng, mask, on_step)


def pc_sample_vp(ball, sched_x, sched_a, score_x_fn, score_a_fn, cfg, n_graphs,
                 n_nodes, latent_dim, rng, mask=None, on_step=None):
    """Algorithm-2 chain; requires VP schedules."""
    if sched_x.kind != VP or sched_a.kind != VP:
        raise ValueError("pc_sample_vp requires VP schedules")
    return pc_sample(ball, sched_x, sched_a, score_x_fn, score_a_fn, cfg,
                     n_graphs, n_nodes, latent_dim, rng, mask, on_step)


MOLECULE = "molecule"
GENERIC = "generic"


def quantize(a_real: Tensor | np.ndarray, mode: str) -> np.ndarray:
    """Threshold a real adjacency (already in original units) to integers.

    MOLECULE: (-inf,0.5)->0, [0.5,1.5)->1, [1.5,2.5)->2, [2.5,inf)->3.
    GENERIC: 1 where x > 0.5 (strict) else 0. Output is symmetrized from the
    averaged matrix and has a zero diagonal; idempotent on its own output.
    """
    arr = a_real.detach().numpy() if torch.is_tensor(a_real) else np.asarray(a_real)
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("quantize requires finite input")
    sym = 0.5 * (arr + np.swapaxes(arr, -1, -2))
    if mode == MOLECULE:
        out = np.select(
            [sym < 0.5, sym < 1.5, sym < 2.5], [0, 1, 2], default=3
        ).astype(np.int64)
    elif mode == GENERIC:
        out = (sym > 0.5).astype(np.int64)
    else:
        raise ValueError(f"unknown quantize mode {mode!r}")
    n = out.shape[-1]
    idx = np.arange(n)
    out[..., idx, idx] = 0
    return out


def decode_samples(hvae, x_latent: Tensor, mask: Tensor) -> list[list[int]]:
    """Argmax node types from decoder logits; ties resolve to the lowest index;
    masked nodes are excluded."""
    with torch.no_grad():
        logits = hvae.decode(x_latent)
    types = torch.argmax(logits, dim=-1)
    out = []
    for row, m in zip(types, mask):
        out.append([int(v) for v, keep in zip(row, m) if bool(keep)])
    return out
