"""Differentiable layers: HGAT, centroid-distance, GCN, MLP, and grad_check.

Forward passes are authored here; reverse-mode gradients come from torch
autograd (float64) and are verified against an independent central-difference
oracle via :func:`grad_check`. All layers are deterministic given their
parameters and inputs, and parameter initialization is driven by an explicit
numpy Generator so no global torch seed is involved.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
import torch
from torch import nn as tnn

from .geom import PoincareBall, Tensor

_LEAKY_SLOPE = 0.2


class ConfigError(ValueError):
    """Layer configuration and input shapes disagree."""


def _uniform_init(rng: np.random.Generator, *shape: int, fan_in: int) -> Tensor:
    bound = 1.0 / float(fan_in) ** 0.5
    return torch.from_numpy(rng.uniform(-bound, bound, size=shape))


def _activation(name: str) -> Callable[[Tensor], Tensor]:
    if name == "elu":
        return torch.nn.functional.elu
    if name == "leaky_relu":
        return lambda x: torch.nn.functional.leaky_relu(x, _LEAKY_SLOPE)
    if name == "relu":
        return torch.relu
    if name == "identity":
        return lambda x: x
    raise ConfigError(f"unknown activation {name!r}")


class Mlp(tnn.Module):
    """Affine stack with a pointwise activation between layers."""

    def __init__(self, dims: Sequence[int], rng: np.random.Generator, act: str = "elu"):
        super().__init__()
        if len(dims) < 2:
            raise ConfigError("Mlp needs at least input and output dims")
        self.act = _activation(act)
        self.weights = tnn.ParameterList()
        self.biases = tnn.ParameterList()
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            self.weights.append(tnn.Parameter(_uniform_init(rng, d_in, d_out, fan_in=d_in)))
            self.biases.append(tnn.Parameter(_uniform_init(rng, d_out, fan_in=d_in)))

    def forward(self, x: Tensor) -> Tensor:
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w + b
            if i < n - 1:
                x = self.act(x)
        return x


class HgatLayer(tnn.Module):
    """Hyperbolic graph attention over ball-point node features.

    Pipeline: log_o -> split into K heads -> per-head attention with logits
    LeakyReLU(a_src . Wh_i + a_dst . Wh_j + w_edge * A_ij) over neighbors
    {j : A_ij != 0} plus a mandatory self-loop -> concat heads -> residual
    exp_{H_i}(PT_{o->H_i}(h')) -> pointwise LeakyReLU (norm-nonincreasing,
    so the result stays in the ball).
    """

    def __init__(self, dim: int, heads: int, ball: PoincareBall, rng: np.random.Generator):
        super().__init__()
        if dim % heads != 0:
            raise ConfigError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.ball = ball
        m = self.head_dim
        self.weight = tnn.Parameter(_uniform_init(rng, heads, m, m, fan_in=m))
        self.att_src = tnn.Parameter(_uniform_init(rng, heads, m, fan_in=2 * m + 1))
        self.att_dst = tnn.Parameter(_uniform_init(rng, heads, m, fan_in=2 * m + 1))
        self.att_edge = tnn.Parameter(_uniform_init(rng, heads, fan_in=2 * m + 1))

    def forward(self, h: Tensor, a: Tensor, mask: Tensor | None = None) -> Tensor:
        b, n, d = h.shape
        if d != self.dim:
            raise ConfigError(f"expected feature dim {self.dim}, got {d}")
        if mask is None:
            mask = torch.ones(b, n, dtype=torch.bool)
        he = self.ball.log_map0(h).reshape(b, n, self.heads, self.head_dim)
        wh = torch.einsum("bnkm,kmp->bnkp", he, self.weight)
        logit_src = (wh * self.att_src).sum(-1)  # (b, n, k)
        logit_dst = (wh * self.att_dst).sum(-1)
        logits = (
            logit_src.permute(0, 2, 1).unsqueeze(-1)          # (b, k, n, 1) source i
            + logit_dst.permute(0, 2, 1).unsqueeze(-2)        # (b, k, 1, n) target j
            + self.att_edge.reshape(1, self.heads, 1, 1) * a.unsqueeze(1)
        )
        logits = torch.nn.functional.leaky_relu(logits, _LEAKY_SLOPE)
        eye = torch.eye(n, dtype=torch.bool)
        allowed = (a != 0) | eye
        allowed = allowed & mask.unsqueeze(1)                  # drop padded targets j
        allowed = allowed | eye                                # keep softmax well-defined
        logits = torch.where(allowed.unsqueeze(1), logits, torch.full_like(logits, -torch.inf))
        alpha = torch.softmax(logits, dim=-1)                  # (b, k, n, n) over j
        agg = torch.einsum("bkij,bjkm->bikm", alpha, wh).reshape(b, n, d)
        out = self.ball.exp_map(h, self.ball.pt_from_origin(h, agg))
        out = torch.nn.functional.leaky_relu(out, _LEAKY_SLOPE)
        out = self.ball.project(out)
        return out * mask.unsqueeze(-1)


class CentroidDistance(tnn.Module):
    """Distances from node points to a list of learnable ball centroids.

    Output[..., j, i] = dist(centroid_i, x_j); gradients flow to both sides.
    Centroids are initialized as exp_o of N(0, 0.1^2) draws.
    """

    def __init__(self, n_centroids: int, dim: int, ball: PoincareBall, rng: np.random.Generator):
        super().__init__()
        self.ball = ball
        init = ball.exp_map0(torch.from_numpy(0.1 * rng.standard_normal((n_centroids, dim))))
        self.centroids = tnn.Parameter(init)

    def forward(self, x: Tensor) -> Tensor:
        # x: (..., n, d) -> (..., n, C)
        return self.ball.distance(x.unsqueeze(-2), self.centroids, check=False)[..., 0]


class GcnLayer(tnn.Module):
    """Symmetric-normalized graph convolution H' = act(D^-1/2 (A+I) D^-1/2 H W).

    Degrees use |A + I| row sums (clamped) so noisy real-valued adjacencies
    cannot produce zero or negative normalizers.
    """

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, act: str = "elu"):
        super().__init__()
        self.weight = tnn.Parameter(_uniform_init(rng, d_in, d_out, fan_in=d_in))
        self.act = _activation(act)

    def forward(self, h: Tensor, a: Tensor, mask: Tensor | None = None) -> Tensor:
        b, n, _ = h.shape
        eye = torch.eye(n, dtype=torch.float64)
        if mask is not None:
            m2 = (mask.unsqueeze(1) & mask.unsqueeze(2)).double()
            a_hat = a * m2 + eye
        else:
            a_hat = a + eye
        deg = a_hat.abs().sum(-1).clamp(min=1e-12)
        inv_sqrt = deg.pow(-0.5)
        norm_a = inv_sqrt.unsqueeze(-1) * a_hat * inv_sqrt.unsqueeze(-2)
        out = self.act(norm_a @ h @ self.weight)
        if mask is not None:
            out = out * mask.unsqueeze(-1).double()
        return out


def grad_check(
    scalar_fn: Callable[[], Tensor],
    wrt: Iterable[Tensor],
    epsilon: float = 1e-5,
) -> float:
    """Max relative error between autograd and central finite differences.

    ``scalar_fn`` must be pure given the tensors in ``wrt`` (leaf tensors with
    requires_grad=True); every coordinate of every tensor is perturbed in
    place by +-epsilon. Relative error uses |analytic - fd| / (|analytic| + 1e-8).
    """
    wrt = list(wrt)
    for t in wrt:
        if not t.requires_grad:
            raise ConfigError("grad_check targets must require grad")
        t.grad = None
    out = scalar_fn()
    out.backward()
    analytic = [t.grad.detach().clone() if t.grad is not None else torch.zeros_like(t) for t in wrt]
    worst = 0.0
    with torch.no_grad():
        for t, g in zip(wrt, analytic):
            flat = t.data.reshape(-1)
            gflat = g.reshape(-1)
            for idx in range(flat.numel()):
                orig = flat[idx].item()
                flat[idx] = orig + epsilon
                f_plus = float(scalar_fn())
                flat[idx] = orig - epsilon
                f_minus = float(scalar_fn())
                flat[idx] = orig
                fd = (f_plus - f_minus) / (2.0 * epsilon)
                rel = abs(gflat[idx].item() - fd) / (abs(gflat[idx].item()) + 1e-8)
                worst = max(worst, rel)
    return worst
