"""Hyperbolic wrapped normal: sampling, exact log-density, Riemannian score.

A draw is constructed as ``z = exp_mu(PT_{o->mu}(v))`` with
``v ~ N(0, sigma^2 I)`` in the Euclidean coordinates of the origin tangent
space. ``log_pdf`` is the exact density of that construction with respect to
the Riemannian volume measure ``dM(z) = lambda_z^d dz``:

    log p(z) = log N(v; 0, sigma^2 I) - d*log(2) - (d-1)*log(sinh(t)/t)

with ``t = sqrt(kappa) * dist(mu, z)`` and ``|v| = dist(mu, z) / 2`` (parallel
transport preserves the Riemannian norm and ``lambda_o = 2``). ``score`` is
the Riemannian gradient of ``log_pdf`` in z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .geom import DomainError, PoincareBall, Tensor


def _log_sinh_ratio(t: Tensor) -> Tensor:
    """log(sinh(t)/t), stable at t -> 0 and for large t."""
    t = t.clamp(min=0.0)
    small = t < 1e-4
    t_safe = t.clamp(min=1e-4)
    series = t * t / 6.0 - t**4 / 180.0
    # log(sinh t) = t + log1p(-exp(-2t)) - log 2
    exact = t_safe + torch.log1p(-torch.exp(-2.0 * t_safe)) - math.log(2.0) - torch.log(t_safe)
    return torch.where(small, series, exact)


def _coth_ratio(t: Tensor) -> Tensor:
    """(coth(t) - 1/t) / t, stable at t -> 0 (limit 1/3)."""
    t = t.clamp(min=0.0)
    small = t < 1e-4
    t_safe = t.clamp(min=1e-4)
    series = 1.0 / 3.0 - t * t / 45.0
    exact = (1.0 / torch.tanh(t_safe) - 1.0 / t_safe) / t_safe
    return torch.where(small, series, exact)


def _sigma_col(sigma: Tensor | float) -> Tensor:
    """Normalize sigma to a scalar tensor or a (..., 1) column tensor."""
    if not torch.is_tensor(sigma):
        return torch.as_tensor(float(sigma), dtype=torch.float64)
    if sigma.dim() and sigma.shape[-1] != 1:
        raise DomainError("tensor sigma must be scalar or column-shaped (..., 1)")
    return sigma.double()


def sample(
    ball: PoincareBall,
    mu: Tensor,
    sigma: Tensor | float,
    rng: np.random.Generator,
    n: int | None = None,
) -> Tensor:
    """Draw wrapped-normal samples around mu.

    mu: (..., d); sigma scalar or column (..., 1). With ``n`` given, a leading
    sample dimension is prepended. Deterministic per (rng state, index).
    """
    mu = mu.double()
    if n is not None:
        mu = mu.expand(n, *mu.shape)
    eps = torch.from_numpy(rng.standard_normal(mu.shape))
    v = _sigma_col(sigma) * eps
    return sample_at(ball, mu, v)


def sample_at(ball: PoincareBall, mu: Tensor, v: Tensor) -> Tensor:
    """Push a given origin-tangent draw v through PT + exp at mu."""
    u = ball.pt_from_origin(mu, v)
    return ball.exp_map(mu, u)


def log_pdf(ball: PoincareBall, mu: Tensor, sigma: Tensor | float, z: Tensor) -> Tensor:
    """Log-density w.r.t. the Riemannian measure; returns the broadcast batch shape."""
    sig = _sigma_col(sigma)
    if bool((sig <= 0).any()):
        raise DomainError("sigma must be positive for log_pdf")
    ball.check_point(z)
    d = z.shape[-1]
    r = ball.distance(mu, z, check=False)
    t = ball.sqrt_kappa * r
    log_gauss = -0.5 * d * torch.log(2.0 * math.pi * sig * sig) - r * r / (8.0 * sig * sig)
    out = log_gauss - d * math.log(2.0) - (d - 1) * _log_sinh_ratio(t)
    return out[..., 0]


def score(ball: PoincareBall, mu: Tensor, sigma: Tensor | float, z: Tensor) -> Tensor:
    """Riemannian gradient of log_pdf w.r.t. z (ambient coordinates, tangent at z).

    The density depends on z only through r = dist(mu, z), so the gradient is
    radial: score = a(r) * log_z(mu) with
    a(r) = 1/(4 sigma^2) + (d-1) * kappa * (coth(t) - 1/t)/t, t = sqrt(kappa) r.
    """
    sig = _sigma_col(sigma)
    if bool((sig <= 0).any()):
        raise DomainError("sigma must be positive for score")
    d = z.shape[-1]
    r = ball.distance(mu, z, check=False)
    t = ball.sqrt_kappa * r
    a = 1.0 / (4.0 * sig * sig) + (d - 1) * ball.kappa * _coth_ratio(t)
    return a * ball.log_map(z, mu, check=False)


@dataclass(frozen=True)
class HwnParams:
    """Mean point and isotropic tangent-space scale of a wrapped normal."""

    ball: PoincareBall
    mu: Tensor
    sigma: float

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise DomainError("sigma must be >= 0 (0 only as a point mass)")
        object.__setattr__(self, "mu", self.ball.project(self.mu.double()))

    @property
    def dim(self) -> int:
        return self.mu.shape[-1]

    def sample(self, rng: np.random.Generator, n: int) -> Tensor:
        if self.sigma == 0.0:
            return self.mu.expand(n, self.dim).clone()
        return sample(self.ball, self.mu, self.sigma, rng, n=n)

    def log_pdf(self, z: Tensor) -> Tensor:
        return log_pdf(self.ball, self.mu, self.sigma, z)

    def score(self, z: Tensor) -> Tensor:
        return score(self.ball, self.mu, self.sigma, z)
