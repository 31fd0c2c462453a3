"""Noise schedules, Euclidean/hyperbolic perturbation kernels, score targets.

VE uses geometric interpolation sigma(t) = sigma_min * (sigma_max/sigma_min)^t;
VP uses linear beta(t) = beta_min + t * (beta_max - beta_min). The horizon is
T = 1. Kernels follow the VE/VP closed forms; the hyperbolic kernel replaces
the Gaussian with a wrapped normal and the VP mean contraction with Mobius
scalar multiplication.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from . import hwn
from .geom import DomainError, PoincareBall, Tensor

VE = "ve"
VP = "vp"

# Default direction multiplier making the PSDC target collinear with (not
# opposite to) the true score; fixed by the collinearity oracle in the tests.
PSDC_SIGN = -1.0


@dataclass(frozen=True)
class NoiseSchedule:
    """VE/VP schedule parameters and time discretization over [0, 1]."""

    kind: str
    minval: float  # sigma_min (VE) or beta_min (VP)
    maxval: float  # sigma_max (VE) or beta_max (VP)
    num_steps: int = 1000

    def __post_init__(self) -> None:
        if self.kind not in (VE, VP):
            raise ValueError(f"schedule kind must be 've' or 'vp', got {self.kind!r}")
        if not (0 < self.minval < self.maxval):
            raise ValueError("schedule requires 0 < min < max")
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")

    def _check_t(self, t: Tensor | float) -> Tensor:
        t = torch.as_tensor(t, dtype=torch.float64)
        if bool(((t < 0) | (t > 1)).any()):
            raise DomainError("t must lie in [0, 1]")
        return t

    def sigma(self, t: Tensor | float) -> Tensor:
        """VE noise level sigma(t)."""
        if self.kind != VE:
            raise ValueError("sigma(t) is defined for VE schedules")
        t = self._check_t(t)
        return self.minval * (self.maxval / self.minval) ** t

    def beta(self, t: Tensor | float) -> Tensor:
        """VP instantaneous rate beta(t)."""
        if self.kind != VP:
            raise ValueError("beta(t) is defined for VP schedules")
        t = self._check_t(t)
        return self.minval + t * (self.maxval - self.minval)

    def beta_int(self, t: Tensor | float) -> Tensor:
        """Integral of beta over [0, t]."""
        if self.kind != VP:
            raise ValueError("beta_int(t) is defined for VP schedules")
        t = self._check_t(t)
        return self.minval * t + 0.5 * (self.maxval - self.minval) * t * t

    def mean_scale(self, t: Tensor | float) -> Tensor:
        """Kernel mean multiplier: 1 (VE) or exp(-beta_int/2) (VP)."""
        t = self._check_t(t)
        if self.kind == VE:
            return torch.ones_like(t)
        return torch.exp(-0.5 * self.beta_int(t))

    def kernel_var(self, t: Tensor | float) -> Tensor:
        """Kernel variance: sigma(t)^2 - sigma(0)^2 (VE) or 1 - exp(-beta_int) (VP)."""
        t = self._check_t(t)
        if self.kind == VE:
            s = self.sigma(t)
            return s * s - self.minval**2
        return 1.0 - torch.exp(-self.beta_int(t))

    def kernel_std(self, t: Tensor | float) -> Tensor:
        return self.kernel_var(t).sqrt()

    def time_grid(self) -> np.ndarray:
        """t_i = i / N for i = 0..N."""
        return np.linspace(0.0, 1.0, self.num_steps + 1)

    def discrete_beta(self, i: int) -> float:
        """beta_i = beta(t_i) / N, the discretized VP rate at grid index i."""
        return float(self.beta(i / self.num_steps)) / self.num_steps


def sigma_of_t(s: NoiseSchedule, t: Tensor | float) -> Tensor:
    return s.sigma(t)


def beta_int(s: NoiseSchedule, t: Tensor | float) -> Tensor:
    return s.beta_int(t)


@dataclass
class PerturbedSample:
    """One forward-kernel draw: state, time, the tangent noise, and the kernel mean."""

    x_t: Tensor
    t: Tensor
    v: Tensor        # drawn noise: origin-tangent (hyperbolic) or ambient (Euclidean)
    mean_t: Tensor
    std: Tensor      # kernel standard deviation, broadcastable against x_t
    hyperbolic: bool

    def __post_init__(self) -> None:
        t = torch.as_tensor(self.t, dtype=torch.float64)
        if bool(((t < 0) | (t > 1)).any()):
            raise DomainError("t must lie in [0, 1]")


def _col(t: Tensor | float, extra_dims: int) -> Tensor:
    """Reshape per-item t of shape (B,) to (B, 1, ..., 1) for broadcasting."""
    t = torch.as_tensor(t, dtype=torch.float64)
    if t.dim() == 0:
        return t
    return t.reshape(t.shape + (1,) * extra_dims)


def perturb_euclidean(
    x0: Tensor, sched: NoiseSchedule, t: Tensor | float, rng: np.random.Generator
) -> PerturbedSample:
    """Euclidean VE/VP kernel draw. t is scalar or per-batch-item (B,)."""
    x0 = x0.double()
    t_t = torch.as_tensor(t, dtype=torch.float64)
    scale = _col(sched.mean_scale(t_t), x0.dim() - max(t_t.dim(), 0))
    std = _col(sched.kernel_std(t_t), x0.dim() - max(t_t.dim(), 0))
    mean = scale * x0
    eps = torch.from_numpy(rng.standard_normal(x0.shape))
    v = std * eps
    return PerturbedSample(x_t=mean + v, t=t_t, v=v, mean_t=mean, std=std, hyperbolic=False)


def perturb_hyperbolic(
    ball: PoincareBall,
    x0: Tensor,
    sched: NoiseSchedule,
    t: Tensor | float,
    rng: np.random.Generator,
) -> PerturbedSample:
    """Hyperbolic kernel draw: x_t ~ HWN(mean_t, std) with the VE/VP mean and std."""
    x0 = x0.double()
    t_t = torch.as_tensor(t, dtype=torch.float64)
    scale = _col(sched.mean_scale(t_t), x0.dim() - max(t_t.dim(), 0))
    std = _col(sched.kernel_std(t_t), x0.dim() - max(t_t.dim(), 0))
    if sched.kind == VE:
        mean = x0
    else:
        mean = ball.mobius_scalar_mul(scale, x0)
    eps = torch.from_numpy(rng.standard_normal(x0.shape))
    v = std * eps
    x_t = torch.where(std > 0, hwn.sample_at(ball, mean, v), mean)
    return PerturbedSample(x_t=x_t, t=t_t, v=v, mean_t=mean, std=std, hyperbolic=True)


def _require_hyperbolic(p: PerturbedSample) -> None:
    if not p.hyperbolic:
        raise ValueError("score targets are defined for hyperbolic samples")


def score_target_true(ball: PoincareBall, p: PerturbedSample) -> Tensor:
    """Riemannian gradient of the kernel log-density at x_t (tangent at x_t)."""
    _require_hyperbolic(p)
    return hwn.score(ball, p.mean_t, p.std, p.x_t)


def score_target_ps(ball: PoincareBall, p: PerturbedSample) -> Tensor:
    """Transported-noise pseudo-score PT_{o->x_t}(-v / std^2)."""
    _require_hyperbolic(p)
    return ball.pt_from_origin(p.x_t, -p.v / (p.std * p.std))


def score_target_psdc(ball: PoincareBall, p: PerturbedSample, sign: float = PSDC_SIGN) -> Tensor:
    """Direction-corrected pseudo-score sign * PT_{mean->x_t}(log_mean(x_t)) / std^2."""
    _require_hyperbolic(p)
    u = ball.log_map(p.mean_t, p.x_t, check=False)
    return sign * ball.parallel_transport(p.mean_t, p.x_t, u) / (p.std * p.std)


def euclidean_score_target(p: PerturbedSample) -> Tensor:
    """Gaussian kernel score -(x_t - mean)/std^2 = -v/std^2 for Euclidean samples."""
    if p.hyperbolic:
        raise ValueError("euclidean_score_target expects a Euclidean sample")
    return -p.v / (p.std * p.std)
