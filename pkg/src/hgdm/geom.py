"""Poincare-ball geometry: Mobius operations, exp/log maps, parallel transport.

Convention: for curvature magnitude ``kappa > 0`` (sectional curvature
``-kappa``) the ball is ``B = {x : kappa * ||x||^2 < 1}`` with radius
``1/sqrt(kappa)`` and conformal metric ``g_x = lambda_x^2 * I`` where
``lambda_x = 2 / (1 - kappa * ||x||^2)``.

All operations act on torch tensors whose last dimension holds the ball
coordinates; leading dimensions broadcast. Everything is pure and safe for
concurrent use.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch

Tensor = torch.Tensor

# Relative margin kept from the ball boundary; constructors and projections
# never emit points with norm above (1 - EPS_BOUNDARY) / sqrt(kappa).
EPS_BOUNDARY = 1e-5
_MIN_NORM = 1e-15
# tanh saturates to 1.0 in float64 around 19; beyond this the exponential map
# effectively lands on the boundary margin.
_SATURATION_ARG = 18.0


class DomainError(ValueError):
    """Input lies outside the mathematical domain of an operation."""


class SaturationWarning(RuntimeWarning):
    """An exponential-map argument was large enough to saturate tanh."""


def _sqnorm(x: Tensor) -> Tensor:
    return (x * x).sum(dim=-1, keepdim=True)


def _norm(x: Tensor) -> Tensor:
    return x.norm(dim=-1, keepdim=True)


def _atanh(x: Tensor) -> Tensor:
    # clamp keeps boundary-rounded arguments out of the pole
    return torch.atanh(x.clamp(min=-1 + 1e-15, max=1 - 1e-15))


@dataclass(frozen=True)
class PoincareBall:
    """Curvature holder plus the full operation set of the ball of curvature -kappa."""

    kappa: float

    def __post_init__(self) -> None:
        if not (self.kappa > 0.0 and torch.isfinite(torch.tensor(self.kappa))):
            raise DomainError(f"kappa must be positive and finite, got {self.kappa}")

    @property
    def sqrt_kappa(self) -> float:
        return self.kappa**0.5

    @property
    def radius(self) -> float:
        return 1.0 / self.sqrt_kappa

    @property
    def max_norm(self) -> float:
        return (1.0 - EPS_BOUNDARY) / self.sqrt_kappa

    # -- validity ---------------------------------------------------------

    def check_point(self, x: Tensor) -> None:
        """Raise DomainError if any point lies on or outside the boundary."""
        if bool((self.kappa * _sqnorm(x) >= 1.0).any()):
            raise DomainError("point outside the Poincare ball")

    def in_ball(self, x: Tensor) -> bool:
        """True iff every point satisfies the margin invariant kappa*|x|^2 < 1 - eps."""
        return bool((self.kappa * _sqnorm(x) < 1.0 - EPS_BOUNDARY).all())

    def project(self, x: Tensor) -> Tensor:
        """Rescale points with norm above the boundary margin back onto it."""
        n = _norm(x).clamp(min=_MIN_NORM)
        scaled = x * (self.max_norm / n)
        return torch.where(n > self.max_norm, scaled, x)

    # -- metric -----------------------------------------------------------

    def conformal_factor(self, x: Tensor, *, check: bool = True) -> Tensor:
        """lambda_x = 2 / (1 - kappa*|x|^2), shape (..., 1)."""
        if check:
            self.check_point(x)
        return 2.0 / (1.0 - self.kappa * _sqnorm(x)).clamp(min=_MIN_NORM)

    def tangent_inner(self, x: Tensor, u: Tensor, v: Tensor) -> Tensor:
        """Riemannian inner product lambda_x^2 <u, v> at x, shape (..., 1)."""
        lam = self.conformal_factor(x, check=False)
        return lam * lam * (u * v).sum(dim=-1, keepdim=True)

    def tangent_norm(self, x: Tensor, v: Tensor) -> Tensor:
        return self.conformal_factor(x, check=False) * _norm(v)

    def egrad2rgrad(self, x: Tensor, grad: Tensor) -> Tensor:
        """Riemannian gradient = Euclidean ambient gradient / lambda_x^2."""
        lam = self.conformal_factor(x, check=False)
        return grad / (lam * lam)

    # -- gyrovector operations ---------------------------------------------

    def mobius_add(self, x: Tensor, y: Tensor, *, project: bool = True) -> Tensor:
        """Mobius addition x (+) y (non-commutative, non-associative)."""
        k = self.kappa
        x2 = _sqnorm(x)
        y2 = _sqnorm(y)
        xy = (x * y).sum(dim=-1, keepdim=True)
        num = (1 + 2 * k * xy + k * y2) * x + (1 - k * x2) * y
        den = (1 + 2 * k * xy + k * k * x2 * y2).clamp(min=_MIN_NORM)
        res = num / den
        return self.project(res) if project else res

    def gyration(self, x: Tensor, y: Tensor, v: Tensor) -> Tensor:
        """gyr[x, y] v, the orthogonal correction operator of Mobius addition.

        Uses Ungar's closed rational form rather than the composition identity
        -(x+y) (+) (x (+) (y (+) v)): the composition loses ~1e-7 relative
        accuracy near the boundary margin, which the closed form does not.
        """
        k = self.kappa
        x2 = _sqnorm(x)
        y2 = _sqnorm(y)
        xy = (x * y).sum(dim=-1, keepdim=True)
        xv = (x * v).sum(dim=-1, keepdim=True)
        yv = (y * v).sum(dim=-1, keepdim=True)
        a = -k * k * xv * y2 + k * yv + 2 * k * k * xy * yv
        b = -k * k * yv * x2 - k * xv
        den = (1 + 2 * k * xy + k * k * x2 * y2).clamp(min=_MIN_NORM)
        return v + 2 * (a * x + b * y) / den

    def mobius_scalar_mul(self, r: Tensor | float, x: Tensor, *, project: bool = True) -> Tensor:
        """r (x) x = tanh(r * atanh(sqrt(k)|x|)) * x / (sqrt(k)|x|)."""
        if not torch.is_tensor(r):
            r = torch.as_tensor(r, dtype=x.dtype)
        sk = self.sqrt_kappa
        n = _norm(x).clamp(min=_MIN_NORM)
        res = torch.tanh(r * _atanh(sk * n)) / (sk * n) * x
        res = torch.where(_norm(x) > _MIN_NORM, res, torch.zeros_like(x))
        return self.project(res) if project else res

    # -- distances ----------------------------------------------------------

    def distance(self, x: Tensor, y: Tensor, *, check: bool = True) -> Tensor:
        """Geodesic distance, shape (..., 1).

        Uses the symmetric Mobius form 2/sqrt(k) * atanh(sqrt(k) |(-x) (+) y|)
        with the norm evaluated directly for stability near x = y.
        """
        if check:
            self.check_point(x)
            self.check_point(y)
        k = self.kappa
        num = _norm(x - y)
        den = (
            (1 - 2 * k * (x * y).sum(dim=-1, keepdim=True) + k * k * _sqnorm(x) * _sqnorm(y))
            .clamp(min=_MIN_NORM)
            .sqrt()
        )
        return 2.0 / self.sqrt_kappa * _atanh(self.sqrt_kappa * num / den)

    def distance0(self, x: Tensor) -> Tensor:
        """Geodesic distance to the origin: 2/sqrt(k) * atanh(sqrt(k)|x|)."""
        return 2.0 / self.sqrt_kappa * _atanh(self.sqrt_kappa * _norm(x))

    # -- exponential / logarithmic maps -------------------------------------

    def exp_map(self, x: Tensor, v: Tensor) -> Tensor:
        """exp_x(v) = x (+) tanh(sqrt(k) lambda_x |v| / 2) * v / (sqrt(k)|v|)."""
        if not bool(torch.isfinite(v).all()):
            raise DomainError("non-finite tangent vector in exp_map")
        sk = self.sqrt_kappa
        n = _norm(v).clamp(min=_MIN_NORM)
        arg = sk * self.conformal_factor(x, check=False) * n / 2.0
        if bool((arg > _SATURATION_ARG).any()):
            warnings.warn(
                "exp_map argument saturated tanh; result clipped to the boundary margin",
                SaturationWarning,
                stacklevel=2,
            )
        second = torch.tanh(arg) / (sk * n) * v
        res = self.mobius_add(x, second, project=True)
        return torch.where(_norm(v) > _MIN_NORM, res, x)

    def exp_map0(self, v: Tensor) -> Tensor:
        """Exponential map at the origin: tanh(sqrt(k)|v|) * v / (sqrt(k)|v|)."""
        sk = self.sqrt_kappa
        n = _norm(v).clamp(min=_MIN_NORM)
        res = torch.tanh(sk * n) / (sk * n) * v
        return self.project(torch.where(_norm(v) > _MIN_NORM, res, torch.zeros_like(v)))

    def log_map(self, x: Tensor, y: Tensor, *, check: bool = True) -> Tensor:
        """log_x(y) = 2/(sqrt(k) lambda_x) * atanh(sqrt(k)|w|) * w/|w|, w = (-x) (+) y."""
        if check:
            self.check_point(x)
            self.check_point(y)
        sk = self.sqrt_kappa
        w = self.mobius_add(-x, y, project=False)
        n = _norm(w).clamp(min=_MIN_NORM)
        lam = self.conformal_factor(x, check=False)
        res = 2.0 / (sk * lam) * _atanh(sk * n) / n * w
        return torch.where(_norm(w) > _MIN_NORM, res, torch.zeros_like(w))

    def log_map0(self, y: Tensor) -> Tensor:
        """Logarithmic map at the origin: atanh(sqrt(k)|y|) * y / (sqrt(k)|y|)."""
        sk = self.sqrt_kappa
        n = _norm(y).clamp(min=_MIN_NORM)
        res = _atanh(sk * n) / (sk * n) * y
        return torch.where(_norm(y) > _MIN_NORM, res, torch.zeros_like(y))

    # -- parallel transport --------------------------------------------------

    def parallel_transport(self, x: Tensor, y: Tensor, v: Tensor) -> Tensor:
        """PT_{x->y}(v) = (lambda_x / lambda_y) gyr[y, -x] v."""
        lam_x = self.conformal_factor(x)
        lam_y = self.conformal_factor(y)
        return (lam_x / lam_y) * self.gyration(y, -x, v)

    def pt_from_origin(self, y: Tensor, v: Tensor) -> Tensor:
        """PT_{o->y}(v) = (2 / lambda_y) v (gyr[y, 0] = id)."""
        return 2.0 / self.conformal_factor(y, check=False) * v

    def pt_to_origin(self, x: Tensor, v: Tensor) -> Tensor:
        """PT_{x->o}(v) = (lambda_x / 2) v (gyr[0, -x] = id)."""
        return self.conformal_factor(x, check=False) / 2.0 * v


def project_to_ball(x: Tensor, kappa: float) -> Tensor:
    """Project a raw vector into the ball of curvature -kappa (margin-safe)."""
    return PoincareBall(kappa).project(x)


@dataclass(frozen=True)
class BallPoint:
    """A single validated point of the ball; coords is a 1-D tensor."""

    ball: PoincareBall
    coords: Tensor

    def __post_init__(self) -> None:
        if self.coords.dim() != 1:
            raise DomainError("BallPoint coords must be 1-D")
        object.__setattr__(self, "coords", self.ball.project(self.coords.double()))

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    def conformal_factor(self) -> float:
        return float(self.ball.conformal_factor(self.coords))

    def distance_to(self, other: "BallPoint") -> float:
        return float(self.ball.distance(self.coords, other.coords))


@dataclass(frozen=True)
class TangentVector:
    """A tangent vector in ambient coordinates attached to a base point."""

    base: BallPoint
    components: Tensor

    def __post_init__(self) -> None:
        if self.components.shape != self.base.coords.shape:
            raise DomainError("tangent components must match base dimension")
        object.__setattr__(self, "components", self.components.double())
