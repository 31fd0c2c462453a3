"""Property suites behind `hgdm geom-check` and acceptance criterion 1.

Each check returns (name, worst relative error, tolerance, worst-case input
summary); a check passes when worst <= tolerance. The optional ``bug``
argument lets the harness verify it can catch an injected defect.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from . import hwn
from .geom import PoincareBall

DEFAULT_KAPPAS = (0.01, 0.1, 1.0)
DEFAULT_DIMS = (2, 3, 16)
FLAT_KAPPA = 1e-8


@dataclass(frozen=True)
class CheckResult:
    name: str
    worst: float
    tol: float
    worst_input: str

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol


def _random_points(ball: PoincareBall, d: int, n: int, rng: np.random.Generator,
                   max_frac: float = 0.95) -> torch.Tensor:
    """Points with radii up to max_frac of the ball radius, uniform direction."""
    dirs = rng.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = ball.radius * max_frac * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / d)
    return torch.from_numpy(dirs * radii)


def _rel(err: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
    return err / ref.clamp(min=1e-12)


def _worst(vals: torch.Tensor, pts: torch.Tensor) -> tuple[float, str]:
    idx = int(torch.argmax(vals))
    return float(vals[idx]), np.array2string(pts[idx].numpy(), precision=4)


def geometry_suite(kappas=DEFAULT_KAPPAS, dims=DEFAULT_DIMS, n: int = 10_000,
                   seed: int = 0, bug: str | None = None) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []
    for kappa in kappas:
        ball = PoincareBall(kappa)
        for d in dims:
            x = _random_points(ball, d, n, rng)
            y = _random_points(ball, d, n, rng)
            v = torch.from_numpy(rng.standard_normal((n, d)))
            u = torch.from_numpy(rng.standard_normal((n, d)))
            tag = f"kappa={kappa},d={d}"

            log_xy = ball.log_map(x, y)
            if bug == "log_map_sign":
                log_xy = -log_xy
            back = ball.exp_map(x, log_xy)
            err = _rel((back - y).norm(dim=-1), y.norm(dim=-1))
            worst, at = _worst(err, y)
            results.append(CheckResult(f"exp_log_roundtrip[{tag}]", worst, 1e-8, at))

            # bound the geodesic length lambda_x |v| so exp stays representable
            lam = ball.conformal_factor(x)
            v_geo = v / v.norm(dim=-1, keepdim=True) / lam
            v_geo = v_geo * torch.from_numpy(rng.uniform(0.01, 5.0, (n, 1)))
            dist = ball.distance(x, ball.exp_map(x, v_geo))[..., 0]
            expect = (lam * v_geo.norm(dim=-1, keepdim=True))[..., 0]
            err = _rel((dist - expect).abs(), expect)
            worst, at = _worst(err, x)
            results.append(CheckResult(f"geodesic_length[{tag}]", worst, 1e-8, at))

            pu = ball.parallel_transport(x, y, u)
            pv = ball.parallel_transport(x, y, v)
            lhs = ball.tangent_inner(y, pu, pv)[..., 0]
            rhs = ball.tangent_inner(x, u, v)[..., 0]
            err = _rel((lhs - rhs).abs(), rhs.abs())
            worst, at = _worst(err, x)
            results.append(CheckResult(f"pt_isometry[{tag}]", worst, 1e-8, at))

            cancel = ball.mobius_add(-x, ball.mobius_add(x, y))
            err = _rel((cancel - y).norm(dim=-1), y.norm(dim=-1))
            worst, at = _worst(err, y)
            results.append(CheckResult(f"mobius_cancellation[{tag}]", worst, 1e-8, at))

            gv = ball.gyration(x, y, v)
            err = _rel((gv.norm(dim=-1) - v.norm(dim=-1)).abs(), v.norm(dim=-1))
            worst, at = _worst(err, v)
            results.append(CheckResult(f"gyration_orthogonal[{tag}]", worst, 1e-10, at))

            sym = (ball.distance(x, y) - ball.distance(y, x)).abs()[..., 0]
            worst, at = _worst(_rel(sym, ball.distance(x, y)[..., 0]), x)
            results.append(CheckResult(f"distance_symmetry[{tag}]", worst, 1e-12, at))

            zero = ball.distance(x, x)[..., 0].abs()
            worst, at = _worst(zero, x)
            results.append(CheckResult(f"distance_identity[{tag}]", worst, 1e-12, at))
    results.extend(flat_limit_suite(dims=dims, n=min(n, 2000), seed=seed + 1))
    return results


def flat_limit_suite(dims=DEFAULT_DIMS, n: int = 2000, seed: int = 1) -> list[CheckResult]:
    """At kappa = 1e-8 the ball operations must agree with the Euclidean ones.

    Points are drawn at O(1) norm. The distance limit is 2*||x - y||: with the
    conformal factor lambda -> 2, every formula of this convention (including
    the origin closed form (2/sqrt(k)) atanh(sqrt(k)|z|)) doubles Euclidean
    lengths, which the geodesic-length identity d = lambda*|v| also forces.
    """
    rng = np.random.default_rng(seed)
    ball = PoincareBall(FLAT_KAPPA)
    results = []
    for d in dims:
        def draw():
            p = rng.standard_normal((n, d))
            return torch.from_numpy(p / np.linalg.norm(p, axis=1, keepdims=True)
                                    * rng.uniform(0.0, 1.5, (n, 1)))
        x, y, v = draw(), draw(), draw()
        tag = f"d={d}"
        add_err = (ball.mobius_add(x, y) - (x + y)).norm(dim=-1)
        worst, at = _worst(add_err, x)
        results.append(CheckResult(f"flat_mobius_add[{tag}]", worst, 1e-6, at))
        exp_err = (ball.exp_map(x, v) - (x + v)).norm(dim=-1)
        worst, at = _worst(exp_err, x)
        results.append(CheckResult(f"flat_exp[{tag}]", worst, 1e-6, at))
        dist_err = (ball.distance(x, y)[..., 0] - 2.0 * (x - y).norm(dim=-1)).abs()
        worst, at = _worst(dist_err, x)
        results.append(CheckResult(f"flat_distance[{tag}]", worst, 1e-6, at))
        pt_err = (ball.parallel_transport(x, y, v) - v).norm(dim=-1)
        worst, at = _worst(pt_err, x)
        results.append(CheckResult(f"flat_pt[{tag}]", worst, 1e-6, at))
    return results


def hwn_score_fd_suite(kappas=(0.01, 1.0), d: int = 3, n: int = 1000, seed: int = 2,
                       tol: float = 1e-4) -> list[CheckResult]:
    """Score vs central differences of log_pdf along geodesics exp_z(eps*u).

    Directions are Riemannian-unit (so the probe moves a fixed geodesic step
    regardless of lambda_z) and the error is taken relative to the Riemannian
    score norm, the scale of the directional derivative being checked.
    """
    rng = np.random.default_rng(seed)
    results = []
    h = 1e-4  # geodesic step length
    for kappa in kappas:
        ball = PoincareBall(kappa)
        mu = _random_points(ball, d, n, rng, max_frac=0.5)
        sigma = torch.from_numpy(rng.uniform(0.2, 1.5, size=(n, 1)))
        z = hwn.sample(ball, mu, sigma, rng)
        s = hwn.score(ball, mu, sigma, z)
        s_norm = ball.tangent_norm(z, s)[..., 0]
        worst = 0.0
        worst_at = ""
        for _ in range(5):
            u = torch.from_numpy(rng.standard_normal((n, d)))
            u = u / ball.tangent_norm(z, u)  # Riemannian-unit direction
            lhs = (ball.tangent_inner(z, s, u))[..., 0]
            f_plus = hwn.log_pdf(ball, mu, sigma, ball.exp_map(z, h * u))
            f_minus = hwn.log_pdf(ball, mu, sigma, ball.exp_map(z, -h * u))
            fd = (f_plus - f_minus) / (2 * h)
            rel = (lhs - fd).abs() / (s_norm + 1e-8)
            w, at = _worst(rel, z)
            if w > worst:
                worst, worst_at = w, at
        results.append(CheckResult(f"hwn_score_fd[kappa={kappa}]", worst, tol, worst_at))
    return results


def run_all(kappas=DEFAULT_KAPPAS, dims=DEFAULT_DIMS, n: int = 10_000, seed: int = 0,
            bug: str | None = None) -> list[CheckResult]:
    results = geometry_suite(kappas, dims, n, seed, bug)
    results += hwn_score_fd_suite(n=min(n, 1000), seed=seed + 2)
    return results
