import numpy as np
import pytest
import torch

from hgdm import hwn, sde
from hgdm.geom import DomainError, PoincareBall


def make_sched(kind="ve", lo=0.1, hi=2.0, n=1000):
    return sde.NoiseSchedule(kind, lo, hi, n)


class TestNoiseSchedule:
    def test_ve_endpoints(self):
        s = make_sched("ve", 0.1, 2.0)
        assert float(s.sigma(0.0)) == pytest.approx(0.1)
        assert float(s.sigma(1.0)) == pytest.approx(2.0)

    def test_vp_beta_integral_frozen(self):
        # beta_min=0.1, beta_max=1.0, t=1 -> 0.1 + 0.9/2 = 0.55
        s = make_sched("vp", 0.1, 1.0)
        assert float(s.beta_int(1.0)) == pytest.approx(0.55, rel=1e-15)

    def test_time_domain_error(self):
        s = make_sched()
        with pytest.raises(DomainError):
            s.sigma(1.5)
        with pytest.raises(DomainError):
            s.kernel_var(-0.1)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            sde.NoiseSchedule("ve", 2.0, 0.1)
        with pytest.raises(ValueError):
            sde.NoiseSchedule("vq", 0.1, 2.0)
        with pytest.raises(ValueError):
            sde.NoiseSchedule("ve", 0.1, 2.0, 0)

    def test_kernel_var_zero_at_t0(self):
        for kind in ("ve", "vp"):
            s = make_sched(kind, 0.1, 1.0)
            assert float(s.kernel_var(0.0)) == 0.0


class TestPerturbEuclidean:
    def test_t0_identity(self):
        rng = np.random.default_rng(0)
        x0 = torch.randn(4, 5, dtype=torch.float64)
        for kind in ("ve", "vp"):
            p = sde.perturb_euclidean(x0, make_sched(kind), 0.0, rng)
            assert torch.allclose(p.x_t, x0)

    def test_ve_variance_moment(self):
        rng = np.random.default_rng(1)
        s = make_sched("ve", 0.1, 2.0)
        x0 = torch.zeros(100_000, 1, dtype=torch.float64)
        p = sde.perturb_euclidean(x0, s, 0.7, rng)
        want = float(s.kernel_var(0.7))
        got = float((p.x_t - x0).pow(2).mean())
        assert abs(got - want) / want < 0.02

    def test_vp_terminal_standard_normal(self):
        rng = np.random.default_rng(2)
        s = make_sched("vp", 0.1, 20.0)
        x0 = torch.full((100_000, 1), 3.0, dtype=torch.float64)
        p = sde.perturb_euclidean(x0, s, 1.0, rng)
        assert abs(float(p.x_t.mean())) < 0.02
        assert abs(float(p.x_t.var()) - 1.0) < 0.02


class TestPerturbHyperbolic:
    def test_t0_identity(self):
        ball = PoincareBall(0.1)
        rng = np.random.default_rng(3)
        x0 = ball.project(torch.randn(6, 3, dtype=torch.float64))
        for kind in ("ve", "vp"):
            p = sde.perturb_hyperbolic(ball, x0, make_sched(kind), 0.0, rng)
            assert torch.allclose(p.x_t, x0)

    def test_flat_limit_matches_euclidean_shared_noise(self):
        ball = PoincareBall(1e-8)
        x0 = torch.randn(50, 3, dtype=torch.float64)
        s = make_sched("ve", 0.1, 2.0)
        p_h = sde.perturb_hyperbolic(ball, x0, s, 0.5, np.random.default_rng(7))
        p_e = sde.perturb_euclidean(x0, s, 0.5, np.random.default_rng(7))
        assert float((p_h.x_t - p_e.x_t).abs().max()) < 1e-4

    def test_vp_mean_is_mobius_scaled(self):
        ball = PoincareBall(1.0)
        rng = np.random.default_rng(4)
        s = make_sched("vp", 0.1, 1.0)
        x0 = ball.project(0.5 * torch.randn(8, 2, dtype=torch.float64))
        p = sde.perturb_hyperbolic(ball, x0, s, 0.6, rng)
        want = ball.mobius_scalar_mul(s.mean_scale(0.6), x0)
        assert torch.allclose(p.mean_t, want)
        # origin is a fixed point of Mobius scalar multiplication
        o = torch.zeros(1, 2, dtype=torch.float64)
        p0 = sde.perturb_hyperbolic(ball, o, s, 0.6, rng)
        assert float(p0.mean_t.abs().max()) == 0.0

    def test_per_item_times(self):
        ball = PoincareBall(1.0)
        rng = np.random.default_rng(5)
        x0 = ball.project(0.3 * torch.randn(4, 2, 2, dtype=torch.float64))
        t = torch.tensor([0.0, 0.3, 0.6, 1.0], dtype=torch.float64)
        p = sde.perturb_hyperbolic(ball, x0, make_sched("ve"), t, rng)
        assert torch.allclose(p.x_t[0], x0[0])  # t=0 row exact
        assert p.std.shape == (4, 1, 1)


class TestScoreTargets:
    def _sample(self, ball, kind="ve", t=0.6, n=200, seed=8):
        rng = np.random.default_rng(seed)
        scale = min(0.2 * ball.radius, 1.0)
        x0 = ball.project(scale * torch.from_numpy(rng.standard_normal((n, 3))))
        return sde.perturb_hyperbolic(ball, x0, make_sched(kind), t, rng)

    def test_true_zero_at_mean(self):
        ball = PoincareBall(1.0)
        p = self._sample(ball)
        p2 = sde.PerturbedSample(x_t=p.mean_t, t=p.t, v=p.v, mean_t=p.mean_t,
                                 std=p.std, hyperbolic=True)
        assert float(sde.score_target_true(ball, p2).abs().max()) == 0.0

    def test_true_equals_hwn_score(self):
        ball = PoincareBall(1.0)
        p = self._sample(ball)
        want = hwn.score(ball, p.mean_t, p.std, p.x_t)
        assert torch.equal(sde.score_target_true(ball, p), want)

    def test_ps_zero_noise(self):
        ball = PoincareBall(1.0)
        p = self._sample(ball)
        p = sde.PerturbedSample(x_t=p.x_t, t=p.t, v=torch.zeros_like(p.v),
                                 mean_t=p.mean_t, std=p.std, hyperbolic=True)
        assert float(sde.score_target_ps(ball, p).abs().max()) == 0.0

    def test_ps_norm_scales_with_conformal_ratio(self):
        # |PT_{o->x}(w)| = (2/lambda_x)|w|, so |target| = (2/lambda_x)|v|/std^2
        ball = PoincareBall(1.0)
        p = self._sample(ball)
        target = sde.score_target_ps(ball, p)
        lam = ball.conformal_factor(p.x_t, check=False)
        want = (2.0 / lam) * p.v.norm(dim=-1, keepdim=True) / (p.std**2)
        rel = (target.norm(dim=-1, keepdim=True) - want).abs() / want
        assert float(rel.max()) < 1e-12

    def test_ps_flat_limit(self):
        ball = PoincareBall(1e-8)
        p = self._sample(ball)
        want = -p.v / p.std**2
        assert float((sde.score_target_ps(ball, p) - want).abs().max()) < 1e-6

    def test_psdc_zero_at_mean(self):
        ball = PoincareBall(1.0)
        p = self._sample(ball)
        p2 = sde.PerturbedSample(x_t=p.mean_t, t=p.t, v=p.v, mean_t=p.mean_t,
                                 std=p.std, hyperbolic=True)
        assert float(sde.score_target_psdc(ball, p2).abs().max()) < 1e-14

    def test_psdc_collinear_with_true_score(self):
        # the collinearity oracle that fixes the default sign to -1
        ball = PoincareBall(1.0)
        p = self._sample(ball, seed=11)
        psdc = sde.score_target_psdc(ball, p)
        true = sde.score_target_true(ball, p)
        cos = (psdc * true).sum(-1) / (psdc.norm(dim=-1) * true.norm(dim=-1))
        assert float((cos - 1.0).abs().max()) < 1e-3

    def test_psdc_flat_limit(self):
        # default sign: -(x_t - mean)/std^2, the Euclidean denoising target
        ball = PoincareBall(1e-8)
        p = self._sample(ball)
        want = -(p.x_t - p.mean_t) / p.std**2
        assert float((sde.score_target_psdc(ball, p) - want).abs().max()) < 1e-4

    def test_true_flat_limit_quarter_scale(self):
        # Riemannian gradient of the exact sampler density: -(x_t-mean)/(4 std^2)
        ball = PoincareBall(1e-8)
        p = self._sample(ball)
        want = -(p.x_t - p.mean_t) / (4.0 * p.std**2)
        assert float((sde.score_target_true(ball, p) - want).abs().max()) < 1e-4

    def test_true_finite_difference(self):
        ball = PoincareBall(1.0)
        p = self._sample(ball, seed=12)
        s = sde.score_target_true(ball, p)
        h = 1e-4
        s_norm = ball.tangent_norm(p.x_t, s)[..., 0]
        rng = np.random.default_rng(13)
        for _ in range(3):
            u = torch.from_numpy(rng.standard_normal(p.x_t.shape))
            u = u / ball.tangent_norm(p.x_t, u)
            lhs = ball.tangent_inner(p.x_t, s, u)[..., 0]
            fd = (
                hwn.log_pdf(ball, p.mean_t, p.std, ball.exp_map(p.x_t, h * u))
                - hwn.log_pdf(ball, p.mean_t, p.std, ball.exp_map(p.x_t, -h * u))
            ) / (2 * h)
            assert float(((lhs - fd).abs() / (s_norm + 1e-8)).max()) < 1e-4

    def test_euclidean_target(self):
        rng = np.random.default_rng(14)
        x0 = torch.randn(10, 4, dtype=torch.float64)
        p = sde.perturb_euclidean(x0, make_sched("ve"), 0.5, rng)
        want = -(p.x_t - p.mean_t) / p.std**2
        assert torch.allclose(sde.euclidean_score_target(p), want)
        with pytest.raises(ValueError):
            sde.euclidean_score_target(
                sde.PerturbedSample(p.x_t, p.t, p.v, p.mean_t, p.std, hyperbolic=True)
            )
