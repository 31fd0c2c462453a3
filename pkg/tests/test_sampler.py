import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from hgdm import hwn, sampler
from hgdm.geom import PoincareBall
from hgdm.sde import NoiseSchedule

from euclid_pc import euclid_pc

FLAT = PoincareBall(1e-8)


def contract_x(x, a):
    return -0.25 * x


def contract_a(x, a):
    return -0.25 * a


def zero_fn(x, a):
    return torch.zeros_like(x) if x.dim() == 3 else torch.zeros_like(a)


class TestLangevinEps:
    def test_snr_quadratic(self):
        s = torch.ones(1, 4, 2, dtype=torch.float64)
        z = torch.ones(1, 4, 2, dtype=torch.float64)
        e1 = sampler.langevin_eps(0.1, 1.0, s, z)
        e2 = sampler.langevin_eps(0.2, 1.0, s, z)
        assert float(e2 / e1) == pytest.approx(4.0)

    def test_zero_scale_disables(self):
        s = torch.ones(1, 4, 2, dtype=torch.float64)
        with pytest.raises(ValueError):
            sampler.SamplerConfig(scale_x=0.0)
        # the formula itself: scale 0 would give 0; verified via direct call
        assert float(sampler.langevin_eps(0.2, 1e-12, s, s)) == pytest.approx(0.0, abs=1e-10)

    def test_frozen_arithmetic(self):
        # snr=0.2, scale=0.7, |z|=3, |s|=1.5 -> 2*0.7*(0.2*3/1.5)^2 = 0.224
        s = torch.zeros(1, 9, 1, dtype=torch.float64)
        s[0, 0, 0] = 1.5
        z = torch.zeros(1, 9, 1, dtype=torch.float64)
        z[0, 0, 0] = 3.0
        assert float(sampler.langevin_eps(0.2, 0.7, s, z)) == pytest.approx(0.224)

    def test_zero_score_caps_at_eps_max(self):
        s = torch.zeros(1, 4, 2, dtype=torch.float64)
        z = torch.ones(1, 4, 2, dtype=torch.float64)
        assert float(sampler.langevin_eps(0.2, 1.0, s, z, eps_max=1e-2)) == 1e-2


class TestPcSampler:
    def test_degenerate_single_step(self):
        cfg = sampler.SamplerConfig(num_steps=1, corrector_steps=0)
        sched = NoiseSchedule("ve", 0.1, 1.0, 1)
        x, a = sampler.pc_sample_ve(FLAT, sched, sched, zero_fn,
                                    lambda x, a: torch.zeros_like(a), cfg,
                                    2, 3, 2, np.random.default_rng(0))
        assert bool(torch.isfinite(x).all()) and bool(torch.isfinite(a).all())

    def test_kind_mismatch_rejected(self):
        ve = NoiseSchedule("ve", 0.1, 1.0, 10)
        vp = NoiseSchedule("vp", 0.1, 1.0, 10)
        cfg = sampler.SamplerConfig(num_steps=10)
        with pytest.raises(ValueError):
            sampler.pc_sample_ve(FLAT, vp, vp, zero_fn, zero_fn, cfg, 1, 2, 2,
                                 np.random.default_rng(0))
        with pytest.raises(ValueError):
            sampler.pc_sample_vp(FLAT, ve, ve, zero_fn, zero_fn, cfg, 1, 2, 2,
                                 np.random.default_rng(0))
        with pytest.raises(ValueError):
            sampler.pc_sample(FLAT, ve, vp, zero_fn, zero_fn, cfg, 1, 2, 2,
                              np.random.default_rng(0))

    def test_vp_zero_beta_zero_score_near_identity(self):
        # tiny beta and zero scores: the chain barely moves
        ball = PoincareBall(0.1)
        sched = NoiseSchedule("vp", 1e-12, 2e-12, 50)
        cfg = sampler.SamplerConfig(num_steps=50, corrector_steps=0)
        rng = np.random.default_rng(1)
        x, a = sampler.pc_sample_vp(
            ball, sched, sched, lambda x, a: torch.zeros_like(x),
            lambda x, a: torch.zeros_like(a), cfg, 2, 3, 2, rng)
        x0 = hwn.sample(ball, torch.zeros(2, 3, 2, dtype=torch.float64), 1.0,
                        np.random.default_rng(1))
        assert float((x - x0).abs().max()) < 1e-5

    def test_nonfinite_score_aborts_with_step(self):
        sched = NoiseSchedule("ve", 0.1, 1.0, 10)
        cfg = sampler.SamplerConfig(num_steps=10, corrector_steps=0)

        def bad(x, a):
            return torch.full_like(x, float("nan"))

        with pytest.raises(sampler.SamplerError) as exc:
            sampler.pc_sample_ve(FLAT, sched, sched, bad, zero_fn, cfg, 1, 2, 2,
                                 np.random.default_rng(0))
        assert exc.value.step == 9

    def test_zero_score_bridge_matches_independent_mc(self):
        # with zero scores and M=0 the VE chain composes wrapped-normal jumps;
        # compare its radius statistics against a direct MC of the same
        # composition built from hwn.sample alone
        ball = PoincareBall(1.0)
        n_steps, b = 40, 4000
        sched = NoiseSchedule("ve", 0.1, 1.0, n_steps)
        cfg = sampler.SamplerConfig(num_steps=n_steps, corrector_steps=0)
        x, _ = sampler.pc_sample_ve(
            ball, sched, sched, lambda x, a: torch.zeros_like(x),
            lambda x, a: torch.zeros_like(a), cfg, b, 1, 2,
            np.random.default_rng(2))
        r_chain = ball.distance0(x.reshape(-1, 2)).mean()

        rng = np.random.default_rng(3)
        z = hwn.sample(ball, torch.zeros(b, 2, dtype=torch.float64), 1.0, rng)
        for i in range(n_steps - 1, -1, -1):
            var = float(sched.sigma((i + 1) / n_steps) ** 2 - sched.sigma(i / n_steps) ** 2)
            z = hwn.sample(ball, z, var**0.5, rng)
        r_mc = ball.distance0(z).mean()
        assert abs(float(r_chain - r_mc)) / float(r_mc) < 0.05

    @pytest.mark.parametrize("kind,predictor", [
        ("ve", "reverse_diffusion"),
        ("vp", "reverse_diffusion"),
        ("vp", "euler_maruyama"),
    ])
    def test_flat_limit_matches_euclidean_reference(self, kind, predictor):
        b, n, d, steps = 2, 5, 4, 1000
        lo, hi = (0.1, 1.0) if kind == "ve" else (0.1, 2.0)
        sched = NoiseSchedule(kind, lo, hi, steps)
        cfg = sampler.SamplerConfig(predictor=predictor, num_steps=steps,
                                    corrector_steps=1, snr_x=0.2, snr_a=0.2)
        traj_h = []
        x, a = sampler.pc_sample(
            FLAT, sched, sched, contract_x, contract_a, cfg, b, n, d,
            np.random.default_rng(42),
            on_step=lambda i, xs, As: traj_h.append((i, xs.clone(), As.clone())),
        )
        traj_e = []
        xe, ae = euclid_pc(kind, np.random.default_rng(42), contract_x, contract_a,
                           b, n, d, steps, lo, hi, lo, hi, predictor=predictor,
                           corrector_steps=1, snr_x=0.2, snr_a=0.2, record=traj_e)
        worst = 0.0
        for (i1, xh, ah), (i2, xr, ar) in zip(traj_h, traj_e):
            assert i1 == i2
            worst = max(worst, float((xh - xr).abs().max()), float((ah - ar).abs().max()))
        assert worst < 1e-5, worst

    def test_intermediate_states_stay_in_ball(self):
        ball = PoincareBall(0.1)
        sched = NoiseSchedule("vp", 0.1, 2.0, 50)
        cfg = sampler.SamplerConfig(num_steps=50, corrector_steps=1)
        seen = []
        sampler.pc_sample(ball, sched, sched, contract_x, contract_a, cfg, 2, 4, 3,
                          np.random.default_rng(5),
                          on_step=lambda i, x, a: seen.append(ball.in_ball(x)))
        assert len(seen) == 50 and all(seen)

    def test_deterministic_given_seed(self):
        sched = NoiseSchedule("ve", 0.1, 1.0, 20)
        cfg = sampler.SamplerConfig(num_steps=20)
        ball = PoincareBall(0.5)
        out1 = sampler.pc_sample(ball, sched, sched, contract_x, contract_a, cfg,
                                 2, 3, 2, np.random.default_rng(7))
        out2 = sampler.pc_sample(ball, sched, sched, contract_x, contract_a, cfg,
                                 2, 3, 2, np.random.default_rng(7))
        assert torch.equal(out1[0], out2[0]) and torch.equal(out1[1], out2[1])


class TestQuantize:
    def test_molecule_thresholds(self):
        a = np.array([[0.0, 0.49, 1.4], [0.49, 0.0, 2.5], [1.4, 2.5, 0.0]])
        out = sampler.quantize(a, sampler.MOLECULE)
        assert out[0, 1] == 0   # < 0.5
        assert out[0, 2] == 1   # 1.4 in [0.5, 1.5)
        assert out[1, 2] == 3   # 2.5 in [2.5, inf)

    def test_molecule_exact_bin_edges(self):
        vals = np.array([0.5, 1.5, 2.5, 0.4999, 1.4999, 2.4999])
        n = len(vals) + 1
        a = np.zeros((n, n))
        a[0, 1:] = vals
        a[1:, 0] = vals
        out = sampler.quantize(a, sampler.MOLECULE)
        assert list(out[0, 1:]) == [1, 2, 3, 0, 1, 2]

    def test_generic_strict_half(self):
        a = np.array([[0.0, 0.5], [0.5, 0.0]])
        assert sampler.quantize(a, sampler.GENERIC)[0, 1] == 0  # strictly greater only
        a = np.array([[0.0, 0.5000001], [0.5000001, 0.0]])
        assert sampler.quantize(a, sampler.GENERIC)[0, 1] == 1

    def test_symmetrized_zero_diagonal(self):
        a = np.array([[5.0, 0.9], [0.1, 5.0]])
        out = sampler.quantize(a, sampler.GENERIC)
        assert out[0, 0] == 0 and out[1, 1] == 0
        assert out[0, 1] == out[1, 0] == 0  # mean 0.5 not > 0.5

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([sampler.MOLECULE, sampler.GENERIC]))
    def test_idempotent(self, seed, mode):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-1, 4, size=(5, 5))
        once = sampler.quantize(a, mode)
        twice = sampler.quantize(once.astype(float), mode)
        assert np.array_equal(once, twice)

    def test_nonfinite_rejected(self):
        a = np.full((2, 2), np.nan)
        with pytest.raises(ValueError):
            sampler.quantize(a, sampler.GENERIC)
