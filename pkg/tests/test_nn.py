import numpy as np
import pytest
import torch

from hgdm.geom import PoincareBall
from hgdm.nn import CentroidDistance, ConfigError, GcnLayer, HgatLayer, Mlp, grad_check

BALL = PoincareBall(0.1)


def rand_graph(rng, b=1, n=4, d=8, dense=True):
    """Random ball features and a symmetric real adjacency (all-nonzero if dense)."""
    h = BALL.project(0.3 * torch.from_numpy(rng.standard_normal((b, n, d))))
    raw = torch.from_numpy(rng.standard_normal((b, n, n)))
    a = 0.5 * (raw + raw.transpose(-1, -2))
    if dense:
        a = a + torch.sign(a) * 0.1
    idx = torch.arange(n)
    a[:, idx, idx] = 0.0
    return h, a


def proj_scalar(out, rng):
    w = torch.from_numpy(rng.standard_normal(tuple(out.shape)))
    return (out * w).sum()


class TestMlp:
    def test_zero_params_zero_output(self):
        rng = np.random.default_rng(0)
        mlp = Mlp([3, 4, 2], rng)
        with torch.no_grad():
            for p in mlp.parameters():
                p.zero_()
        x = torch.randn(5, 3, dtype=torch.float64)
        assert float(mlp(x).abs().max().detach()) == 0.0

    def test_identity_linear(self):
        rng = np.random.default_rng(1)
        mlp = Mlp([3, 3], rng, act="identity")
        with torch.no_grad():
            mlp.weights[0].copy_(torch.eye(3, dtype=torch.float64))
            mlp.biases[0].zero_()
        x = torch.randn(5, 3, dtype=torch.float64)
        assert torch.equal(mlp(x), x)

    def test_linear_grad_check_tight(self):
        rng = np.random.default_rng(2)
        mlp = Mlp([3, 2], rng, act="identity")
        x = torch.randn(4, 3, dtype=torch.float64, requires_grad=True)
        w = torch.from_numpy(rng.standard_normal((4, 2)))
        err = grad_check(lambda: (mlp(x) * w).sum(), list(mlp.parameters()) + [x])
        assert err <= 1e-9

    def test_mlp_grad_check(self):
        rng = np.random.default_rng(3)
        mlp = Mlp([3, 5, 2], rng)
        x = torch.randn(4, 3, dtype=torch.float64, requires_grad=True)
        w = torch.from_numpy(rng.standard_normal((4, 2)))
        err = grad_check(lambda: (mlp(x) * w).sum(), list(mlp.parameters()) + [x])
        assert err <= 1e-5


class TestHgat:
    def test_dim_heads_mismatch(self):
        with pytest.raises(ConfigError):
            HgatLayer(10, 4, BALL, np.random.default_rng(0))

    def test_single_node_self_loop(self):
        rng = np.random.default_rng(4)
        layer = HgatLayer(8, 2, BALL, rng)
        h = BALL.project(0.2 * torch.from_numpy(rng.standard_normal((1, 1, 8))))
        a = torch.zeros(1, 1, 1, dtype=torch.float64)
        out = layer(h, a)
        # alpha = 1 over the lone self-loop: out = act(exp_h(PT(blockwise W log_o(h))))
        he = BALL.log_map0(h).reshape(1, 1, 2, 4)
        wh = torch.einsum("bnkm,kmp->bnkp", he, layer.weight).reshape(1, 1, 8)
        want = torch.nn.functional.leaky_relu(
            BALL.exp_map(h, BALL.pt_from_origin(h, wh)), 0.2
        )
        assert torch.allclose(out, want, atol=1e-12)

    def test_output_in_ball(self):
        rng = np.random.default_rng(5)
        layer = HgatLayer(8, 4, BALL, rng)
        h, a = rand_graph(rng, b=3, n=6, d=8)
        out = layer(h, 5.0 * a)
        assert BALL.in_ball(out)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(6)
        layer = HgatLayer(8, 2, BALL, rng)
        h, a = rand_graph(rng, b=2, n=5, d=8)
        perm = torch.from_numpy(rng.permutation(5))
        out = layer(h, a)
        out_p = layer(h[:, perm], a[:, perm][:, :, perm])
        assert float((out_p - out[:, perm]).abs().max()) < 1e-12

    def test_grad_check(self):
        rng = np.random.default_rng(7)
        layer = HgatLayer(4, 2, BALL, rng)
        h, a = rand_graph(rng, b=1, n=4, d=4)
        h = h.requires_grad_(True)
        a = a.requires_grad_(True)
        w = torch.from_numpy(rng.standard_normal((1, 4, 4)))
        err = grad_check(
            lambda: (layer(h, a) * w).sum(), list(layer.parameters()) + [h, a]
        )
        assert err <= 1e-5

    def test_masked_nodes_zeroed(self):
        rng = np.random.default_rng(8)
        layer = HgatLayer(8, 2, BALL, rng)
        h, a = rand_graph(rng, b=1, n=5, d=8)
        mask = torch.tensor([[True, True, True, False, False]])
        out = layer(h, a, mask)
        assert float(out[0, 3:].abs().max()) == 0.0


class TestCentroidDistance:
    def test_distance_zero_at_centroid(self):
        rng = np.random.default_rng(9)
        layer = CentroidDistance(4, 3, BALL, rng)
        x = layer.centroids[2].detach().reshape(1, 1, 3)
        out = layer(x)
        assert float(out[0, 0, 2]) < 1e-12

    def test_origin_centroid_column(self):
        rng = np.random.default_rng(10)
        layer = CentroidDistance(3, 2, BALL, rng)
        with torch.no_grad():
            layer.centroids[0].zero_()
        x = BALL.project(0.4 * torch.from_numpy(rng.standard_normal((1, 6, 2))))
        out = layer(x)
        want = BALL.distance0(x)[..., 0]
        assert torch.allclose(out[..., 0], want, rtol=1e-12)

    def test_grad_check(self):
        rng = np.random.default_rng(11)
        layer = CentroidDistance(3, 3, BALL, rng)
        x = BALL.project(0.3 * torch.from_numpy(rng.standard_normal((1, 4, 3))))
        x = x.requires_grad_(True)
        w = torch.from_numpy(rng.standard_normal((1, 4, 3)))
        err = grad_check(lambda: (layer(x) * w).sum(), list(layer.parameters()) + [x])
        assert err <= 1e-5


class TestGcn:
    def test_no_edges_single_node(self):
        rng = np.random.default_rng(12)
        layer = GcnLayer(3, 2, rng, act="elu")
        h = torch.randn(1, 1, 3, dtype=torch.float64)
        a = torch.zeros(1, 1, 1, dtype=torch.float64)
        want = torch.nn.functional.elu(h @ layer.weight)
        assert torch.allclose(layer(h, a), want)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(13)
        layer = GcnLayer(3, 3, rng)
        h = torch.randn(2, 6, 3, dtype=torch.float64)
        raw = torch.from_numpy(rng.standard_normal((2, 6, 6)))
        a = 0.5 * (raw + raw.transpose(-1, -2))
        perm = torch.from_numpy(rng.permutation(6))
        out = layer(h, a)
        out_p = layer(h[:, perm], a[:, perm][:, :, perm])
        assert float((out_p - out[:, perm]).abs().max()) < 1e-12

    def test_grad_check(self):
        rng = np.random.default_rng(14)
        layer = GcnLayer(3, 2, rng)
        h = torch.randn(1, 4, 3, dtype=torch.float64, requires_grad=True)
        raw = torch.from_numpy(rng.standard_normal((1, 4, 4)))
        a = (0.5 * (raw + raw.transpose(-1, -2))).requires_grad_(True)
        w = torch.from_numpy(rng.standard_normal((1, 4, 2)))
        err = grad_check(lambda: (layer(h, a) * w).sum(), list(layer.parameters()) + [h, a])
        assert err <= 1e-5


class TestDeterminism:
    def test_bit_identical_forward(self):
        rng = np.random.default_rng(15)
        layer = HgatLayer(8, 2, BALL, rng)
        h, a = rand_graph(rng, b=2, n=5, d=8)
        assert torch.equal(layer(h, a), layer(h, a))
