"""Independent Euclidean Predictor-Corrector reference for flat-limit tests.

Deliberately re-implements the PC chain with plain vector arithmetic and its
own schedule formulas; shares nothing with hgdm.sampler except the noise draw
ORDER (X init, A init; per step: predictor eps_x, eps_a; per corrector sweep:
z_x, z_a; symmetric matrices built by mirroring the strict upper triangle).
"""

from __future__ import annotations

import numpy as np
import torch


def sym(raw: torch.Tensor) -> torch.Tensor:
    upper = torch.triu(raw, diagonal=1)
    return upper + upper.transpose(-1, -2)


def langevin_eps_ref(snr, scale, s, z, eps_max=1e-2):
    dims = tuple(range(1, s.dim()))
    s_norm = s.norm(dim=dims)
    z_norm = z.norm(dim=dims)
    eps = 2.0 * scale * (snr * z_norm / s_norm.clamp(min=1e-300)) ** 2
    eps = torch.where(s_norm > 0, eps, torch.full_like(eps, eps_max))
    return eps.reshape(-1, *([1] * (s.dim() - 1)))


def euclid_pc(kind, x_rng, score_x_fn, score_a_fn, b, n, d, num_steps,
              x_min, x_max, a_min, a_max, predictor="reverse_diffusion",
              corrector_steps=1, snr_x=0.2, scale_x=1.0, snr_a=0.2, scale_a=1.0,
              record=None):
    """Plain-space PC chain mirroring Algorithms 1-2 without any manifold ops."""
    rng = x_rng

    def sigma(s_lo, s_hi, t):
        return s_lo * (s_hi / s_lo) ** t

    def beta(b_lo, b_hi, t):
        return b_lo + t * (b_hi - b_lo)

    if kind == "ve":
        x = x_max * torch.from_numpy(rng.standard_normal((b, n, d)))
        a = a_max * sym(torch.from_numpy(rng.standard_normal((b, n, n))))
    else:
        x = torch.from_numpy(rng.standard_normal((b, n, d)))
        a = sym(torch.from_numpy(rng.standard_normal((b, n, n))))

    for i in range(num_steps - 1, -1, -1):
        t_hi, t_lo = (i + 1) / num_steps, i / num_steps
        s_x = score_x_fn(x, a)
        s_a = score_a_fn(x, a)
        if kind == "ve":
            var_x = sigma(x_min, x_max, t_hi) ** 2 - sigma(x_min, x_max, t_lo) ** 2
            var_a = sigma(a_min, a_max, t_hi) ** 2 - sigma(a_min, a_max, t_lo) ** 2
            x_mean = x + var_x * s_x
            a_mean = a + var_a * s_a
            std_x, std_a = var_x**0.5, var_a**0.5
        else:
            bt = beta(x_min, x_max, t_hi) / num_steps
            bt_a = beta(a_min, a_max, t_hi) / num_steps
            if predictor == "reverse_diffusion":
                coef, coef_a = 2.0 - (1.0 - bt) ** 0.5, 2.0 - (1.0 - bt_a) ** 0.5
            else:
                coef, coef_a = 1.0 + 0.5 * bt, 1.0 + 0.5 * bt_a
            x_mean = coef * x + bt * s_x
            a_mean = coef_a * a + bt_a * s_a
            std_x, std_a = bt**0.5, bt_a**0.5
        x = x_mean + std_x * torch.from_numpy(rng.standard_normal((b, n, d)))
        a = a_mean + std_a * sym(torch.from_numpy(rng.standard_normal((b, n, n))))
        for _ in range(corrector_steps):
            s_x = score_x_fn(x, a)
            s_a = score_a_fn(x, a)
            z_x = torch.from_numpy(rng.standard_normal((b, n, d)))
            e_x = langevin_eps_ref(snr_x, scale_x, s_x, z_x)
            x = x + e_x * s_x + (2 * e_x).sqrt() * z_x
            z_a = sym(torch.from_numpy(rng.standard_normal((b, n, n))))
            e_a = langevin_eps_ref(snr_a, scale_a, s_a, z_a)
            a = a + e_a * s_a + (2 * e_a).sqrt() * z_a
        if record is not None:
            record.append((i, x.clone(), a.clone()))
    return x, a
