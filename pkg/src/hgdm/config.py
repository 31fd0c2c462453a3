"""Run configuration: flat key=value files, dataset presets, config hashing.

Unknown keys are rejected so a config file cannot silently drift from the
documented schema. Presets carry the per-dataset hyperparameters (SDE kinds
and ranges, solver SNR/scale, architecture sizes, curvature) plus desk-scale
training lengths.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields, replace


@dataclass(frozen=True)
class RunConfig:
    dataset: str = "community_small"
    seed: int = 0
    kappa: float = 0.01
    # architecture
    latent_dim: int = 32
    hvae_layers: int = 3
    score_x_layers: int = 3
    score_a_layers: int = 5
    heads: int = 4
    n_centroids: int = 32
    mlp_hidden: int = 32
    gcn_hidden: int = 32
    pair_hidden: int = 32
    init_channels: int = 2
    hidden_channels: int = 8
    final_channels: int = 4
    beta_kl: float = 0.01
    max_degree: int = 15
    # diffusion
    sde_x_kind: str = "vp"
    sde_x_min: float = 0.1
    sde_x_max: float = 2.0
    sde_a_kind: str = "vp"
    sde_a_min: float = 0.1
    sde_a_max: float = 1.0
    num_steps: int = 1000
    # sampler
    predictor: str = "euler_maruyama"
    corrector_steps: int = 1
    snr_x: float = 0.2
    scale_x: float = 1.0
    snr_a: float = 0.2
    scale_a: float = 1.0
    # training
    lr: float = 1e-2
    weight_decay: float = 1e-4
    batch_size: int = 128
    epochs_hvae: int = 400
    epochs_score: int = 1200
    checkpoint_every: int = 200
    variant: str = "true"
    sample_count: int = 10000

    def __post_init__(self) -> None:
        if self.sde_x_kind not in ("ve", "vp") or self.sde_a_kind not in ("ve", "vp"):
            raise ValueError("sde kinds must be 've' or 'vp'")
        if self.variant not in ("true", "ps", "psdc"):
            raise ValueError("variant must be true, ps, or psdc")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive (magnitude of the curvature)")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


PRESETS: dict[str, dict] = {
    # Community-small: VP/VP, EM + Langevin, SNR 0.2, scale 1.0, curvature -0.1.
    "community_small": dict(
        dataset="community_small", kappa=0.1, latent_dim=32, hvae_layers=3,
        score_x_layers=3, score_a_layers=5, gcn_hidden=32, mlp_hidden=32,
        pair_hidden=32,
        sde_x_kind="vp", sde_x_min=0.1, sde_x_max=2.0,
        sde_a_kind="vp", sde_a_min=0.1, sde_a_max=1.0,
        predictor="euler_maruyama", snr_x=0.2, scale_x=1.0, snr_a=0.2, scale_a=1.0,
        lr=1e-2, weight_decay=1e-4, batch_size=128,
        epochs_hvae=400, epochs_score=1200,
    ),
    # Grid: VP/VP with wider X beta range, reverse-diffusion + Langevin.
    "grid": dict(
        dataset="grid", kappa=0.01, latent_dim=32, hvae_layers=3,
        score_x_layers=5, score_a_layers=7, gcn_hidden=32, mlp_hidden=32,
        pair_hidden=32,
        sde_x_kind="vp", sde_x_min=0.1, sde_x_max=4.0,
        sde_a_kind="vp", sde_a_min=0.2, sde_a_max=0.8,
        predictor="reverse_diffusion", snr_x=0.05, scale_x=1.0, snr_a=0.05, scale_a=1.0,
        lr=1e-2, weight_decay=1e-4, batch_size=8,
        epochs_hvae=200, epochs_score=400,
    ),
    # QM9-like fixture: VE/VE, reverse-diffusion + Langevin, molecule SNR/scales.
    "qm9_fixture": dict(
        dataset="qm9_fixture", kappa=0.01, latent_dim=16, hvae_layers=3,
        score_x_layers=2, score_a_layers=3, gcn_hidden=16, mlp_hidden=16,
        pair_hidden=16,
        sde_x_kind="ve", sde_x_min=0.1, sde_x_max=2.0,
        sde_a_kind="ve", sde_a_min=0.1, sde_a_max=1.0,
        predictor="reverse_diffusion", snr_x=1.0, scale_x=0.9, snr_a=0.2, scale_a=0.7,
        lr=5e-3, weight_decay=1e-4, batch_size=1024,
        epochs_hvae=600, epochs_score=1200,
    ),
}


def preset(dataset: str, **overrides) -> RunConfig:
    if dataset not in PRESETS:
        raise ValueError(f"unknown dataset {dataset!r}; choose from {sorted(PRESETS)}")
    return RunConfig(**{**PRESETS[dataset], **overrides})


def _coerce(name: str, raw: str):
    ftype = str(_FIELD_TYPES[name])
    if "int" in ftype:
        return int(raw)
    if "float" in ftype:
        return float(raw)
    return raw


def parse_config(path) -> RunConfig:
    """Parse a flat key=value file; '#' starts a comment; unknown keys fail."""
    values: dict = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _coerce(key, raw)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad value for {key}: {raw!r}") from None
    if "dataset" in values and values["dataset"] in PRESETS:
        return preset(values.pop("dataset"), **values)
    return RunConfig(**values)


def write_config(path, cfg: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for key, val in sorted(asdict(cfg).items()):
            f.write(f"{key} = {val}\n")


def config_hash(cfg: RunConfig) -> str:
    canon = "\n".join(f"{k}={v}" for k, v in sorted(asdict(cfg).items()))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def with_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **overrides)
