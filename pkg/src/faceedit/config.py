"""Pipeline configuration.

Every tunable constant of the recovery and editing pipeline lives here so
that runs are reproducible: the resolved config is echoed into every bundle
manifest, and a flat ``key=value`` text file can override any field.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path


@dataclass
class Config:
    # geometry fitting
    landmark_count: int = 68
    prior_scale: float = 1.0
    fit_max_iters: int = 100
    fit_rel_tol: float = 1e-6
    fit_damping_init: float = 1e-3
    average_face: bool = False  # pin morph coefficients to zero, pose only

    # segmentation masks (fractions of the face bounding-box diagonal)
    mask_conservative_frac: float = 0.02
    mask_normal_frac: float = 0.08
    mask_aggressive_frac: float = 0.16

    # segmentation classifiers
    hair_strip_frac: float = 0.20
    hair_hit_margin: float = 2.5  # nats a hair hit must win by to seed a label
    seg_gmm_components: int = 3
    seg_gmm_cov_floor: float = 1e-6
    seg_gmm_max_iters: int = 100
    seg_gmm_tol: float = 1e-6
    seg_max_train_pixels: int = 20000
    seg_train_seed: int = 0

    # matting refinement; the band must span the texture-feature halo around
    # the face boundary so the matte can snap back to the true color edge
    matting_eps: float = 1e-5
    matting_lambda: float = 100.0
    matting_cg_rtol: float = 1e-6
    matting_band_px: int = 24

    # intrinsics
    shading_floor: float = 1.0 / 255.0

    # lighting
    shadow_map_size: int = 1024
    shadow_bias_frac: float = 2e-3
    spot_inner_cone_frac: float = 0.8

    # detail / flow
    feather_px: float = 12.0
    flow_alpha: float = 20.0
    flow_levels: int = 3
    flow_warp_iters: int = 10
    flow_cap_px: float = 8.0

    # edit compositing
    extend_sigma: float = 15.0
    scattering_sigma: float = 2.0
    shrink_px: int = 5
    boundary_ring_px: int = 30
    hair_bright_percentile: float = 95.0
    hair_bright_bias: float = 1.0
    background_mix: float = 0.5
    label_feather_sigma: float = 3.0

    # service
    preview_long_edge: int = 512

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_file(cls, path: str | Path) -> "Config":
        """Load overrides from a flat ``key=value`` text file."""
        cfg = cls()
        fields = {f.name: f.type for f in dataclasses.fields(cls)}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in fields:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            current = getattr(cfg, key)
            if isinstance(current, bool):
                setattr(cfg, key, value.lower() in ("1", "true", "yes", "on"))
            elif isinstance(current, int):
                setattr(cfg, key, int(value))
            else:
                setattr(cfg, key, float(value))
        return cfg


DEFAULT_CONFIG = Config()
