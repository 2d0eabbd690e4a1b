"""faceedit: recover an editable face representation (geometry, segmentation,
albedo, spherical-harmonic illumination, additive detail map) and use it to
relight faces, transfer makeup, and transfer fine-scale detail."""

from .config import Config, DEFAULT_CONFIG
from .edits import (
    EditOptions,
    EditResult,
    FaceRepresentation,
    StageError,
    detail_transfer,
    makeup_transfer,
    multiplicative_baseline,
    no_detail_baseline,
    recover,
    relight,
    study_pairs,
)
from .geometry import MorphableModel, make_sample_model
from .lighting import DirectionalLight, LightRig, SpotLight

__version__ = "0.1.0"

__all__ = [
    "Config",
    "DEFAULT_CONFIG",
    "EditOptions",
    "EditResult",
    "FaceRepresentation",
    "StageError",
    "detail_transfer",
    "makeup_transfer",
    "multiplicative_baseline",
    "no_detail_baseline",
    "recover",
    "relight",
    "study_pairs",
    "MorphableModel",
    "make_sample_model",
    "DirectionalLight",
    "LightRig",
    "SpotLight",
    "__version__",
]
