from .features import feature_stack, luma, mr8
from .gmm import PixelGmm, train_pixel_gmm
from .labels import BACKGROUND, FACE, HAIR, LABEL_PIXEL_VALUES, LabelMap, hair_detector, prepare_features, segment
from .masks import RegionMasks, region_masks
from .matting import matting_laplacian, matting_refine

__all__ = [
    "feature_stack",
    "luma",
    "mr8",
    "PixelGmm",
    "train_pixel_gmm",
    "BACKGROUND",
    "FACE",
    "HAIR",
    "LABEL_PIXEL_VALUES",
    "LabelMap",
    "prepare_features",
    "hair_detector",
    "segment",
    "RegionMasks",
    "region_masks",
    "matting_laplacian",
    "matting_refine",
]
