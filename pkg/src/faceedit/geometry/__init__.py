from .model import GmmPrior, MorphableModel, REGION_NAMES, build_mesh, make_sample_model, vertex_normals
from .fitting import FaceFit, estimate_pose, fit_face, gmm_regularizer
from .raster import GeometryBuffers, WarpField, compose_warp, pixel_correspondence, rasterize

__all__ = [
    "GmmPrior",
    "MorphableModel",
    "REGION_NAMES",
    "build_mesh",
    "make_sample_model",
    "vertex_normals",
    "FaceFit",
    "estimate_pose",
    "fit_face",
    "gmm_regularizer",
    "GeometryBuffers",
    "WarpField",
    "compose_warp",
    "pixel_correspondence",
    "rasterize",
]
