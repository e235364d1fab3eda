"""B-scaling: fuse K measurements of one latent quantity into a single score."""

from .core import (
    FittedBScaling,
    FusionInput,
    b_variance,
    component_transforms,
    fit_bscaling,
    predict_bmean,
    select_k0,
)
from .errors import BScalingError
from .spline_basis import KnotSet, basis_design, eval_basis, make_quantile_knots

__all__ = [
    "BScalingError",
    "FittedBScaling",
    "FusionInput",
    "KnotSet",
    "b_variance",
    "basis_design",
    "component_transforms",
    "eval_basis",
    "fit_bscaling",
    "make_quantile_knots",
    "predict_bmean",
    "select_k0",
]

__version__ = "0.1.0"
