"""Adaptive collaboration-of-flows frame warping and interpolation toolkit."""

from .core import Frame, bilinear_sample, bilinear_sample_grad
from .warp import (WarpMode, WarpParams, backward_warp_vjp, forward_warp,
                   identity_params, load_acof, make_mode_params,
                   occlusion_blend, occlusion_blend_vjp, save_acof)
from .flowstats import mean_flow, render_flow, render_occlusion, variance_flow
from .metrics import interpolation_error, psnr, ssim

__all__ = [
    "Frame", "bilinear_sample", "bilinear_sample_grad",
    "WarpMode", "WarpParams", "forward_warp", "backward_warp_vjp",
    "occlusion_blend", "occlusion_blend_vjp", "make_mode_params",
    "identity_params", "save_acof", "load_acof",
    "mean_flow", "variance_flow", "render_flow", "render_occlusion",
    "psnr", "ssim", "interpolation_error",
]

__version__ = "0.1.0"
