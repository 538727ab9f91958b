"""Sparse-view fan-beam reconstruction (FBP, TV, learned primal-dual) for sequentially scanned logs."""

from ._core import (
    FanBeamGeometry,
    ImageGrid,
    InvalidArgument,
    back_project,
    build_fanbeam,
    default_fanbeam,
    dice,
    equispaced_source_angles,
    fbp,
    forward_project,
    log_phantom,
    lpd_reconstruct,
    operator_norm,
    psnr,
    run_cli,
    scan_plan_offsets,
    ssim,
    tv_reconstruct,
)

__all__ = [
    "FanBeamGeometry",
    "ImageGrid",
    "InvalidArgument",
    "back_project",
    "build_fanbeam",
    "default_fanbeam",
    "dice",
    "equispaced_source_angles",
    "fbp",
    "forward_project",
    "log_phantom",
    "lpd_reconstruct",
    "operator_norm",
    "psnr",
    "run_cli",
    "scan_plan_offsets",
    "ssim",
    "tv_reconstruct",
]
