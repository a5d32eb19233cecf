"""Topology-preserving annulus segmentation.

A small segmentation engine that never predicts pixels directly: it warps a
binary annulus prior by learned diffeomorphic deformation fields, so every
prediction keeps the prior's topology (one component, one hole).
"""

from ._core import (
    Model,
    betti_numbers,
    compose,
    diffeo_activation,
    dice,
    fresh_model,
    gaussian_smooth,
    generate_sample,
    hausdorff,
    integrate,
    jacobian_report,
    load_model,
    make_prior,
    super_upsample,
    threshold,
    topology_ok,
    warp,
)

__all__ = [
    "Model",
    "betti_numbers",
    "compose",
    "diffeo_activation",
    "dice",
    "fresh_model",
    "gaussian_smooth",
    "generate_sample",
    "hausdorff",
    "integrate",
    "jacobian_report",
    "load_model",
    "make_prior",
    "super_upsample",
    "threshold",
    "topology_ok",
    "warp",
]
