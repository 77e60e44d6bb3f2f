"""End-to-end deterministic pipeline: priors -> lifting -> refinement stand-in
-> grouping -> panoptic assembly."""
from __future__ import annotations

import numpy as np

from .geometry import CameraIntrinsics, DepthPlanes, FrustumGrid, OUT_OF_RANGE, plane_index
from .lifting import lift_occupancy, occupancy_aware_lift
from .priors import Priors2D
from .reconstruction import identity_refine, reconstruct
from .volume import CategoryTable, PanopticVolume


def surface_only_occupancy(depth: np.ndarray, planes: DepthPlanes) -> np.ndarray:
    """Multi-plane occupancy that marks only the depth-surface plane per ray."""
    depth = np.asarray(depth, dtype=np.float64)
    h, w = depth.shape
    occ = np.zeros((h, w, planes.count), dtype=np.float64)
    m = plane_index(np.where(depth > 0, depth, planes.z_near), planes)
    m = np.asarray(m)
    vs, us = np.nonzero((depth > 0) & (m != OUT_OF_RANGE))
    occ[vs, us, m[vs, us]] = 1.0
    return occ


def reconstruct_from_priors(
    priors: Priors2D,
    frame,
    intrinsics: CameraIntrinsics,
    planes: DepthPlanes,
    categories: CategoryTable,
    occ_threshold: float = 0.5,
    surface_only: bool = False,
) -> PanopticVolume:
    """Run the bottom-up tail of the pipeline on a prior bundle.

    `surface_only` replaces the multi-plane occupancy with a surface-plane-only
    variant (the depth-only lifting baseline). Offsets must be present in the
    bundle; they stand in for the refinement stage's offset prediction.
    """
    if priors.offsets3d is None:
        raise ValueError("prior bundle carries no 3D offsets")
    mp = surface_only_occupancy(priors.depth, planes) if surface_only else priors.mp_occupancy
    lifted = occupancy_aware_lift(
        priors.semantics, mp, priors.depth, frame, intrinsics, planes
    )
    refined = identity_refine(lifted, priors.offsets3d, lifted.occupancy)
    return reconstruct(refined, priors.centers, intrinsics, planes, categories, occ_threshold)
