"""2D-to-3D lifting: occupancy-aware semantic lifting and the surface-only
top-down instance baseline with configurable channel assignment."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import (
    AxisGrid,
    CameraIntrinsics,
    DepthPlanes,
    FrustumGrid,
    OUT_OF_RANGE,
    cell_centers,
    plane_index,
    project,
    round_half_up,
)


class LiftingError(ValueError):
    pass


@dataclass
class FeatureVolume:
    """Per-cell feature vector (last axis = channels) plus scalar occupancy."""

    frame: object
    features: np.ndarray
    occupancy: np.ndarray


@dataclass(frozen=True)
class RandomAssignment:
    """Seeded shuffle of instances onto channels."""

    seed: int


class CategorySortedAssignment:
    """Instances sorted by (category, instance id) onto channels."""


def _frustum_fill_mask(depth: np.ndarray, planes: DepthPlanes) -> np.ndarray:
    """(H, W, M) mask of cells at or behind the pixel's depth surface."""
    z = planes.centers()
    d = np.asarray(depth, dtype=np.float64)
    return (d[..., None] > 0) & (z[None, None, :] >= d[..., None])


def _axis_sampling(frame: AxisGrid, intrinsics, planes):
    """Project axis cell centers to image space: (vi, ui, z, in-image mask)."""
    centers = cell_centers(frame, intrinsics, planes)
    z = centers[..., 2]
    front = z > 0
    zsafe = np.where(front, z, 1.0)
    u = intrinsics.fx * centers[..., 0] / zsafe + intrinsics.cx
    v = intrinsics.fy * centers[..., 1] / zsafe + intrinsics.cy
    ui = round_half_up(u)
    vi = round_half_up(v)
    valid = (
        front
        & (ui >= 0) & (ui < intrinsics.width)
        & (vi >= 0) & (vi < intrinsics.height)
    )
    ui = np.where(valid, ui, 0)
    vi = np.where(valid, vi, 0)
    return vi, ui, z, valid


def lift_semantics(
    semantics2d: np.ndarray,
    depth: np.ndarray,
    frame,
    intrinsics: CameraIntrinsics,
    planes: DepthPlanes,
) -> np.ndarray:
    """Propagate per-pixel category scores to all cells at or behind the depth
    surface; cells in free space (or on rays with no surface) are exactly zero."""
    semantics2d = np.asarray(semantics2d, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if semantics2d.shape[:2] != (intrinsics.height, intrinsics.width):
        raise LiftingError("semantic map does not match the camera image size")
    if depth.shape != semantics2d.shape[:2]:
        raise LiftingError("depth map does not match the semantic map")
    if isinstance(frame, FrustumGrid):
        mask = _frustum_fill_mask(depth, planes)
        return semantics2d[:, :, None, :] * mask[..., None]
    if isinstance(frame, AxisGrid):
        vi, ui, z, valid = _axis_sampling(frame, intrinsics, planes)
        d = depth[vi, ui]
        keep = valid & (d > 0) & (z >= d)
        return semantics2d[vi, ui] * keep[..., None]
    raise LiftingError(f"unknown grid frame {frame!r}")


def lift_occupancy(
    mp_occupancy: np.ndarray,
    depth: np.ndarray,
    frame,
    intrinsics: CameraIntrinsics,
    planes: DepthPlanes,
) -> np.ndarray:
    """Coarse per-cell occupancy from the multi-plane map, with the same
    free-space zeroing rule as semantic lifting."""
    mp_occupancy = np.asarray(mp_occupancy, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if mp_occupancy.shape != (intrinsics.height, intrinsics.width, planes.count):
        raise LiftingError("multi-plane occupancy does not match camera/planes")
    if isinstance(frame, FrustumGrid):
        return mp_occupancy * _frustum_fill_mask(depth, planes)
    if isinstance(frame, AxisGrid):
        vi, ui, z, valid = _axis_sampling(frame, intrinsics, planes)
        m = plane_index(np.where(z > 0, z, planes.z_near), planes)
        m = np.asarray(m)
        keep = valid & (m != OUT_OF_RANGE)
        d = depth[vi, ui]
        keep = keep & (d > 0) & (z >= d)
        return mp_occupancy[vi, ui, np.where(keep, m, 0)] * keep
    raise LiftingError(f"unknown grid frame {frame!r}")


def occupancy_aware_lift(
    semantics2d: np.ndarray,
    mp_occupancy: np.ndarray,
    depth: np.ndarray,
    frame,
    intrinsics: CameraIntrinsics,
    planes: DepthPlanes,
    semantic_transform=None,
    occupancy_transform=None,
) -> FeatureVolume:
    """Hadamard product of lifted semantics and lifted occupancy.

    The transform hooks take and return a volume of unchanged shape; they stand
    in for learned feature blocks and default to the identity.
    """
    sem = lift_semantics(semantics2d, depth, frame, intrinsics, planes)
    occ = lift_occupancy(mp_occupancy, depth, frame, intrinsics, planes)
    if semantic_transform is not None:
        sem = semantic_transform(sem)
    if occupancy_transform is not None:
        occ = occupancy_transform(occ)
    if sem.shape[:-1] != occ.shape:
        raise LiftingError("transform changed the volume shape")
    return FeatureVolume(frame=frame, features=sem * occ[..., None], occupancy=occ)


def lift_instances_topdown(
    instance_map: np.ndarray,
    instance_categories: dict,
    depth: np.ndarray,
    frame,
    intrinsics: CameraIntrinsics,
    planes: DepthPlanes,
    assignment=CategorySortedAssignment(),
    n_channels: int = 16,
) -> FeatureVolume:
    """Surface-only lifting of 2D instance masks into fixed voxel channels.

    Each instance occupies one channel chosen by the assignment strategy; its
    mask pixels fill only the surface plane given by the depth map. When more
    instances exist than channels, the largest-area instances are kept.
    """
    if n_channels < 1:
        raise LiftingError("need at least one instance channel")
    instance_map = np.asarray(instance_map)
    depth = np.asarray(depth, dtype=np.float64)
    if not isinstance(frame, FrustumGrid):
        raise LiftingError("top-down baseline is defined on the frustum frame")
    ids = [int(i) for i in np.unique(instance_map[instance_map > 0])]
    if len(ids) > n_channels:
        areas = {i: int(np.sum(instance_map == i)) for i in ids}
        keep = sorted(ids, key=lambda i: (-areas[i], i))[:n_channels]
        dropped = sorted(set(ids) - set(keep))
        warnings.warn(f"dropping {len(dropped)} instances beyond {n_channels} channels")
        ids = sorted(keep)
    if isinstance(assignment, RandomAssignment):
        order = list(ids)
        np.random.Generator(np.random.PCG64(assignment.seed)).shuffle(order)
    elif isinstance(assignment, CategorySortedAssignment) or assignment is CategorySortedAssignment:
        order = sorted(ids, key=lambda i: (instance_categories[i], i))
    else:
        raise LiftingError(f"unknown assignment strategy {assignment!r}")
    features = np.zeros(frame.shape + (n_channels,), dtype=np.float64)
    surface = plane_index(np.where(depth > 0, depth, planes.z_near), planes)
    surface = np.asarray(surface)
    occupancy = np.zeros(frame.shape, dtype=np.float64)
    for channel, inst_id in enumerate(order):
        vs, us = np.nonzero((instance_map == inst_id) & (depth > 0) & (surface != OUT_OF_RANGE))
        features[vs, us, surface[vs, us], channel] = 1.0
        occupancy[vs, us, surface[vs, us]] = 1.0
    return FeatureVolume(frame=frame, features=features, occupancy=occupancy)
