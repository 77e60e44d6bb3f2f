"""Pinhole camera model, depth-plane discretization, and grid-frame resampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Sentinel returned by plane_index for depths outside [z_near, z_far).
OUT_OF_RANGE = -1


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units; +z forward, +x right, +y down."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise GeometryError("image size must be at least 1x1")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise GeometryError("principal point must lie inside the image")


@dataclass(frozen=True)
class DepthPlanes:
    """Uniform discretization of [z_near, z_far) into `count` metric depth planes."""

    count: int
    z_near: float = 0.4
    z_far: float = 6.0

    def __post_init__(self):
        if self.count < 1:
            raise GeometryError("plane count must be >= 1")
        if not (0 < self.z_near < self.z_far):
            raise GeometryError("need 0 < z_near < z_far")

    @property
    def spacing(self) -> float:
        return (self.z_far - self.z_near) / self.count

    def center(self, m):
        """Metric depth of the center of plane m (vectorized)."""
        return self.z_near + (np.asarray(m) + 0.5) * self.spacing

    def centers(self) -> np.ndarray:
        return self.center(np.arange(self.count))


@dataclass(frozen=True)
class FrustumGrid:
    """Pixel-aligned grid: cell (u, v, m) is one ray sample. Arrays are (H, W, M)."""

    width: int
    height: int
    planes: int

    def __post_init__(self):
        if min(self.width, self.height, self.planes) < 1:
            raise GeometryError("frustum dims must be >= 1")

    @property
    def shape(self):
        return (self.height, self.width, self.planes)


@dataclass(frozen=True)
class AxisGrid:
    """Axis-aligned camera-space grid. Arrays are (nx, ny, nz); cell centers at
    origin + (index + 0.5) * voxel_size."""

    dims: tuple
    voxel_size: float
    origin: tuple

    def __post_init__(self):
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise GeometryError("axis dims must be three values >= 1")
        if self.voxel_size <= 0:
            raise GeometryError("voxel size must be positive")

    @property
    def shape(self):
        return tuple(int(d) for d in self.dims)


def backproject(u, v, z, intrinsics: CameraIntrinsics):
    """Pixel (u, v) at metric depth z -> camera-space point (x, y, z)."""
    z = np.asarray(z, dtype=np.float64)
    if np.any(z <= 0):
        raise GeometryError("backproject requires z > 0")
    x = z * (np.asarray(u, dtype=np.float64) - intrinsics.cx) / intrinsics.fx
    y = z * (np.asarray(v, dtype=np.float64) - intrinsics.cy) / intrinsics.fy
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def project(points, intrinsics: CameraIntrinsics):
    """Camera-space points (..., 3) -> continuous (u, v, z). No rounding."""
    points = np.asarray(points, dtype=np.float64)
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    if np.any(z <= 0):
        raise GeometryError("project requires points in front of the camera (z > 0)")
    u = intrinsics.fx * x / z + intrinsics.cx
    v = intrinsics.fy * y / z + intrinsics.cy
    return u, v, z


def plane_index(z, planes: DepthPlanes):
    """Depth plane containing metric depth z; OUT_OF_RANGE outside [z_near, z_far)."""
    z = np.asarray(z, dtype=np.float64)
    m = np.floor((z - planes.z_near) * planes.count / (planes.z_far - planes.z_near))
    m = m.astype(np.int64)
    out = (z < planes.z_near) | (z >= planes.z_far)
    m = np.where(out, OUT_OF_RANGE, np.clip(m, 0, planes.count - 1))
    if np.isscalar(z) or m.ndim == 0:
        return int(m)
    return m


def round_half_up(x):
    """Continuous image coordinate -> integer cell index (half rounds up)."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


def cell_centers(frame, intrinsics: CameraIntrinsics, planes: DepthPlanes) -> np.ndarray:
    """Camera-space center points of every cell, shaped frame.shape + (3,)."""
    if isinstance(frame, FrustumGrid):
        v, u, m = np.meshgrid(
            np.arange(frame.height),
            np.arange(frame.width),
            np.arange(frame.planes),
            indexing="ij",
        )
        return backproject(u, v, planes.center(m), intrinsics)
    if isinstance(frame, AxisGrid):
        ix, iy, iz = np.meshgrid(*(np.arange(d) for d in frame.shape), indexing="ij")
        idx = np.stack([ix, iy, iz], axis=-1).astype(np.float64)
        return np.asarray(frame.origin) + (idx + 0.5) * frame.voxel_size
    raise GeometryError(f"unknown grid frame {frame!r}")


def locate_points(points, frame, intrinsics: CameraIntrinsics, planes: DepthPlanes):
    """Map camera-space points (..., 3) to integer cell indices in `frame`.

    Returns (indices (..., 3), valid mask). Frustum indices are (v, u, m);
    axis indices are (ix, iy, iz). Invalid entries are zeroed.
    """
    points = np.asarray(points, dtype=np.float64)
    if isinstance(frame, FrustumGrid):
        z = points[..., 2]
        valid = z > 0
        zsafe = np.where(valid, z, 1.0)
        u, v, _ = project(np.stack([points[..., 0], points[..., 1], zsafe], axis=-1), intrinsics)
        ui = round_half_up(u)
        vi = round_half_up(v)
        m = plane_index(zsafe, planes)
        m = np.asarray(m)
        valid = (
            valid
            & (ui >= 0) & (ui < frame.width)
            & (vi >= 0) & (vi < frame.height)
            & (m != OUT_OF_RANGE)
        )
        idx = np.stack([vi, ui, m], axis=-1)
    elif isinstance(frame, AxisGrid):
        rel = (points - np.asarray(frame.origin)) / frame.voxel_size
        idx = np.floor(rel).astype(np.int64)
        valid = np.all((idx >= 0) & (idx < np.asarray(frame.shape)), axis=-1)
    else:
        raise GeometryError(f"unknown grid frame {frame!r}")
    idx = np.where(valid[..., None], idx, 0)
    return idx, valid


def resample_volume(
    volume: np.ndarray,
    src_frame,
    dst_frame,
    intrinsics: CameraIntrinsics,
    planes: DepthPlanes,
    void=0,
) -> np.ndarray:
    """Nearest-neighbor resampling of a labeled volume between grid frames.

    Each destination cell samples the source cell containing its center point;
    centers outside the source frame become `void`. Identical frames return a
    copy of the input unchanged.
    """
    volume = np.asarray(volume)
    if volume.shape[: len(src_frame.shape)] != src_frame.shape:
        raise GeometryError(
            f"volume shape {volume.shape} does not match source frame {src_frame.shape}"
        )
    if src_frame == dst_frame:
        return volume.copy()
    centers = cell_centers(dst_frame, intrinsics, planes)
    idx, valid = locate_points(centers, src_frame, intrinsics, planes)
    out = volume[idx[..., 0], idx[..., 1], idx[..., 2]]
    out = np.where(
        valid.reshape(valid.shape + (1,) * (out.ndim - valid.ndim)), out, void
    )
    return out
