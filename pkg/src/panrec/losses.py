"""Training-objective evaluators (2D and 3D terms) as pure functions, and the
truncated signed distance transform used by the 3D geometry term."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
from scipy import ndimage

EPS = 1e-7


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    """Nonnegative balancing weights; defaults are all 1."""

    panoptic2d: float = 1.0
    depth2d: float = 1.0
    mp_occupancy: float = 1.0
    semantic2d: float = 1.0
    center2d: float = 1.0
    occupancy3d: float = 1.0
    semantic3d: float = 1.0
    offset3d: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise LossError(f"weight {f.name} must be nonnegative")


@dataclass
class LossReport:
    """Named nonnegative terms with their weights and the weighted total."""

    terms: dict
    weights: dict
    total: float

    @classmethod
    def build(cls, terms: dict, weights: dict) -> "LossReport":
        total = sum(weights[name] * value for name, value in terms.items())
        return cls(terms=terms, weights=weights, total=float(total))


def _clamp(p: np.ndarray) -> np.ndarray:
    return np.clip(p, EPS, 1.0 - EPS)


def cross_entropy(pred: np.ndarray, target: np.ndarray, mask=None) -> float:
    """Mean -sum(target * log pred) over the last axis, optionally masked."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise LossError(f"shape mismatch {pred.shape} vs {target.shape}")
    ce = -np.sum(target * np.log(_clamp(pred)), axis=-1)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            return 0.0
        ce = ce[mask]
    return float(ce.mean()) if ce.size else 0.0


def binary_cross_entropy(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise LossError(f"shape mismatch {pred.shape} vs {target.shape}")
    p = _clamp(pred)
    return float(np.mean(-target * np.log(p) - (1.0 - target) * np.log(1.0 - p)))


def loss_panoptic2d(
    sem_pred: np.ndarray,
    sem_gt: np.ndarray,
    heatmap_pred: np.ndarray,
    heatmap_gt: np.ndarray,
    w_semantic: float = 1.0,
    w_center: float = 1.0,
) -> LossReport:
    """Semantic cross entropy (non-void pixels) + center-heatmap MSE (all pixels)."""
    heatmap_pred = np.asarray(heatmap_pred, dtype=np.float64)
    heatmap_gt = np.asarray(heatmap_gt, dtype=np.float64)
    if heatmap_pred.shape != heatmap_gt.shape:
        raise LossError("heatmap shapes differ")
    nonvoid = np.argmax(np.asarray(sem_gt), axis=-1) != 0
    ce = cross_entropy(sem_pred, sem_gt, mask=nonvoid)
    mse = float(np.mean((heatmap_pred - heatmap_gt) ** 2))
    return LossReport.build(
        terms={"semantic_ce": ce, "center_mse": mse},
        weights={"semantic_ce": w_semantic, "center_mse": w_center},
    )


def loss_depth(pred: np.ndarray, gt: np.ndarray, valid_mask: np.ndarray) -> float:
    """Log-L1 depth difference plus L1 of forward-difference gradients.

    One fixed variant of a scale-aware depth objective; swap here if a
    different depth criterion is needed.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    valid = np.asarray(valid_mask, dtype=bool)
    if pred.shape != gt.shape or pred.shape != valid.shape:
        raise LossError("depth map shapes differ")
    if not valid.any():
        return 0.0
    if np.any(pred[valid] <= 0) or np.any(gt[valid] <= 0):
        raise LossError("depth loss requires positive depths on the valid mask")
    log_term = np.abs(np.log(pred[valid]) - np.log(gt[valid])).mean()
    diffs = []
    for axis in (0, 1):
        dp = np.diff(pred, axis=axis)
        dg = np.diff(gt, axis=axis)
        pair = valid & np.roll(valid, -1, axis=axis)
        pair = np.delete(pair, -1, axis=axis)
        if pair.any():
            diffs.append(np.abs(dp[pair] - dg[pair]))
    grad_term = np.concatenate(diffs).mean() if diffs else 0.0
    return float(log_term + grad_term)


def loss_mp_occupancy(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean binary cross entropy between multi-plane occupancies."""
    return binary_cross_entropy(pred, gt)


def tsdf_from_occupancy(occupancy: np.ndarray, truncation: float = 3.0) -> np.ndarray:
    """Truncated signed Euclidean distance (in cells) to the occupancy boundary.

    Negative inside occupied cells, positive outside, clamped to [-t, t].
    """
    if truncation < 1:
        raise LossError("truncation must be >= 1")
    occ = np.asarray(occupancy, dtype=bool)
    if not occ.any():
        return np.full(occ.shape, truncation, dtype=np.float64)
    if occ.all():
        return np.full(occ.shape, -truncation, dtype=np.float64)
    outside = ndimage.distance_transform_edt(~occ)
    inside = ndimage.distance_transform_edt(occ)
    tsdf = np.where(occ, -inside, outside)
    return np.clip(tsdf, -truncation, truncation)


def tsdf_from_scene(scene, truncation: float = 3.0) -> np.ndarray:
    """TSDF of a ground-truth scene's occupancy grid."""
    return tsdf_from_occupancy(scene.volume.occupancy, truncation)


def loss_3d(
    sem_pred: np.ndarray,
    offsets_pred: np.ndarray,
    occ_pred: np.ndarray,
    tsdf_pred: np.ndarray,
    sem_gt: np.ndarray,
    offsets_gt: np.ndarray,
    occ_gt: np.ndarray,
    tsdf_gt: np.ndarray,
    thing_mask: np.ndarray,
    weights: LossWeights = LossWeights(),
    truncation: float = 3.0,
) -> LossReport:
    """3D objective: occupancy BCE + near-surface TSDF L1, semantic CE over
    occupied cells, and offset L1 over occupied thing cells.

    `sem_gt` is one-hot over cells; `thing_mask` marks occupied thing cells.
    """
    occ_gt = np.asarray(occ_gt, dtype=np.float64)
    occ_bce = binary_cross_entropy(occ_pred, occ_gt)
    band = np.abs(np.asarray(tsdf_gt)) < truncation
    tsdf_pred = np.asarray(tsdf_pred, dtype=np.float64)
    if tsdf_pred.shape != np.asarray(tsdf_gt).shape:
        raise LossError("tsdf shapes differ")
    tsdf_l1 = float(np.abs(tsdf_pred - tsdf_gt)[band].mean()) if band.any() else 0.0
    occupied = occ_gt > 0.5
    sem_ce = cross_entropy(sem_pred, sem_gt, mask=occupied)
    thing = np.asarray(thing_mask, dtype=bool)
    if thing.any():
        diff = np.abs(np.asarray(offsets_pred) - np.asarray(offsets_gt))
        offset_l1 = float(diff[thing].sum() / thing.sum())
    else:
        offset_l1 = 0.0
    return LossReport.build(
        terms={
            "occupancy_bce": occ_bce,
            "tsdf_l1": tsdf_l1,
            "semantic_ce": sem_ce,
            "offset_l1": offset_l1,
        },
        weights={
            "occupancy_bce": weights.occupancy3d,
            "tsdf_l1": weights.occupancy3d,
            "semantic_ce": weights.semantic3d,
            "offset_l1": weights.offset3d,
        },
    )
