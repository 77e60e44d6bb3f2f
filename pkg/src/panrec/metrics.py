"""Panoptic reconstruction quality: segment extraction, greedy IoU matching at a
25% threshold, and per-category / aggregated quality scores."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .volume import VOID, PanopticVolume


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    """One evaluated region: a thing instance or all cells of a stuff category."""

    category: int
    instance_id: int      # 0 for stuff segments
    is_thing: bool
    cells: np.ndarray     # sorted flat voxel indices

    @property
    def size(self) -> int:
        return len(self.cells)


@dataclass
class CategoryScore:
    prq: float
    rsq: float
    rrq: float
    tp: int
    fp: int
    fn: int


@dataclass
class PrqReport:
    per_category: dict          # category id -> CategoryScore
    prq: float
    rsq: float
    rrq: float
    prq_things: float
    rsq_things: float
    rrq_things: float
    prq_stuff: float
    rsq_stuff: float
    rrq_stuff: float
    categories: list = field(default_factory=list)

    def as_records(self) -> dict:
        """Flat stable-keyed record for serialization."""
        rec = {
            "prq": self.prq, "rsq": self.rsq, "rrq": self.rrq,
            "prq_th": self.prq_things, "rsq_th": self.rsq_things, "rrq_th": self.rrq_things,
            "prq_st": self.prq_stuff, "rsq_st": self.rsq_stuff, "rrq_st": self.rrq_stuff,
        }
        for k in self.categories:
            s = self.per_category[k]
            rec[f"prq_{k}"] = s.prq
            rec[f"rsq_{k}"] = s.rsq
            rec[f"rrq_{k}"] = s.rrq
        return rec


def extract_segments(volume: PanopticVolume) -> list:
    """One segment per thing (category, instance) pair and one per stuff category."""
    sem = volume.semantics.ravel()
    inst = volume.instances.ravel()
    thing_flags = np.asarray(volume.categories.is_thing)
    key = sem.astype(np.int64) * (int(inst.max(initial=0)) + 1) + inst
    key = np.where(sem == VOID, -1, key)
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    uniq, starts = np.unique(sorted_key, return_index=True)
    segments = []
    for i, k in enumerate(uniq):
        if k < 0:
            continue
        stop = starts[i + 1] if i + 1 < len(uniq) else len(sorted_key)
        cells = np.sort(order[starts[i] : stop])
        first = cells[0]
        cat = int(sem[first])
        segments.append(
            Segment(
                category=cat,
                instance_id=int(inst[first]),
                is_thing=bool(thing_flags[cat]),
                cells=cells,
            )
        )
    return segments


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two voxel index sets."""
    a = np.asarray(a)
    b = np.asarray(b)
    if len(a) == 0 and len(b) == 0:
        raise MetricError("IoU of two empty sets is undefined")
    inter = len(np.intersect1d(a, b, assume_unique=True))
    return inter / (len(a) + len(b) - inter)


def _greedy_match(pairs, pred_ids, gt_ids):
    """Greedy one-to-one matching of (iou, gt, pred) candidates.

    `pairs` is a list of (iou, gt_size, pred_size, gt_id, pred_id); candidates
    already satisfy the IoU threshold. Ordering: IoU desc, then gt size desc,
    pred size desc, gt id, pred id.
    """
    pairs = sorted(pairs, key=lambda p: (-p[0], -p[1], -p[2], p[3], p[4]))
    used_gt, used_pred = set(), set()
    tp = []
    for score, _gs, _ps, gt_id, pred_id in pairs:
        if gt_id in used_gt or pred_id in used_pred:
            continue
        used_gt.add(gt_id)
        used_pred.add(pred_id)
        tp.append((gt_id, pred_id, score))
    fp = [p for p in pred_ids if p not in used_pred]
    fn = [g for g in gt_ids if g not in used_gt]
    return tp, fp, fn


def match_segments(pred_segments, gt_segments, threshold: float = 0.25):
    """Match same-category segments greedily by decreasing IoU.

    Returns (tp, fp, fn): tp as (gt_index, pred_index, iou) triples into the
    input lists, fp/fn as unmatched indices.
    """
    if not (0 < threshold <= 1):
        raise MetricError("IoU threshold must be in (0, 1]")
    pairs = []
    for gi, g in enumerate(gt_segments):
        for pi, p in enumerate(pred_segments):
            if g.category != p.category:
                continue
            score = iou(g.cells, p.cells)
            if score >= threshold:
                pairs.append((score, g.size, p.size, gi, pi))
    return _greedy_match(pairs, range(len(pred_segments)), range(len(gt_segments)))


def _category_score(tp_ious, n_tp, n_fp, n_fn) -> CategoryScore:
    denom = 2 * n_tp + n_fp + n_fn
    rsq = sum(tp_ious) / n_tp if n_tp else 0.0
    rrq = 2 * n_tp / denom if denom else 0.0
    prq_k = 2 * sum(tp_ious) / denom if denom else 0.0
    return CategoryScore(prq=prq_k, rsq=rsq, rrq=rrq, tp=n_tp, fp=n_fp, fn=n_fn)


def prq(pred: PanopticVolume, gt: PanopticVolume, threshold: float = 0.25) -> PrqReport:
    """Per-category and aggregated quality at the given IoU matching threshold.

    Categories absent from both volumes are excluded; aggregates are unweighted
    means over the evaluated categories.
    """
    if pred.frame != gt.frame:
        raise MetricError("prediction and ground truth must share a grid frame")
    if len(pred.categories) != len(gt.categories):
        raise MetricError("category tables differ")
    pred_segments = extract_segments(pred)
    gt_segments = extract_segments(gt)
    thing_flags = np.asarray(gt.categories.is_thing)
    per_category = {}
    cats = sorted(
        {s.category for s in pred_segments} | {s.category for s in gt_segments}
    )
    for k in cats:
        preds = [s for s in pred_segments if s.category == k]
        gts = [s for s in gt_segments if s.category == k]
        tp, fp, fn = match_segments(preds, gts, threshold)
        score = _category_score([t[2] for t in tp], len(tp), len(fp), len(fn))
        # Cross-check the factored form against the direct one.
        assert abs(score.prq - score.rsq * score.rrq) <= 1e-12
        per_category[k] = score
    def mean(ids, attr):
        if not ids:
            return 0.0
        return float(np.mean([getattr(per_category[k], attr) for k in ids]))
    things = [k for k in cats if thing_flags[k]]
    stuff = [k for k in cats if not thing_flags[k]]
    return PrqReport(
        per_category=per_category,
        prq=mean(cats, "prq"), rsq=mean(cats, "rsq"), rrq=mean(cats, "rrq"),
        prq_things=mean(things, "prq"), rsq_things=mean(things, "rsq"),
        rrq_things=mean(things, "rrq"),
        prq_stuff=mean(stuff, "prq"), rsq_stuff=mean(stuff, "rsq"),
        rrq_stuff=mean(stuff, "rrq"),
        categories=cats,
    )
