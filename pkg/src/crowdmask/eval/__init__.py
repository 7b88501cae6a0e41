"""
Metrics: instance matching, IoU and F1 at a threshold, counting MAE/MSE and a density-bucketed
timing harness.
"""
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np
import torch

from ..errors import InputError, PreconditionError
from ..geometry import PointSet
from ..model.meter import AverageMeter

logger = logging.getLogger(__name__)


@dataclass
class MatchResult:
    pairs: List[Tuple[int, int, float]] = field(default_factory=list)
    unmatched_pred: Set[int] = field(default_factory=set)
    unmatched_gt: Set[int] = field(default_factory=set)

    @property
    def n_gt(self) -> int:
        return len(self.pairs) + len(self.unmatched_gt)

    @property
    def n_pred(self) -> int:
        return len(self.pairs) + len(self.unmatched_pred)


@dataclass
class SegmentationScores:
    mean_iou: float
    f1: float
    tp: int
    fp: int
    fn: int


@dataclass
class CountingErrors:
    mae: float
    # root of the mean squared error, as crowd counting reports it
    mse: float


def _check_dims(pred: torch.Tensor, gt: torch.Tensor):
    if tuple(pred.shape) != tuple(gt.shape):
        raise InputError(f"prediction dims {tuple(pred.shape)} differ from ground truth dims {tuple(gt.shape)}")


def iou_table(pred: torch.Tensor, gt: torch.Tensor) -> Tuple[List[int], List[int], np.ndarray]:
    """
    Pairwise IoU of every nonzero pred id against every nonzero gt id, from one joint histogram
    :return: (pred ids, gt ids, (P, G) IoU matrix)
    """
    _check_dims(pred, gt)
    p = pred.reshape(-1).numpy().astype(np.int64)
    g = gt.reshape(-1).numpy().astype(np.int64)
    pred_ids, p_idx = np.unique(p, return_inverse=True)
    gt_ids, g_idx = np.unique(g, return_inverse=True)
    joint = np.bincount(p_idx * len(gt_ids) + g_idx, minlength=len(pred_ids) * len(gt_ids))
    joint = joint.reshape(len(pred_ids), len(gt_ids)).astype(np.float64)
    p_keep, g_keep = pred_ids != 0, gt_ids != 0
    inter = joint[p_keep][:, g_keep]
    union = joint.sum(axis=1)[p_keep][:, None] + joint.sum(axis=0)[g_keep][None, :] - inter
    with np.errstate(invalid='ignore', divide='ignore'):
        iou = np.where(union > 0, inter / union, 0.0)
    return [int(i) for i in pred_ids[p_keep]], [int(i) for i in gt_ids[g_keep]], iou


def match_instances(pred: torch.Tensor, gt: torch.Tensor) -> MatchResult:
    """
    Greedy one-to-one matching on descending IoU; ties go to the smaller gt id, then the smaller pred
    id. Pairs without overlap are never matched.
    """
    pred_ids, gt_ids, iou = iou_table(pred, gt)
    candidates = [(-iou[i, j], gt_ids[j], pred_ids[i], iou[i, j])
                  for i, j in zip(*np.nonzero(iou > 0))]
    candidates.sort(key=lambda c: c[:3])
    used_pred, used_gt, pairs = set(), set(), []
    for _, g, p, value in candidates:
        if p in used_pred or g in used_gt:
            continue
        used_pred.add(p)
        used_gt.add(g)
        pairs.append((p, g, float(value)))
    return MatchResult(pairs, set(pred_ids) - used_pred, set(gt_ids) - used_gt)


def match_by_id(pred: torch.Tensor, gt: torch.Tensor) -> MatchResult:
    """Id-linked mode: prediction k pairs with ground truth k whatever their overlap"""
    pred_ids, gt_ids, iou = iou_table(pred, gt)
    gt_index = {g: j for j, g in enumerate(gt_ids)}
    pairs = [(p, p, float(iou[i, gt_index[p]])) for i, p in enumerate(pred_ids) if p in gt_index]
    shared = {p for p, _, _ in pairs}
    return MatchResult(pairs, set(pred_ids) - shared, set(gt_ids) - shared)


def iou_f1(match: MatchResult, threshold: float = 0.5) -> SegmentationScores:
    """
    TP are pairs at or above `threshold`; a pair below it counts as both FP and FN.
    mean_iou averages pair IoUs over all gt instances, an unmatched gt counting as 0.
    """
    if not 0 < threshold <= 1:
        raise PreconditionError(f"threshold must lie in (0, 1], got {threshold}")
    if match.n_gt == 0:
        raise PreconditionError("no ground truth instances")
    tp = sum(1 for _, _, v in match.pairs if v >= threshold)
    weak = len(match.pairs) - tp
    fp = len(match.unmatched_pred) + weak
    fn = len(match.unmatched_gt) + weak
    f1 = 2 * tp / (2 * tp + fp + fn)
    mean_iou = sum(v for _, _, v in match.pairs) / match.n_gt
    return SegmentationScores(mean_iou, f1, tp, fp, fn)


def counting_errors(pred_counts: Sequence[float], gt_counts: Sequence[float]) -> CountingErrors:
    if len(pred_counts) != len(gt_counts):
        raise InputError(f"{len(pred_counts)} predicted counts against {len(gt_counts)} ground truth counts")
    if len(pred_counts) == 0:
        raise InputError("no counts to compare")
    err = np.asarray(pred_counts, dtype=np.float64) - np.asarray(gt_counts, dtype=np.float64)
    return CountingErrors(float(np.abs(err).mean()), float(np.sqrt((err ** 2).mean())))


def count_instances(source: Union[PointSet, torch.Tensor], threshold: float = 0.5) -> int:
    """
    Instances in one image: points scored at or above `threshold` (unscored points count),
    or the distinct nonzero ids of a label map
    """
    if isinstance(source, PointSet):
        return sum(1 for p in source if p.score is None or p.score >= threshold)
    return sum(1 for v in torch.unique(source).tolist() if v != 0)


def timing_harness(segment_fn: Callable[[object], object], buckets: Mapping[int, Sequence[object]],
                   clock: Callable[[], float] = time.perf_counter) -> List[Dict[str, float]]:
    """
    Wall time of `segment_fn` per scene, aggregated per density bucket. The first scene is run once
    beforehand as warm-up and not timed.
    :param buckets: point count → scenes of that density
    :return: [{bucket, mean_s, max_s}] in ascending bucket order
    """
    for bucket, scenes in buckets.items():
        if len(scenes) == 0:
            raise PreconditionError(f"bucket {bucket} holds no scenes")
    if not buckets:
        return []
    first = buckets[min(buckets)][0]
    segment_fn(first)

    report = []
    for bucket in sorted(buckets):
        meter = AverageMeter(f'{bucket} points', fmt=':.4f')
        for scene in buckets[bucket]:
            start = clock()
            segment_fn(scene)
            meter(clock() - start)
        logger.info("timing %s s", meter)
        report.append({'bucket': bucket, 'mean_s': meter.avg, 'max_s': meter.max})
    return report


def metrics_report(scores: SegmentationScores, counting: Optional[CountingErrors] = None,
                   timing: Optional[List[Dict[str, float]]] = None) -> Dict[str, object]:
    """JSON-ready report {mean_iou, f1, tp, fp, fn, mae, mse, timing}"""
    report = asdict(scores)
    report['mae'] = counting.mae if counting else None
    report['mse'] = counting.mse if counting else None
    report['timing'] = list(timing or [])
    return report


def aggregate_scores(matches: Sequence[MatchResult], threshold: float = 0.5) -> SegmentationScores:
    """Pool several scenes: TP/FP/FN summed, mean IoU over the gt instances of all scenes"""
    pooled = MatchResult()
    for k, m in enumerate(matches):
        pooled.pairs.extend(m.pairs)
        pooled.unmatched_pred.update((k, i) for i in m.unmatched_pred)
        pooled.unmatched_gt.update((k, i) for i in m.unmatched_gt)
    return iou_f1(pooled, threshold)
