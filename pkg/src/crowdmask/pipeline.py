"""
Desk-scale end-to-end run: optimise a free embedding on a synthetic scene, segment it, filter the
pseudo-masks and score the result against the scene's ground truth. Also the density-bucketed
timing of segment() on large synthetic scenes.
"""
import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set

import torch

from .eval import (CountingErrors, MatchResult, SegmentationScores, count_instances, counting_errors, iou_f1,
                   match_instances, metrics_report, timing_harness)
from .field import GaussianKernel
from .geometry import Dims
from .model.callbacks import Callback
from .model.embedding_trainer import OptimizeConfig, optimize_embedding
from .preprocess.scene import SyntheticScene, SyntheticSceneDataset
from .segmenter import EnergyConfig, PseudoMaskFilter, filter_pseudo_masks, segment

logger = logging.getLogger(__name__)

BENCH_DIMS = (768, 1024)
BENCH_CHANNELS = 16
BENCH_BUCKETS = (50, 200, 500, 1000)
BENCH_MIN_SEPARATION = 12.0


@dataclass
class DemoResult:
    field: torch.Tensor
    history: List[float]
    segmentation: torch.Tensor
    valid_ids: Set[int]
    match: MatchResult
    scores: SegmentationScores
    counting: CountingErrors

    def report(self, timing=None) -> Dict[str, object]:
        return metrics_report(self.scores, self.counting, timing)


def run_demo(scene: SyntheticScene, cfg: OptimizeConfig = None, field: Optional[torch.Tensor] = None,
             filt: PseudoMaskFilter = None, nnec_scale: float = 1.0, callback: Callback = None) -> DemoResult:
    """
    optimise → segment → filter pseudo-masks → match → score.
    A given `field` skips the optimisation.
    """
    cfg = cfg or OptimizeConfig()
    history = []
    if field is None:
        field, history = optimize_embedding(scene, cfg, callback)
    seg = segment(field, scene.points, cfg.energy, cfg.disc.kernel, nnec_scale)
    # synthetic points are fully trusted
    scored = scene.points.with_default_score(1.0)
    valid, filtered = filter_pseudo_masks(scored, seg, filt)
    match = match_instances(filtered, scene.labels)
    scores = iou_f1(match)
    counting = counting_errors([count_instances(filtered)], [scene.n_instances])
    logger.info("seed %d: mean IoU %.4f, F1 %.4f over %d instances", scene.seed, scores.mean_iou, scores.f1,
                scene.n_instances)
    return DemoResult(field, history, filtered, valid, match, scores, counting)


def demo_pipeline(scene: SyntheticScene, cfg: OptimizeConfig = None, field: Optional[torch.Tensor] = None,
                  callback: Callback = None) -> Dict[str, object]:
    """Metrics report of `run_demo`"""
    return run_demo(scene, cfg, field, callback=callback).report()


def density_benchmark(energy: EnergyConfig, kernel: GaussianKernel, nnec_scale: float = 1.0, seed: int = 0,
                      scenes_per_bucket: int = 1, dims: Dims = BENCH_DIMS, buckets: Sequence[int] = BENCH_BUCKETS,
                      clock=time.perf_counter) -> List[Dict[str, float]]:
    """
    Wall time of `segment` on one seeded random D=16 field over synthetic scenes of increasing
    point count.
    :return: timing_harness rows {bucket, mean_s, max_s}
    """
    generator = torch.Generator().manual_seed(seed)
    field = torch.randn((BENCH_CHANNELS,) + tuple(dims), generator=generator, dtype=torch.float64)
    scenes = {}
    for n in buckets:
        dataset = SyntheticSceneDataset(scenes_per_bucket, n, dims, BENCH_MIN_SEPARATION, base_seed=seed)
        scenes[n] = [dataset[i] for i in range(len(dataset))]
    return timing_harness(lambda scene: segment(field, scene.points, energy, kernel, nnec_scale), scenes, clock)
