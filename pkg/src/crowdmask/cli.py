"""
Command-line front end.

    crowdmask segment --fmap F.xtf --points P.json --out L.xtf [--png L.png]
    crowdmask losses  --fmap F.xtf --points P.json --labels L.xtf [--pred f.xtf] [--gradcheck]
    crowdmask edpsam  --image I.xtf --points P.json --out A.xtf [--candidates C.xtf] [--slic-only]
    crowdmask eval    --pred S1.xtf [S2.xtf ...] --gt G1.xtf [G2.xtf ...] [--id-linked]
    crowdmask demo    [--seed N] [--bench] [--out-dir DIR]

Every subcommand takes `--config run.json`. Exit codes: 0 success, 2 input or shape error,
3 precondition error, 4 numerical divergence.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import torch
import torch.nn.functional as F

from . import __version__
from .config import RunConfig, load_config
from .errors import CrowdMaskError, InputError
from .eval import aggregate_scores, count_instances, counting_errors, match_by_id, match_instances, metrics_report
from .geometry import PointSet, nnec_radii
from .io import (read_feature_map, read_image, read_label_map, read_points, read_scalar_field, write_label_map)
from .model import set_reproducible
from .model.callbacks import ProgressCallback
from .model.losses import (background_penalty, discriminative_loss, finite_diff_gradient, foreground_constraint,
                           max_relative_error)
from .pipeline import density_benchmark, run_demo
from .preprocess import LabelMapCandidateProvider, annotate_with_provider, build_annotation, slic_superpixels, synth_scene
from .segmenter import filter_pseudo_masks, segment
from .view import save_label_png, save_scene_pngs

logger = logging.getLogger('crowdmask')


def _emit(report, out: Optional[str]):
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if out:
        Path(out).write_text(text + '\n')


def _on_feature_grid(points: PointSet, dims, stride: int) -> PointSet:
    """Image-space points in the coordinates of a field `stride` times coarser"""
    scaled = points if stride == 1 else points.scaled(1.0 / stride)
    scaled.check_bounds(dims)
    return scaled


def _labels_on_grid(labels: torch.Tensor, dims, stride: int) -> torch.Tensor:
    sampled = labels[::stride, ::stride] if stride > 1 else labels
    if tuple(sampled.shape) != tuple(dims):
        raise InputError(f"label map {tuple(labels.shape)} does not match field dims {tuple(dims)} at stride {stride}")
    return sampled


def _upscale(pred: torch.Tensor, dims) -> torch.Tensor:
    if tuple(pred.shape) == tuple(dims):
        return pred
    if pred.shape[0] > dims[0] or pred.shape[1] > dims[1]:
        raise InputError(f"prediction {tuple(pred.shape)} is larger than the label map {tuple(dims)}")
    return F.interpolate(pred[None, None], size=tuple(dims), mode='bilinear', align_corners=True)[0, 0]


def cmd_segment(args, cfg: RunConfig):
    fmap = read_feature_map(args.fmap)
    dims = tuple(fmap.shape[-2:])
    points = _on_feature_grid(read_points(args.points), dims, cfg.stride)
    labels = segment(fmap, points, cfg.energy, cfg.gaussian_kernel, cfg.nnec_scale)
    write_label_map(args.out, labels)
    if args.png:
        save_label_png(args.png, labels)
    logger.info("segmented %d points into %s", len(points), args.out)


def cmd_losses(args, cfg: RunConfig):
    fmap = read_feature_map(args.fmap)
    dims = tuple(fmap.shape[-2:])
    image_points = read_points(args.points)
    points = _on_feature_grid(image_points, dims, cfg.stride)
    full_labels = read_label_map(args.labels)
    grid_labels = _labels_on_grid(full_labels, dims, cfg.stride)
    if args.pred:
        pred = _upscale(read_scalar_field(args.pred), full_labels.shape)
    else:
        pred = torch.zeros(tuple(full_labels.shape), dtype=torch.float64)

    radii = nnec_radii(points, dims, cfg.nnec_scale)
    if args.valid_ids is not None:
        valid, mask_labels = set(args.valid_ids), full_labels
    else:
        # annotations without a score are trusted
        valid, mask_labels = filter_pseudo_masks(image_points.with_default_score(1.0), full_labels, cfg.pseudo_mask)

    def disc(x):
        return discriminative_loss(x, points, grid_labels, radii, cfg.discriminative, with_grad=False).value

    def background(x):
        return background_penalty(x, mask_labels).value

    def foreground(x):
        return foreground_constraint(x, mask_labels, valid, cfg.foreground).value

    results = {
        'discriminative': discriminative_loss(fmap, points, grid_labels, radii, cfg.discriminative),
        'background': background_penalty(pred, mask_labels),
        'foreground': foreground_constraint(pred, mask_labels, valid, cfg.foreground),
    }
    report = {name: r.value for name, r in results.items()}
    if args.gradcheck:
        oracles = {'discriminative': (disc, fmap), 'background': (background, pred), 'foreground': (foreground, pred)}
        report['gradcheck'] = {}
        for name, (fn, x) in oracles.items():
            numeric = finite_diff_gradient(fn, x, args.fd_step)
            report['gradcheck'][name] = max_relative_error(results[name].gradient, numeric)
    _emit(report, args.out)


def cmd_edpsam(args, cfg: RunConfig):
    image = read_image(args.image)
    dims = image.shape[:2]
    if args.slic_only:
        superpixels = slic_superpixels(image, cfg.slic.n_segments, cfg.slic.compactness, cfg.slic.iters)
        write_label_map(args.out, superpixels)
        logger.info("%d superpixels written to %s", int(superpixels.max()), args.out)
        return
    if not args.points:
        raise InputError("--points is required unless --slic-only is given")
    points = read_points(args.points)
    if args.candidates:
        provider = LabelMapCandidateProvider(read_label_map(args.candidates))
        annotation = annotate_with_provider(image, points, provider, cfg.slic, cfg.nnec_scale)
    else:
        annotation = build_annotation(points, {}, dims, cfg.nnec_scale)
    write_label_map(args.out, annotation)
    if args.png:
        save_label_png(args.png, annotation)


def cmd_eval(args, cfg: RunConfig):
    if len(args.pred) != len(args.gt):
        raise InputError(f"{len(args.pred)} prediction files against {len(args.gt)} ground truth files")
    match_fn = match_by_id if args.id_linked else match_instances
    matches, pred_counts, gt_counts = [], [], []
    for pred_path, gt_path in zip(args.pred, args.gt):
        pred, gt = read_label_map(pred_path), read_label_map(gt_path)
        matches.append(match_fn(pred, gt))
        pred_counts.append(count_instances(pred))
        gt_counts.append(count_instances(gt))
    scores = aggregate_scores(matches, args.threshold)
    _emit(metrics_report(scores, counting_errors(pred_counts, gt_counts)), args.out)


def cmd_demo(args, cfg: RunConfig):
    set_reproducible(args.seed)
    scene = synth_scene(args.instances, tuple(args.size), args.min_separation, args.seed)
    callback = ProgressCallback(f"seed {args.seed}") if args.progress else None
    result = run_demo(scene, cfg.optimizer, filt=cfg.pseudo_mask, nnec_scale=cfg.nnec_scale, callback=callback)
    timing = density_benchmark(cfg.energy, cfg.gaussian_kernel, cfg.nnec_scale, args.seed) if args.bench else None
    report = result.report(timing)
    report['seed'] = args.seed
    if result.history:
        report['initial_loss'] = result.history[0]
        report['final_loss'] = result.history[-1]
    if args.out_dir:
        save_scene_pngs(args.out_dir, f'seed{args.seed}', result.field, result.segmentation, scene.labels)
    _emit(report, args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='crowdmask', description="Point-supervised crowd instance masks")
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('-v', '--verbose', action='count', default=0, help="-v info, -vv debug")
    parser.add_argument('--config', default=None, help="JSON run configuration")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('segment', help="segment an embedding field from points")
    p.add_argument('--fmap', required=True, help="(D, H, W) float32 tensor file")
    p.add_argument('--points', required=True, help="points JSON")
    p.add_argument('--out', required=True, help="output label map tensor file")
    p.add_argument('--png', default=None, help="optional colour render of the label map")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser('losses', help="evaluate the mask losses")
    p.add_argument('--fmap', required=True)
    p.add_argument('--points', required=True)
    p.add_argument('--labels', required=True, help="instance label map at image resolution")
    p.add_argument('--pred', default=None, help="(H, W) float32 prediction field; all-zero when absent")
    p.add_argument('--valid-ids', type=int, nargs='*', default=None,
                   help="ids supervising the foreground loss; default from the pseudo-mask filter")
    p.add_argument('--gradcheck', action='store_true', help="report finite-difference relative errors")
    p.add_argument('--fd-step', type=float, default=1e-5)
    p.add_argument('--out', default=None, help="also write the JSON here")
    p.set_defaults(func=cmd_losses)

    p = sub.add_parser('edpsam', help="build exclusion-constrained annotation masks")
    p.add_argument('--image', required=True, help="(H, W, 3) float32 RGB tensor file in [0, 1]")
    p.add_argument('--points', default=None)
    p.add_argument('--candidates', default=None, help="candidate label map; absent means disk fallback for all")
    p.add_argument('--out', required=True)
    p.add_argument('--slic-only', action='store_true', help="write the superpixel map instead")
    p.add_argument('--png', default=None)
    p.set_defaults(func=cmd_edpsam)

    p = sub.add_parser('eval', help="score predicted label maps against ground truth")
    p.add_argument('--pred', required=True, nargs='+')
    p.add_argument('--gt', required=True, nargs='+')
    p.add_argument('--id-linked', action='store_true', help="pair instances by id instead of greedy IoU matching")
    p.add_argument('--threshold', type=float, default=0.5)
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('demo', help="synthetic end-to-end run")
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--instances', type=int, default=5)
    p.add_argument('--size', type=int, nargs=2, default=(64, 64), metavar=('H', 'W'))
    p.add_argument('--min-separation', type=float, default=16.0)
    p.add_argument('--bench', action='store_true', help="time segment() on 1024x768 scenes of 50 to 1000 points")
    p.add_argument('--out-dir', default=None, help="write PNG renders here")
    p.add_argument('--progress', action='store_true')
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
    except CrowdMaskError as e:
        logger.error("%s: %s", args.command, e)
        return e.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
