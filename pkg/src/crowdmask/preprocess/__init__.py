from .edpsam import (CandidateMaskSet, CandidateProvider, LabelMapCandidateProvider, SlicConfig,
                     SyntheticCandidateProvider, annotate_with_provider, build_annotation, edp_sam_mask,
                     select_candidate, slic_superpixels)
from .scene import SyntheticScene, SyntheticSceneDataset, ideal_field, synth_scene


def explain_scene(scene: SyntheticScene) -> str:
    areas = [int((scene.labels == p.id).sum()) for p in scene.points]
    s = f'Scene {scene.dims[0]}x{scene.dims[1]} (seed {scene.seed})\n'
    s += f'Found total {scene.n_instances} instances\n'
    s += f'Mask area min/mean/max: {min(areas)}/{sum(areas) / len(areas):.1f}/{max(areas)}\n'
    return s
