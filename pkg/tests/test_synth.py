import numpy as np
import pytest

from panrec.priors import derive_priors
from panrec.synth import (
    NoiseSpec,
    SynthConfig,
    SynthError,
    generate_scene,
    perturb_priors,
)
from conftest import seeded_scenes


def test_config_validation():
    with pytest.raises(SynthError):
        SynthConfig(n_stuff=3)
    with pytest.raises(SynthError):
        SynthConfig(n_thing_categories=0)
    with pytest.raises(SynthError):
        NoiseSpec(depth_sigma=-1.0)
    with pytest.raises(SynthError):
        NoiseSpec(semantic_flip=1.5)


def test_empty_scene():
    scene = generate_scene(SynthConfig(seed=0, width=16, height=16, planes=16,
                                       n_things=0, n_stuff=0))
    assert np.all(scene.volume.semantics == 0)
    assert np.all(scene.volume.instances == 0)


def test_same_seed_bit_identical():
    cfg = SynthConfig(seed=42, width=32, height=32, planes=32, n_things=3,
                      min_center_separation=8.0)
    a = generate_scene(cfg)
    b = generate_scene(cfg)
    assert np.array_equal(a.volume.semantics, b.volume.semantics)
    assert np.array_equal(a.volume.instances, b.volume.instances)


def test_different_seeds_differ():
    scenes = seeded_scenes(2)
    assert not np.array_equal(scenes[0].volume.semantics, scenes[1].volume.semantics)


def test_structural_invariants():
    for scene in seeded_scenes(10):
        vol = scene.volume
        vol.validate()
        inst_ids = set(np.unique(vol.instances)) - {0}
        assert inst_ids == {1, 2, 3}
        # things get thing categories, stuff cells carry no instance id
        thing = vol.thing_mask()
        assert np.all((vol.instances > 0) == thing)
        stuff_cells = (vol.semantics > 0) & ~thing
        assert set(np.unique(vol.semantics[stuff_cells])) <= {1, 2}


def test_footprints_disjoint_without_occlusion():
    for scene in seeded_scenes(10):
        inst = scene.volume.instances
        h, w = scene.frame.height, scene.frame.width
        for v in range(h):
            for u in range(w):
                ids = set(inst[v, u, :][inst[v, u, :] > 0])
                assert len(ids) <= 1


def test_rays_single_category():
    for scene in seeded_scenes(10):
        sem = scene.volume.semantics
        h, w = scene.frame.height, scene.frame.width
        flat = sem.reshape(h * w, -1)
        for ray in flat:
            cats = set(ray[ray > 0])
            assert len(cats) <= 1


def test_center_separation():
    cfg = dict(min_center_separation=9.0)
    for scene in seeded_scenes(5, **cfg):
        inst = scene.volume.instances
        centers = []
        for i in sorted(set(np.unique(inst)) - {0}):
            vs, us, _ = np.nonzero(inst == i)
            centers.append((us.mean(), vs.mean()))
        for i in range(len(centers)):
            for j in range(i + 1, len(centers)):
                d = np.hypot(centers[i][0] - centers[j][0],
                             centers[i][1] - centers[j][1])
                assert d >= 9.0


def test_placement_failure_raises():
    cfg = SynthConfig(seed=0, width=16, height=16, planes=16, n_things=10,
                      min_center_separation=50.0, max_attempts=20)
    with pytest.raises(SynthError):
        generate_scene(cfg)


def test_perturb_zero_noise_identity(small_priors, small_scene):
    out = perturb_priors(small_priors, NoiseSpec(), seed=0,
                         planes=small_scene.planes)
    assert np.array_equal(out.depth, small_priors.depth)
    assert np.array_equal(out.semantics, small_priors.semantics)
    assert np.array_equal(out.mp_occupancy, small_priors.mp_occupancy)
    assert np.array_equal(out.heatmap, small_priors.heatmap)
    assert out.centers == small_priors.centers
    assert out.depth is not small_priors.depth


def test_perturb_same_seed_reproducible(small_priors, small_scene):
    noise = NoiseSpec(depth_sigma=0.1, semantic_flip=0.2, occupancy_flip=0.05,
                      center_jitter=2)
    a = perturb_priors(small_priors, noise, seed=3, planes=small_scene.planes)
    b = perturb_priors(small_priors, noise, seed=3, planes=small_scene.planes)
    assert np.array_equal(a.depth, b.depth)
    assert np.array_equal(a.semantics, b.semantics)
    assert np.array_equal(a.mp_occupancy, b.mp_occupancy)
    assert a.centers == b.centers


def test_depth_noise_folded_normal_mean():
    # over many surface pixels, mean |perturbation| approaches sigma*sqrt(2/pi)
    sigma = 0.05
    total_abs = 0.0
    count = 0
    for seed in range(40):
        scene = generate_scene(SynthConfig(seed=seed, width=64, height=64,
                                           planes=64, n_things=4))
        priors = derive_priors(scene)
        noisy = perturb_priors(priors, NoiseSpec(depth_sigma=sigma), seed=seed,
                               planes=scene.planes)
        surface = priors.depth > 0
        diff = np.abs(noisy.depth - priors.depth)[surface]
        total_abs += diff.sum()
        count += diff.size
    assert count > 1e5
    expected = sigma * np.sqrt(2.0 / np.pi)
    assert total_abs / count == pytest.approx(expected, rel=0.05)


def test_depth_noise_stays_in_plane_range(small_priors, small_scene):
    noisy = perturb_priors(small_priors, NoiseSpec(depth_sigma=5.0), seed=1,
                           planes=small_scene.planes)
    surface = small_priors.depth > 0
    assert np.all(noisy.depth[surface] >= small_scene.planes.z_near)
    assert np.all(noisy.depth[surface] < small_scene.planes.z_far)
    assert np.all(noisy.depth[~surface] == 0)


def test_occupancy_flip_prob_one_is_complement(small_priors, small_scene):
    noisy = perturb_priors(small_priors, NoiseSpec(occupancy_flip=1.0), seed=1,
                           planes=small_scene.planes)
    assert np.array_equal(noisy.mp_occupancy, 1.0 - small_priors.mp_occupancy)


def test_semantic_flip_prob_one_stays_one_hot(small_priors, small_scene):
    noisy = perturb_priors(small_priors, NoiseSpec(semantic_flip=1.0), seed=1,
                           planes=small_scene.planes)
    assert np.all(noisy.semantics.sum(axis=-1) == 1.0)
    assert set(np.unique(noisy.semantics)) <= {0.0, 1.0}


def test_center_jitter_bounds_and_heatmap(small_priors, small_scene):
    noisy = perturb_priors(small_priors, NoiseSpec(center_jitter=2), seed=1,
                           planes=small_scene.planes)
    assert len(noisy.centers) == len(small_priors.centers)
    for a, b in zip(small_priors.centers, noisy.centers):
        assert abs(a.u - b.u) <= 2 and abs(a.v - b.v) <= 2
        assert (a.category, a.instance_id) == (b.category, b.instance_id)
    # heatmap re-encoded from the jittered centers peaks at each new center
    for c in noisy.centers:
        assert noisy.heatmap[c.v, c.u] == 1.0
