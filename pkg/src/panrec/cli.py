"""Command-line surface: scene synthesis, prior derivation, lifting, grouping,
evaluation, loss reports, benchmarks, and an end-to-end demo."""
from __future__ import annotations

import statistics
import sys
import tempfile
import time
from pathlib import Path

import click
import numpy as np

from . import containers as C
from .geometry import AxisGrid, FrustumGrid, resample_volume
from .lifting import (
    CategorySortedAssignment,
    FeatureVolume,
    RandomAssignment,
    lift_instances_topdown,
    occupancy_aware_lift,
)
from .losses import (
    LossWeights,
    loss_3d,
    loss_depth,
    loss_mp_occupancy,
    loss_panoptic2d,
    tsdf_from_occupancy,
)
from .mesh import export_obj
from .metrics import prq
from .pipeline import reconstruct_from_priors
from .priors import Priors2D, SceneGT, derive_instance_map2d, derive_priors
from .reconstruction import group_instances, identity_refine, mask_by_occupancy, reconstruct
from .synth import NoiseSpec, SynthConfig, generate_scene, perturb_priors
from .volume import PanopticVolume


@click.group()
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker threads; results are identical for any value.")
@click.pass_context
def main(ctx, threads):
    """Deterministic bottom-up panoptic 3D reconstruction toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["threads"] = threads


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _load_scene(scene_dir: Path) -> SceneGT:
    manifest = C.read_manifest(scene_dir / "manifest.json")
    categories = C.manifest_categories(manifest)
    volume = C.read_panoptic(scene_dir / manifest["files"]["panoptic"], categories)
    return SceneGT(
        volume=volume,
        intrinsics=C.manifest_intrinsics(manifest),
        planes=C.manifest_planes(manifest),
    )


def _write_scene(scene: SceneGT, out_dir: Path, generator=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    C.write_panoptic(out_dir / "panoptic.bin", scene.volume, scene.intrinsics, scene.planes)
    manifest = C.manifest_dict(
        scene.intrinsics, scene.planes, scene.categories, [],
        files={"panoptic": "panoptic.bin"}, generator=generator,
    )
    C.write_manifest(out_dir / "manifest.json", manifest)


def _write_priors(priors: Priors2D, scene: SceneGT, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    frame = scene.frame
    k, planes = scene.intrinsics, scene.planes
    num_c = priors.semantics.shape[-1]
    C.write_container(out_dir / "semantics2d.bin", "semantic-volume",
                      priors.semantics, frame, k, planes, channels=num_c)
    C.write_container(out_dir / "depth.bin", "depth", priors.depth, frame, k, planes)
    C.write_container(out_dir / "heatmap.bin", "heatmap", priors.heatmap, frame, k, planes)
    C.write_container(out_dir / "mp_occupancy.bin", "multiplane",
                      priors.mp_occupancy, frame, k, planes)
    C.write_container(out_dir / "offsets3d.bin", "offsets",
                      priors.offsets3d, frame, k, planes, channels=2)
    inst2d, inst_cats = derive_instance_map2d(scene)
    cat_map = np.zeros_like(inst2d)
    for i, cat in inst_cats.items():
        cat_map[inst2d == i] = cat
    C.write_container(out_dir / "instances2d.bin", "panoptic-volume",
                      np.stack([cat_map, inst2d], axis=-1).astype(np.int32),
                      frame, k, planes, channels=2)
    manifest = C.manifest_dict(
        k, planes, scene.categories, priors.centers,
        files={
            "semantics2d": "semantics2d.bin", "depth": "depth.bin",
            "heatmap": "heatmap.bin", "mp_occupancy": "mp_occupancy.bin",
            "offsets3d": "offsets3d.bin", "instances2d": "instances2d.bin",
        },
    )
    C.write_manifest(out_dir / "manifest.json", manifest)


def _load_priors(priors_dir: Path):
    manifest = C.read_manifest(priors_dir / "manifest.json")
    files = manifest["files"]
    read = lambda name: C.read_container(priors_dir / files[name])
    priors = Priors2D(
        semantics=read("semantics2d").array,
        depth=read("depth").array,
        centers=C.manifest_centers(manifest),
        heatmap=read("heatmap").array,
        mp_occupancy=read("mp_occupancy").array,
        offsets3d=read("offsets3d").array,
    )
    meta = read("depth")
    return priors, manifest, meta.frame, meta.intrinsics, meta.planes


def _noise_from_flags(depth_sigma, semantic_flip, occupancy_flip, center_jitter):
    return NoiseSpec(
        depth_sigma=depth_sigma, semantic_flip=semantic_flip,
        occupancy_flip=occupancy_flip, center_jitter=center_jitter,
    )


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--width", type=int, default=64, show_default=True)
@click.option("--height", type=int, default=64, show_default=True)
@click.option("--planes", type=int, default=64, show_default=True)
@click.option("--things", type=int, default=4, show_default=True)
@click.option("--stuff", type=int, default=2, show_default=True)
@click.option("--min-separation", type=float, default=10.0, show_default=True)
@click.option("--occlusion/--no-occlusion", default=False, show_default=True)
def synth(seed, out_dir, width, height, planes, things, stuff, min_separation, occlusion):
    """Generate a seeded ground-truth scene into OUT."""
    cfg = SynthConfig(
        seed=seed, width=width, height=height, planes=planes,
        n_things=things, n_stuff=stuff, min_center_separation=min_separation,
        occlusion_allowed=occlusion,
    )
    scene = generate_scene(cfg)
    _write_scene(scene, out_dir, generator={"seed": seed, "width": width,
                                            "height": height, "planes": planes,
                                            "things": things, "stuff": stuff})
    click.echo(f"wrote scene to {out_dir}")


@main.command("derive-priors")
@click.argument("scene_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--sigma", type=float, default=8.0, show_default=True,
              help="Center heatmap Gaussian width (pixels).")
@click.option("--noise-seed", type=int, default=0, show_default=True)
@click.option("--depth-sigma", type=float, default=0.0, show_default=True)
@click.option("--semantic-flip", type=float, default=0.0, show_default=True)
@click.option("--occupancy-flip", type=float, default=0.0, show_default=True)
@click.option("--center-jitter", type=int, default=0, show_default=True)
def derive_priors_cmd(scene_dir, out_dir, sigma, noise_seed, depth_sigma,
                      semantic_flip, occupancy_flip, center_jitter):
    """Derive GT priors (optionally perturbed) from a scene directory."""
    scene = _load_scene(scene_dir)
    priors = derive_priors(scene, sigma=sigma)
    noise = _noise_from_flags(depth_sigma, semantic_flip, occupancy_flip, center_jitter)
    if noise != NoiseSpec():
        priors = perturb_priors(priors, noise, noise_seed, scene.planes, heatmap_sigma=sigma)
    _write_priors(priors, scene, out_dir)
    click.echo(f"wrote priors to {out_dir}")


@main.command()
@click.argument("priors_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--mode", type=click.Choice(["bottom-up", "top-down"]),
              default="bottom-up", show_default=True)
@click.option("--assignment", default="category", show_default=True,
              help="Top-down channel assignment: 'category' or 'random:SEED'.")
@click.option("--n-channels", type=int, default=16, show_default=True)
def lift(priors_dir, out_path, mode, assignment, n_channels):
    """Lift a prior bundle to a 3D feature volume container."""
    priors, manifest, frame, intr, planes = _load_priors(priors_dir)
    if mode == "bottom-up":
        fv = occupancy_aware_lift(priors.semantics, priors.mp_occupancy,
                                  priors.depth, frame, intr, planes)
    else:
        inst = C.read_container(priors_dir / manifest["files"]["instances2d"]).array
        inst_map = inst[..., 1]
        inst_cats = {int(i): int(inst[..., 0][inst_map == i].flat[0])
                     for i in np.unique(inst_map[inst_map > 0])}
        if assignment == "category":
            strategy = CategorySortedAssignment()
        elif assignment.startswith("random:"):
            strategy = RandomAssignment(seed=int(assignment.split(":", 1)[1]))
        else:
            raise click.ClickException(f"unknown assignment {assignment!r}")
        fv = lift_instances_topdown(inst_map, inst_cats, priors.depth, frame,
                                    intr, planes, strategy, n_channels)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    C.write_container(out_path, "feature-volume", fv.features, frame, intr,
                      planes, channels=fv.features.shape[-1])
    occ_path = out_path.with_name(out_path.stem + "_occupancy.bin")
    C.write_container(occ_path, "multiplane", fv.occupancy, frame, intr, planes)
    click.echo(f"wrote {out_path} and {occ_path}")


@main.command()
@click.argument("features_path", type=click.Path(exists=True, path_type=Path))
@click.argument("priors_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--occ-threshold", type=float, default=0.5, show_default=True)
@click.option("--mesh", "mesh_path", type=click.Path(path_type=Path), default=None)
def group(features_path, priors_dir, out_path, occ_threshold, mesh_path):
    """Group a lifted/refined volume into a panoptic volume container."""
    features = C.read_container(features_path)
    occ = C.read_container(
        features_path.with_name(features_path.stem + "_occupancy.bin")
    )
    priors, manifest, frame, intr, planes = _load_priors(priors_dir)
    if features.frame != frame:
        _fail("feature volume and priors are in different grid frames")
    categories = C.manifest_categories(manifest)
    lifted = FeatureVolume(frame=features.frame, features=features.array,
                           occupancy=occ.array)
    refined = identity_refine(lifted, priors.offsets3d, occ.array)
    volume = reconstruct(refined, priors.centers, intr, planes, categories, occ_threshold)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    C.write_panoptic(out_path, volume, intr, planes)
    if mesh_path is not None:
        export_obj(volume, mesh_path)
    click.echo(f"wrote {out_path}")


def _format_report(report):
    lines = []
    header = f"{'category':>10} {'PRQ':>8} {'RSQ':>8} {'RRQ':>8} {'TP':>4} {'FP':>4} {'FN':>4}"
    lines.append(header)
    for k in report.categories:
        s = report.per_category[k]
        lines.append(f"{k:>10} {100*s.prq:8.2f} {100*s.rsq:8.2f} {100*s.rrq:8.2f} "
                     f"{s.tp:>4} {s.fp:>4} {s.fn:>4}")
    lines.append(f"{'all':>10} {100*report.prq:8.2f} {100*report.rsq:8.2f} {100*report.rrq:8.2f}")
    lines.append(f"{'things':>10} {100*report.prq_things:8.2f} {100*report.rsq_things:8.2f} "
                 f"{100*report.rrq_things:8.2f}")
    lines.append(f"{'stuff':>10} {100*report.prq_stuff:8.2f} {100*report.rsq_stuff:8.2f} "
                 f"{100*report.rrq_stuff:8.2f}")
    return "\n".join(lines)


@main.command("eval")
@click.argument("pred_path", type=click.Path(exists=True, path_type=Path))
@click.argument("gt_path", type=click.Path(exists=True, path_type=Path))
@click.option("--iou-threshold", type=float, default=0.25, show_default=True)
@click.option("--record", "record_path", type=click.Path(path_type=Path), default=None)
@click.option("--categories-from", type=click.Path(exists=True, path_type=Path),
              required=True, help="Manifest supplying the category table.")
def eval_cmd(pred_path, gt_path, iou_threshold, record_path, categories_from):
    """Panoptic reconstruction quality of PRED against GT."""
    manifest = C.read_manifest(categories_from)
    categories = C.manifest_categories(manifest)
    pred = C.read_panoptic(pred_path, categories)
    gt = C.read_panoptic(gt_path, categories)
    report = prq(pred, gt, iou_threshold)
    click.echo(_format_report(report))
    if record_path is not None:
        lines = [f"{k} {v:.6f}" for k, v in report.as_records().items()]
        Path(record_path).write_text("\n".join(lines) + "\n")


@main.command()
@click.argument("scene_dir", type=click.Path(exists=True, path_type=Path))
@click.argument("priors_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--record", "record_path", type=click.Path(path_type=Path), default=None)
@click.option("--w-semantic2d", type=float, default=1.0, show_default=True)
@click.option("--w-center2d", type=float, default=1.0, show_default=True)
@click.option("--w-occupancy3d", type=float, default=1.0, show_default=True)
@click.option("--w-semantic3d", type=float, default=1.0, show_default=True)
@click.option("--w-offset3d", type=float, default=1.0, show_default=True)
def loss(scene_dir, priors_dir, record_path, w_semantic2d, w_center2d,
         w_occupancy3d, w_semantic3d, w_offset3d):
    """Loss report of a (possibly perturbed) prior bundle against scene GT."""
    scene = _load_scene(scene_dir)
    gt_priors = derive_priors(scene)
    pred, _manifest, frame, intr, planes = _load_priors(priors_dir)
    weights = LossWeights(occupancy3d=w_occupancy3d, semantic3d=w_semantic3d,
                          offset3d=w_offset3d)
    report2d = loss_panoptic2d(pred.semantics, gt_priors.semantics,
                               pred.heatmap, gt_priors.heatmap,
                               w_semantic2d, w_center2d)
    valid = (pred.depth > 0) & (gt_priors.depth > 0)
    depth_term = loss_depth(pred.depth, gt_priors.depth, valid)
    mp_term = loss_mp_occupancy(pred.mp_occupancy, gt_priors.mp_occupancy)
    lifted = occupancy_aware_lift(pred.semantics, pred.mp_occupancy, pred.depth,
                                  frame, intr, planes)
    occ_gt = scene.volume.occupancy.astype(np.float64)
    num_c = scene.categories.num_categories
    sem_gt = np.eye(num_c)[scene.volume.semantics]
    report3d = loss_3d(
        sem_pred=lifted.features, offsets_pred=pred.offsets3d,
        occ_pred=lifted.occupancy,
        tsdf_pred=tsdf_from_occupancy(lifted.occupancy >= 0.5),
        sem_gt=sem_gt, offsets_gt=gt_priors.offsets3d, occ_gt=occ_gt,
        tsdf_gt=tsdf_from_occupancy(occ_gt > 0.5),
        thing_mask=scene.volume.thing_mask() & (occ_gt > 0.5),
        weights=weights,
    )
    records = {}
    for prefix, rep in (("p2d", report2d), ("l3d", report3d)):
        for name, value in rep.terms.items():
            records[f"{prefix}_{name}"] = value
        records[f"{prefix}_total"] = rep.total
    records["depth"] = depth_term
    records["mp_occupancy"] = mp_term
    for name, value in records.items():
        click.echo(f"{name} {value:.6f}")
    if record_path is not None:
        Path(record_path).write_text(
            "".join(f"{k} {v:.9f}\n" for k, v in records.items())
        )


@main.command()
@click.option("--sizes", default="32,64", show_default=True)
@click.option("--reps", type=int, default=3, show_default=True)
def bench(sizes, reps):
    """Median wall time of the main kernels at the given cube sizes."""
    from .metrics import prq as run_prq

    click.echo(f"{'op':>24} {'size':>6} {'median_s':>10}")
    for size in (int(s) for s in sizes.split(",")):
        cfg = SynthConfig(seed=1, width=size, height=size, planes=size,
                          n_things=min(4, max(1, size // 16)))
        scene = generate_scene(cfg)
        priors = derive_priors(scene)
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            occupancy_aware_lift(priors.semantics, priors.mp_occupancy,
                                 priors.depth, scene.frame, scene.intrinsics,
                                 scene.planes)
            times.append(time.perf_counter() - t0)
        click.echo(f"{'occupancy_aware_lift':>24} {size:>6} {statistics.median(times):10.4f}")
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            run_prq(scene.volume, scene.volume)
            times.append(time.perf_counter() - t0)
        click.echo(f"{'prq':>24} {size:>6} {statistics.median(times):10.4f}")


@main.command()
@click.option("--seed", type=int, default=7, show_default=True)
def demo(seed):
    """Synthesize, derive, lift, group, and evaluate one scene end to end."""
    cfg = SynthConfig(seed=seed)
    scene = generate_scene(cfg)
    priors = derive_priors(scene)
    volume = reconstruct_from_priors(priors, scene.frame, scene.intrinsics,
                                     scene.planes, scene.categories)
    report = prq(volume, scene.volume)
    click.echo(_format_report(report))
    click.echo(f"PRQ {100 * report.prq:.2f}")


def entry():
    try:
        main(standalone_mode=False)
    except click.ClickException as exc:
        _fail(exc.format_message())
    except click.Abort:
        sys.exit(130)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        _fail(str(exc))


if __name__ == "__main__":
    entry()
