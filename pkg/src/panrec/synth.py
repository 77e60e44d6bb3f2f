"""Seeded procedural frustum scenes (boxes, ellipsoids, stuff slabs) and
controlled corruption of derived priors.

All randomness flows through numpy's PCG64 generator seeded from a
SeedSequence; per-entity streams are split with SeedSequence.spawn so results
are reproducible across platforms.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import CameraIntrinsics, DepthPlanes, FrustumGrid
from .priors import InstanceCenter, Priors2D, SceneGT, encode_center_heatmap
from .volume import CategoryTable, PanopticVolume


class SynthError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    """Prior-corruption magnitudes; zero everywhere means no perturbation."""

    depth_sigma: float = 0.0       # meters
    semantic_flip: float = 0.0     # per-pixel relabel probability
    occupancy_flip: float = 0.0    # per-cell bit-flip probability
    center_jitter: int = 0         # max |pixel| offset per axis

    def __post_init__(self):
        if self.depth_sigma < 0 or self.center_jitter < 0:
            raise SynthError("noise magnitudes must be nonnegative")
        for p in (self.semantic_flip, self.occupancy_flip):
            if not (0 <= p <= 1):
                raise SynthError("flip probabilities must be in [0, 1]")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    width: int = 64
    height: int = 64
    planes: int = 64
    z_near: float = 0.4
    z_far: float = 6.0
    n_things: int = 4
    n_stuff: int = 2               # 0 none, 1 wall, 2 wall + floor
    n_thing_categories: int = 4
    min_center_separation: float = 10.0
    occlusion_allowed: bool = False
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    max_attempts: int = 200

    def __post_init__(self):
        if self.n_things < 0 or not (0 <= self.n_stuff <= 2):
            raise SynthError("need n_things >= 0 and n_stuff in {0, 1, 2}")
        if self.n_thing_categories < 1:
            raise SynthError("need at least one thing category")
        if self.min_center_separation < 0:
            raise SynthError("min center separation must be nonnegative")

    @property
    def categories(self) -> CategoryTable:
        flags = [False] + [False] * self.n_stuff + [True] * self.n_thing_categories
        return CategoryTable(is_thing=tuple(flags))

    @property
    def first_thing_category(self) -> int:
        return 1 + self.n_stuff

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            fx=float(self.width),
            fy=float(self.width),
            cx=(self.width - 1) / 2.0,
            cy=(self.height - 1) / 2.0,
            width=self.width,
            height=self.height,
        )

    def depth_planes(self) -> DepthPlanes:
        return DepthPlanes(count=self.planes, z_near=self.z_near, z_far=self.z_far)


def _rasterize_box(rng, w, h, m_count):
    wu = int(rng.integers(3, max(4, min(w // 4, 14)) + 1))
    wv = int(rng.integers(3, max(4, min(h // 4, 14)) + 1))
    wm = int(rng.integers(2, max(3, m_count // 4) + 1))
    u0 = int(rng.integers(0, w - wu + 1))
    v0 = int(rng.integers(0, h - wv + 1))
    m0 = int(rng.integers(0, max(1, m_count - wm - max(2, m_count // 16))))
    vv, uu, mm = np.meshgrid(
        np.arange(v0, v0 + wv), np.arange(u0, u0 + wu), np.arange(m0, m0 + wm),
        indexing="ij",
    )
    return vv.ravel(), uu.ravel(), mm.ravel()


def _rasterize_ellipsoid(rng, w, h, m_count):
    ru = float(rng.uniform(2.0, max(2.5, min(w // 8, 7))))
    rv = float(rng.uniform(2.0, max(2.5, min(h // 8, 7))))
    rm = float(rng.uniform(1.0, max(1.5, m_count // 8)))
    uc = float(rng.uniform(ru, w - 1 - ru))
    vc = float(rng.uniform(rv, h - 1 - rv))
    back_margin = max(2, m_count // 16)
    mc = float(rng.uniform(rm, max(rm + 0.5, m_count - 1 - rm - back_margin)))
    vv, uu, mm = np.meshgrid(
        np.arange(h), np.arange(w), np.arange(m_count), indexing="ij"
    )
    inside = (
        ((uu - uc) / ru) ** 2 + ((vv - vc) / rv) ** 2 + ((mm - mc) / rm) ** 2
    ) <= 1.0
    return np.nonzero(inside)


def generate_scene(cfg: SynthConfig):
    """Deterministic ground-truth scene for one seed.

    Thing instances are connected boxes or digitized ellipsoids whose pixel
    footprints keep their 2D mass centers pairwise separated; stuff slabs fill
    the back planes (wall) and bottom rows (floor) of the frustum at pixels not
    claimed by any thing, so every ray meets a single category unless occlusion
    is explicitly allowed.
    """
    frame = FrustumGrid(cfg.width, cfg.height, cfg.planes)
    semantics = np.zeros(frame.shape, dtype=np.int32)
    instances = np.zeros(frame.shape, dtype=np.int32)
    claimed = np.zeros((cfg.height, cfg.width), dtype=bool)
    root = np.random.SeedSequence(cfg.seed)
    placement_rng = np.random.Generator(np.random.PCG64(root.spawn(1)[0]))
    centers = []
    for inst_id in range(1, cfg.n_things + 1):
        placed = False
        for _attempt in range(cfg.max_attempts):
            shape = placement_rng.choice(["box", "ellipsoid"])
            if shape == "box":
                vs, us, ms = _rasterize_box(placement_rng, cfg.width, cfg.height, cfg.planes)
            else:
                vs, us, ms = _rasterize_ellipsoid(placement_rng, cfg.width, cfg.height, cfg.planes)
            if len(vs) == 0:
                continue
            if cfg.occlusion_allowed:
                if np.any(semantics[vs, us, ms] != 0):
                    continue
            else:
                if np.any(claimed[vs, us]):
                    continue
            cu, cv = us.mean(), vs.mean()
            if any(
                np.hypot(cu - c[0], cv - c[1]) < cfg.min_center_separation
                for c in centers
            ):
                continue
            category = cfg.first_thing_category + int(
                placement_rng.integers(0, cfg.n_thing_categories)
            )
            semantics[vs, us, ms] = category
            instances[vs, us, ms] = inst_id
            claimed[vs, us] = True
            centers.append((cu, cv))
            placed = True
            break
        if not placed:
            raise SynthError(
                f"could not place instance {inst_id} within {cfg.max_attempts} attempts "
                "(footprint overlap or center-separation constraint)"
            )
    if cfg.n_stuff >= 2:
        floor_rows = max(2, cfg.height // 6)
        floor_m0 = cfg.planes // 2
        region = ~claimed[cfg.height - floor_rows :, :]
        sub = semantics[cfg.height - floor_rows :, :, floor_m0:]
        sub[region] = 2
        claimed[cfg.height - floor_rows :, :] = True
    if cfg.n_stuff >= 1:
        wall_t = max(2, cfg.planes // 16)
        region = ~claimed
        sub = semantics[:, :, cfg.planes - wall_t :]
        sub[region] = 1
    volume = PanopticVolume(
        frame=frame, semantics=semantics, instances=instances, categories=cfg.categories
    ).validate()
    return SceneGT(volume=volume, intrinsics=cfg.intrinsics(), planes=cfg.depth_planes())


def perturb_priors(
    priors: Priors2D,
    noise: NoiseSpec,
    seed: int,
    planes: DepthPlanes,
    heatmap_sigma: float = 8.0,
) -> Priors2D:
    """Deterministically corrupt a prior bundle; a zero noise spec is the identity."""
    streams = np.random.SeedSequence(seed).spawn(4)
    rngs = [np.random.Generator(np.random.PCG64(s)) for s in streams]
    depth = priors.depth.copy()
    if noise.depth_sigma > 0:
        surface = depth > 0
        depth[surface] += rngs[0].normal(0.0, noise.depth_sigma, size=int(surface.sum()))
        depth[surface] = np.clip(
            depth[surface], planes.z_near, np.nextafter(planes.z_far, planes.z_near)
        )
    semantics = priors.semantics.copy()
    if noise.semantic_flip > 0:
        h, w, c = semantics.shape
        flip = rngs[1].random((h, w)) < noise.semantic_flip
        labels = rngs[1].integers(0, c, size=(h, w))
        vs, us = np.nonzero(flip)
        semantics[vs, us, :] = 0.0
        semantics[vs, us, labels[vs, us]] = 1.0
    mp_occupancy = priors.mp_occupancy.copy()
    if noise.occupancy_flip > 0:
        flip = rngs[2].random(mp_occupancy.shape) < noise.occupancy_flip
        mp_occupancy = np.where(flip, 1.0 - mp_occupancy, mp_occupancy)
    centers = list(priors.centers)
    heatmap = priors.heatmap.copy()
    if noise.center_jitter > 0:
        jittered = []
        h, w = heatmap.shape
        for c in centers:
            du, dv = rngs[3].integers(-noise.center_jitter, noise.center_jitter + 1, size=2)
            jittered.append(
                InstanceCenter(
                    u=int(np.clip(c.u + du, 0, w - 1)),
                    v=int(np.clip(c.v + dv, 0, h - 1)),
                    category=c.category,
                    instance_id=c.instance_id,
                )
            )
        centers = jittered
        heatmap = encode_center_heatmap(centers, h, w, heatmap_sigma)
    return Priors2D(
        semantics=semantics,
        depth=depth,
        centers=centers,
        heatmap=heatmap,
        mp_occupancy=mp_occupancy,
        offsets3d=None if priors.offsets3d is None else priors.offsets3d.copy(),
    )
