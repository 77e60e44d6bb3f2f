"""Indexed triangle export of panoptic volumes for visual inspection.

One material per instance (stuff uses the category), colored by a stable hash
of the label so identical ids always render identically.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .volume import PanopticVolume

# Faces of a unit cube at integer corner offsets, one per axis direction.
_FACES = {
    (-1, 0, 0): [(0, 0, 0), (0, 0, 1), (0, 1, 1), (0, 1, 0)],
    (1, 0, 0): [(1, 0, 0), (1, 1, 0), (1, 1, 1), (1, 0, 1)],
    (0, -1, 0): [(0, 0, 0), (1, 0, 0), (1, 0, 1), (0, 0, 1)],
    (0, 1, 0): [(0, 1, 0), (0, 1, 1), (1, 1, 1), (1, 1, 0)],
    (0, 0, -1): [(0, 0, 0), (0, 1, 0), (1, 1, 0), (1, 0, 0)],
    (0, 0, 1): [(0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)],
}


def label_color(label: str):
    """Deterministic RGB in [0, 1] from a label string."""
    digest = hashlib.sha256(label.encode()).digest()
    return tuple(0.2 + 0.8 * b / 255.0 for b in digest[:3])


def export_obj(volume: PanopticVolume, obj_path):
    """Write an .obj (plus .mtl) of all boundary faces, grouped per segment."""
    obj_path = Path(obj_path)
    mtl_path = obj_path.with_suffix(".mtl")
    sem = volume.semantics
    inst = volume.instances
    occ = volume.occupancy
    labels = {}
    for idx in np.argwhere(occ):
        i, j, k = (int(x) for x in idx)
        name = f"thing_{inst[i, j, k]}" if inst[i, j, k] > 0 else f"stuff_{sem[i, j, k]}"
        labels.setdefault(name, []).append((i, j, k))

    vertices = {}
    def vid(p):
        if p not in vertices:
            vertices[p] = len(vertices) + 1
        return vertices[p]

    groups = {}
    shape = occ.shape
    for name, cells in sorted(labels.items()):
        faces = []
        for i, j, k in cells:
            for (di, dj, dk), corners in _FACES.items():
                ni, nj, nk = i + di, j + dj, k + dk
                inside = 0 <= ni < shape[0] and 0 <= nj < shape[1] and 0 <= nk < shape[2]
                if inside and occ[ni, nj, nk] and inst[ni, nj, nk] == inst[i, j, k] \
                        and sem[ni, nj, nk] == sem[i, j, k]:
                    continue
                quad = [vid((i + ci, j + cj, k + ck)) for ci, cj, ck in corners]
                faces.append((quad[0], quad[1], quad[2]))
                faces.append((quad[0], quad[2], quad[3]))
        groups[name] = faces

    with mtl_path.open("w") as mtl:
        for name in groups:
            r, g, b = label_color(name)
            mtl.write(f"newmtl {name}\nKd {r:.4f} {g:.4f} {b:.4f}\n")
    with obj_path.open("w") as obj:
        obj.write(f"mtllib {mtl_path.name}\n")
        for (i, j, k), _n in sorted(vertices.items(), key=lambda kv: kv[1]):
            obj.write(f"v {j} {i} {k}\n")
        for name, faces in groups.items():
            obj.write(f"usemtl {name}\n")
            for a, b, c in faces:
                obj.write(f"f {a} {b} {c}\n")
