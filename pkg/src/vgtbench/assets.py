"""Bundled test meshes, generated procedurally and shipped as PLY files.

``builtin:<name>`` in a model manifest resolves to ``assets/<name>.ply``.
Regenerate with ``python -m vgtbench.assets``.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh_io import Mesh, load_mesh, make_mesh, normalize_mesh, save_ply

ASSET_DIR = Path(__file__).parent / "assets"
BUILTINS = ("cube", "icosphere", "relief")
RELIEF_SEED = 20190417


def cube() -> Mesh:
    v = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float)
    # outward-facing, counter-clockwise seen from outside
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = [(q[0], q[k], q[k + 1]) for q in quads for k in (1, 2)]
    return make_mesh(v, faces, name="cube")


def icosphere(subdivisions: int = 3, name: str = "icosphere") -> Mesh:
    t = (1 + 5 ** 0.5) / 2
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return make_mesh(np.array(verts), faces, name=name)


def faceted(mesh: Mesh) -> Mesh:
    """Give every face its own vertices so shading is constant per facet."""
    v = mesh.vertices[mesh.faces.ravel()]
    return make_mesh(v, np.arange(len(v)).reshape(-1, 3), name=mesh.name)


def relief(seed: int = RELIEF_SEED, subdivisions: int = 5, bumps: int = 40) -> Mesh:
    """Icosphere with radial Gaussian bumps and dents: protrusions and self-occlusion."""
    base = icosphere(subdivisions)
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(bumps, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    heights = rng.uniform(-0.25, 0.45, size=bumps)
    widths = rng.uniform(0.12, 0.35, size=bumps)
    v = base.vertices
    ang = np.arccos(np.clip(v @ centers.T, -1.0, 1.0))  # (n, bumps)
    r = 1.0 + (heights * np.exp(-(ang / widths) ** 2)).sum(axis=1)
    return make_mesh(v * r[:, None], base.faces, name="relief")


def builtin_path(name: str) -> Path:
    if name not in BUILTINS:
        raise KeyError(f"unknown builtin mesh {name!r}; choose from {BUILTINS}")
    return ASSET_DIR / f"{name}.ply"


def resolve(ref: str) -> Path:
    if ref.startswith("builtin:"):
        return builtin_path(ref.split(":", 1)[1])
    return Path(ref)


def load_builtin(name: str) -> Mesh:
    return normalize_mesh(load_mesh(builtin_path(name)))


def write_assets(directory: Path = ASSET_DIR) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name, mesh in (("cube", cube()), ("icosphere", faceted(icosphere(2))), ("relief", relief())):
        save_ply(mesh, directory / f"{name}.ply")


if __name__ == "__main__":
    write_assets()
