"""Lift detections into world space and pre-select closest point pairs.

Pairing is greedy and one-to-one over all (reference, candidate) pairs sorted
by world distance, where the distance uses either the first two (x, y) or all
three reference-frame coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detect import InterestPoint
from .raster import Camera, GBuffer, SceneTransform


@dataclass(frozen=True)
class WorldPoint:
    u: int
    v: int
    world: tuple  # (x, y, z)
    scene_index: int
    source: InterestPoint | None = None

    @property
    def pixel(self) -> tuple[int, int]:
        return self.u, self.v

    @property
    def key(self) -> tuple[int, int]:
        return self.u, self.v


@dataclass(frozen=True)
class PreselectMode:
    dims: int

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ValueError(f"pre-selection dims must be 2 or 3, got {self.dims}")

    @property
    def label(self) -> str:
        return f"{self.dims}D"

    @classmethod
    def parse(cls, value) -> "PreselectMode":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            value = value.upper().rstrip("D")
        return cls(int(value))


MODE_2D = PreselectMode(2)
MODE_3D = PreselectMode(3)


@dataclass(frozen=True)
class Pair:
    ref: WorldPoint
    cand: WorldPoint
    dist2: float
    dist3: float


@dataclass(frozen=True)
class PairSet:
    pairs: tuple
    ref_count: int
    cand_count: int
    mode: PreselectMode

    def __len__(self):
        return len(self.pairs)


def lift_points(points, gbuffer: GBuffer, scene_index: int = 1) -> tuple[list[WorldPoint], int]:
    """Look up world positions at detected pixels; returns (lifted, dropped_background)."""
    out = []
    dropped = 0
    for p in points:
        if not gbuffer.mask[p.v, p.u]:
            dropped += 1
            continue
        w = gbuffer.world_pos[p.v, p.u]
        out.append(WorldPoint(p.u, p.v, (float(w[0]), float(w[1]), float(w[2])), scene_index, p))
    return out, dropped


def _coords(points) -> np.ndarray:
    if not points:
        return np.zeros((0, 3))
    return np.array([p.world for p in points], dtype=np.float64)


def _with_world(points, coords) -> list[WorldPoint]:
    return [WorldPoint(p.u, p.v, (float(c[0]), float(c[1]), float(c[2])), p.scene_index, p.source)
            for p, c in zip(points, coords)]


def to_reference_frame(points, transform: SceneTransform) -> list[WorldPoint]:
    if transform.is_identity or not points:
        return list(points)
    return _with_world(points, transform.invert(_coords(points)))


def cull_bbox(points, aabb, tol: float = 0.0) -> list[WorldPoint]:
    """Keep points inside the closed box inflated by ``tol`` on every side."""
    lo = np.asarray(aabb[0], dtype=np.float64) - tol
    hi = np.asarray(aabb[1], dtype=np.float64) + tol
    c = _coords(points)
    keep = np.all((c >= lo) & (c <= hi), axis=1)
    return [p for p, k in zip(points, keep) if k]


def bbox_tolerance(aabb) -> float:
    return 1e-3 * float(np.linalg.norm(np.asarray(aabb[1]) - np.asarray(aabb[0])))


def _in_view(coords: np.ndarray, camera: Camera, width: int, height: int) -> np.ndarray:
    if len(coords) == 0:
        return np.zeros(0, dtype=bool)
    uv, z = camera.project(coords)
    return ((z > camera.near) & (uv[:, 0] >= 0) & (uv[:, 0] < width)
            & (uv[:, 1] >= 0) & (uv[:, 1] < height))


def overlap_filter(ref_points, cand_points, transform: SceneTransform, camera: Camera,
                   ref_gbuffer: GBuffer | None = None, cand_gbuffer: GBuffer | None = None):
    """Drop points whose counterpart location lies outside the other scene's image.

    Both lists are in reference model space. Reference points are carried
    forward by ``transform`` and tested against the candidate image; candidate
    points are tested against the reference image as they are.
    """
    rh, rw = ref_gbuffer.shape if ref_gbuffer is not None else (camera.height, camera.width)
    ch, cw = cand_gbuffer.shape if cand_gbuffer is not None else (camera.height, camera.width)
    if transform.is_identity:
        fwd = _coords(ref_points)
    else:
        fwd = transform.apply(_coords(ref_points)) if ref_points else np.zeros((0, 3))
    keep_ref = _in_view(fwd, camera, cw, ch)
    keep_cand = _in_view(_coords(cand_points), camera, rw, rh)
    return ([p for p, k in zip(ref_points, keep_ref) if k],
            [p for p, k in zip(cand_points, keep_cand) if k])


def occluded_count(cand_points, camera: Camera, ref_gbuffer: GBuffer, tol: float = 1e-2) -> int:
    """Candidates whose reference-frame position is hidden behind (or off) the
    reference surface at the pixel it projects to. Diagnostic only."""
    if not cand_points:
        return 0
    uv, z = camera.project(_coords(cand_points))
    h, w = ref_gbuffer.shape
    n = 0
    for (u, v), depth in zip(uv, z):
        iu, iv = int(math.floor(u)), int(math.floor(v))
        if not (0 <= iu < w and 0 <= iv < h) or not ref_gbuffer.mask[iv, iu]:
            n += 1
        elif abs(ref_gbuffer.depth[iv, iu] - depth) > tol:
            n += 1
    return n


def world_distance(a, b, mode) -> float:
    mode = PreselectMode.parse(mode)
    dx, dy = a[0] - b[0], a[1] - b[1]
    s = dx * dx + dy * dy
    if mode.dims == 3:
        dz = a[2] - b[2]
        s = s + dz * dz
    return math.sqrt(s)


def _distance_matrix(a: np.ndarray, b: np.ndarray, dims: int) -> np.ndarray:
    dx = a[:, None, 0] - b[None, :, 0]
    dy = a[:, None, 1] - b[None, :, 1]
    s = dx * dx + dy * dy
    if dims == 3:
        dz = a[:, None, 2] - b[None, :, 2]
        s = s + dz * dz
    return np.sqrt(s)


def _pixel_order(points) -> list:
    return sorted(points, key=lambda p: (p.v, p.u))


def greedy_match(dist: np.ndarray) -> list[tuple[int, int]]:
    """Greedy one-to-one matching over pairs sorted by (dist, row, col).

    Equivalent to scanning the sorted pair list and accepting a pair when both
    ends are free, but done in vectorized rounds: a pair that is the earliest
    remaining pair for both its row and its column is exactly one the scan
    would accept.
    """
    n, m = dist.shape
    if n == 0 or m == 0:
        return []
    order = np.argsort(dist.ravel(), kind="stable")
    rank = np.empty(n * m, dtype=np.int64)
    rank[order] = np.arange(n * m)
    rank = rank.reshape(n, m)
    big = np.iinfo(np.int64).max
    rows = np.arange(n)
    matched = []
    live_r = np.ones(n, dtype=bool)
    live_c = np.ones(m, dtype=bool)
    while live_r.any() and live_c.any():
        best_c = rank.argmin(axis=1)
        best_r = rank.argmin(axis=0)
        mutual = live_r & (best_r[best_c] == rows)
        for i in np.flatnonzero(mutual):
            matched.append((int(rank[i, best_c[i]]), int(i), int(best_c[i])))
        ri = np.flatnonzero(mutual)
        ci = best_c[ri]
        live_r[ri] = False
        live_c[ci] = False
        rank[ri, :] = big
        rank[:, ci] = big
    matched.sort()
    return [(i, j) for _, i, j in matched]


def preselect(ref_points, cand_points, mode) -> PairSet:
    mode = PreselectMode.parse(mode)
    refs = _pixel_order(ref_points)
    cands = _pixel_order(cand_points)
    a, b = _coords(refs), _coords(cands)
    d_mode = _distance_matrix(a, b, mode.dims)
    d_other = _distance_matrix(a, b, 5 - mode.dims)
    d2, d3 = (d_mode, d_other) if mode.dims == 2 else (d_other, d_mode)
    pairs = tuple(Pair(refs[i], cands[j], float(d2[i, j]), float(d3[i, j]))
                  for i, j in greedy_match(d_mode))
    return PairSet(pairs, len(refs), len(cands), mode)


def write_pairs_csv(pairset: PairSet, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["ref_u", "ref_v", "cand_u", "cand_v", "dist2", "dist3"])
        for p in pairset.pairs:
            wr.writerow([p.ref.u, p.ref.v, p.cand.u, p.cand.v, repr(p.dist2), repr(p.dist3)])
