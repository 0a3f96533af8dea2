"""Deterministic software renderer producing the virtual ground truth.

Each rendered scene yields a G-buffer: the shaded image the detectors see,
plus per-pixel depth, post-transform world position and pre-transform model
position. Coverage is sampled at pixel centres with a top-left fill rule, and
all attributes are interpolated perspective-correctly, so a world position read
back at a pixel re-projects onto that pixel's centre.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh_io import Mesh


class BehindCamera(ValueError):
    pass


class SuiteError(ValueError):
    pass


class EmptySuite(SuiteError):
    pass


class NonpositiveStep(SuiteError):
    pass


LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class Camera:
    eye: tuple = (0.0, 0.0, 3.0)
    look_at: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 1.0, 0.0)
    vertical_fov: float = 45.0
    near: float = 0.1
    far: float = 100.0
    width: int = 300
    height: int = 300

    def __post_init__(self):
        if not 0 < self.near < self.far:
            raise ValueError(f"need 0 < near < far, got near={self.near}, far={self.far}")
        if not 0 < self.vertical_fov < 180:
            raise ValueError(f"vertical_fov must be in (0, 180), got {self.vertical_fov}")
        if self.width < 16 or self.height < 16:
            raise ValueError(f"image must be at least 16x16, got {self.width}x{self.height}")

    @property
    def basis(self) -> np.ndarray:
        """Rows are the camera right, up and forward axes in world space."""
        eye = np.asarray(self.eye, dtype=np.float64)
        fwd = np.asarray(self.look_at, dtype=np.float64) - eye
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(self.up, dtype=np.float64))
        right = right / np.linalg.norm(right)
        up = np.cross(right, fwd)
        return np.stack([right, up, fwd])

    @property
    def focal(self) -> float:
        # pixels per unit of (view x / view depth)
        return 0.5 * self.height / math.tan(math.radians(self.vertical_fov) / 2)

    def to_view(self, points: np.ndarray) -> np.ndarray:
        """World points (..., 3) to view space; the last coordinate is positive depth."""
        return (np.asarray(points, dtype=np.float64) - np.asarray(self.eye, dtype=np.float64)) @ self.basis.T

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized projection; returns ((..., 2) pixel coords, (...) depth). No near check."""
        p = self.to_view(points)
        z = p[..., 2]
        f = self.focal
        u = 0.5 * self.width + f * p[..., 0] / z
        v = 0.5 * self.height - f * p[..., 1] / z
        return np.stack([u, v], axis=-1), z


def project_to_pixel(point, camera: Camera) -> tuple[float, float]:
    """Continuous pixel coordinates (u right, v down, centres at half-integers)."""
    uv, z = camera.project(np.asarray(point, dtype=np.float64))
    if not z > camera.near:
        raise BehindCamera(f"point {tuple(point)} has view depth {float(z)} <= near {camera.near}")
    return float(uv[0]), float(uv[1])


# --- transforms ---

TRANSFORM_KINDS = ("Identity", "RotX", "RotY", "RotZ", "ScaleXY")


def _rotation(axis: str, degrees: float) -> np.ndarray:
    a = math.radians(degrees)
    c, s = math.cos(a), math.sin(a)
    m = np.eye(4)
    i, j = {"X": (1, 2), "Y": (2, 0), "Z": (0, 1)}[axis]
    m[i, i], m[i, j], m[j, i], m[j, j] = c, -s, s, c
    return m


@dataclass(frozen=True, eq=False)
class SceneTransform:
    kind: str
    params: tuple
    index: int
    matrix: np.ndarray = field(repr=False)
    inverse_matrix: np.ndarray = field(repr=False)

    @property
    def desc(self) -> str:
        if self.kind == "Identity":
            return "Identity"
        if self.kind == "ScaleXY":
            sx, sy = self.params
            return f"ScaleXY({sx:g},{sy:g})"
        return f"{self.kind}({self.params[0]:g})"

    @property
    def is_identity(self) -> bool:
        return self.kind == "Identity"

    def apply(self, points: np.ndarray) -> np.ndarray:
        return _affine(self.matrix, points)

    def invert(self, points: np.ndarray) -> np.ndarray:
        return _affine(self.inverse_matrix, points)


def _affine(m: np.ndarray, points) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    return p @ m[:3, :3].T + m[:3, 3]


def make_transform(kind: str, value=None, index: int = 0) -> SceneTransform:
    """Build a transform with its analytic inverse.

    ``value`` is an angle in degrees for rotations, and a scale factor or an
    ``(sx, sy)`` pair for ScaleXY.
    """
    if kind == "Identity":
        return SceneTransform(kind, (), index, np.eye(4), np.eye(4))
    if kind in ("RotX", "RotY", "RotZ"):
        deg = float(value)
        axis = kind[-1]
        return SceneTransform(kind, (deg,), index, _rotation(axis, deg), _rotation(axis, -deg))
    if kind == "ScaleXY":
        sx, sy = (value, value) if np.isscalar(value) else value
        sx, sy = float(sx), float(sy)
        if sx <= 0 or sy <= 0:
            raise SuiteError(f"scale factors must be positive, got ({sx}, {sy})")
        return SceneTransform(kind, (sx, sy), index,
                              np.diag([sx, sy, 1.0, 1.0]), np.diag([1 / sx, 1 / sy, 1.0, 1.0]))
    raise SuiteError(f"unknown transform kind {kind!r}")


def parse_transform(text: str, index: int = 2) -> SceneTransform:
    """Parse 'RotZ:90', 'ScaleXY:2', 'ScaleXY:2,3' or 'Identity'."""
    kind, _, arg = text.partition(":")
    kind = kind.strip()
    if kind == "Identity":
        return make_transform("Identity", index=1)
    try:
        vals = [float(x) for x in arg.split(",")]
    except ValueError as exc:
        raise SuiteError(f"bad transform spec {text!r}") from exc
    if kind == "ScaleXY":
        value = vals[0] if len(vals) == 1 else tuple(vals[:2])
    elif len(vals) == 1:
        value = vals[0]
    else:
        raise SuiteError(f"bad transform spec {text!r}")
    return make_transform(kind, value, index)


DEFAULT_SUITE = (
    {"kind": "RotX", "start": -50.0, "stop": 50.0, "step": 10.0, "exclude": [0.0]},
    {"kind": "RotY", "start": -50.0, "stop": 50.0, "step": 10.0, "exclude": [0.0]},
    {"kind": "RotZ", "start": 10.0, "stop": 180.0, "step": 10.0},
    {"kind": "ScaleXY", "start": 1.25, "stop": 4.0, "step": 0.25},
)


def build_transform_suite(spec=DEFAULT_SUITE) -> list[SceneTransform]:
    """Identity reference at index 1 followed by every range in ``spec``.

    Each range is a mapping with ``kind``, ``start``, ``stop`` (inclusive),
    ``step`` and optional ``exclude`` (values to skip) or ``values`` (explicit list).
    """
    suite = [make_transform("Identity", index=1)]
    for rng in spec:
        kind = rng["kind"]
        if kind not in TRANSFORM_KINDS or kind == "Identity":
            raise SuiteError(f"unknown transform kind {kind!r}")
        if "values" in rng:
            values = [float(x) for x in rng["values"]]
        else:
            start, stop = float(rng["start"]), float(rng.get("stop", rng["start"]))
            step = float(rng.get("step", 1.0))
            if not step > 0:
                raise NonpositiveStep(f"{kind}: step must be positive, got {step}")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [round(start + k * step, 9) for k in range(max(n, 0))]
        excluded = [float(x) for x in rng.get("exclude", ())]
        for val in values:
            if any(abs(val - e) < 1e-9 for e in excluded):
                continue
            suite.append(make_transform(kind, val, index=len(suite) + 1))
    if len(suite) == 1:
        raise EmptySuite("transform suite has no transforms besides the reference")
    return suite


# --- rendering ---

@dataclass(frozen=True, eq=False)
class GBuffer:
    intensity: np.ndarray  # (h, w) float64 in [0, 1]
    rgb: np.ndarray  # (h, w, 3) uint8
    depth: np.ndarray  # (h, w), +inf where empty
    world_pos: np.ndarray  # (h, w, 3), NaN where empty
    model_pos: np.ndarray  # (h, w, 3), NaN where empty
    mask: np.ndarray  # (h, w) bool
    tri_id: np.ndarray = field(repr=False)  # (h, w) int64, -1 where empty

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def save_png(self, path) -> None:
        from PIL import Image

        Image.fromarray(np.rint(self.intensity * 255).astype(np.uint8), mode="L").save(path)

    def dump(self, path) -> None:
        """Little-endian: uint32 width, uint32 height, then per pixel (row-major)
        float32 depth, world xyz, model xyz and a uint8 mask byte."""
        h, w = self.shape
        rec = np.zeros(h * w, dtype=np.dtype([("f", "<f4", 7), ("m", "u1")], align=False))
        rec["f"][:, 0] = self.depth.ravel()
        rec["f"][:, 1:4] = self.world_pos.reshape(-1, 3)
        rec["f"][:, 4:7] = self.model_pos.reshape(-1, 3)
        rec["m"] = self.mask.ravel()
        with open(path, "wb") as fh:
            fh.write(struct.pack("<II", w, h))
            fh.write(rec.tobytes())


def read_gbuffer_dump(path) -> dict:
    raw = Path(path).read_bytes()
    w, h = struct.unpack_from("<II", raw, 0)
    rec = np.frombuffer(raw, dtype=np.dtype([("f", "<f4", 7), ("m", "u1")]), offset=8, count=w * h)
    f = rec["f"].reshape(h, w, 7)
    return {"width": w, "height": h, "depth": f[..., 0], "world_pos": f[..., 1:4],
            "model_pos": f[..., 4:7], "mask": rec["m"].reshape(h, w).astype(bool)}


def render(mesh: Mesh, transform: SceneTransform, camera: Camera = Camera(), *,
           flat: bool = False, ambient: float = 0.2) -> GBuffer:
    """Rasterize ``mesh`` under ``transform`` as seen by ``camera``.

    Triangles with a vertex at or in front of the near plane are skipped rather
    than clipped; the default framing never produces them.
    """
    W, H = camera.width, camera.height
    model_v = mesh.vertices
    world_v = transform.apply(model_v)
    screen, z = camera.project(world_v)
    faces = mesh.faces

    zbuf = np.full((H, W), np.inf)
    tri_id = np.full((H, W), -1, dtype=np.int64)
    bary = np.zeros((H, W, 3))

    su, sv = screen[:, 0], screen[:, 1]
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    area = (su[b] - su[a]) * (sv[c] - sv[a]) - (sv[b] - sv[a]) * (su[c] - su[a])
    zf = z[faces]
    # front faces wind negatively once v points down
    live = (area < 0) & (zf.min(axis=1) > camera.near)
    tu, tv = su[faces], sv[faces]
    i0 = np.maximum(np.ceil(tu.min(axis=1) - 0.5), 0)
    i1 = np.minimum(np.floor(tu.max(axis=1) - 0.5), W - 1)
    j0 = np.maximum(np.ceil(tv.min(axis=1) - 0.5), 0)
    j1 = np.minimum(np.floor(tv.max(axis=1) - 0.5), H - 1)
    live &= (i0 <= i1) & (j0 <= j1)

    for t in np.flatnonzero(live):
        # reorder to positive orientation: (a, c, b)
        ua, ub, uc = tu[t, 0], tu[t, 2], tu[t, 1]
        va, vb, vc = tv[t, 0], tv[t, 2], tv[t, 1]
        za, zb, zc = zf[t, 0], zf[t, 2], zf[t, 1]
        x0, x1, y0, y1 = int(i0[t]), int(i1[t]), int(j0[t]), int(j1[t])
        pu = np.arange(x0, x1 + 1) + 0.5
        pv = (np.arange(y0, y1 + 1) + 0.5)[:, None]
        e_bc = _edge(ub, vb, uc, vc, pu, pv)
        e_ca = _edge(uc, vc, ua, va, pu, pv)
        e_ab = _edge(ua, va, ub, vb, pu, pv)
        inside = (_covers(e_bc, ub, vb, uc, vc) & _covers(e_ca, uc, vc, ua, va)
                  & _covers(e_ab, ua, va, ub, vb))
        if not inside.any():
            continue
        tot = -area[t]
        la, lb, lc = e_bc / tot, e_ca / tot, e_ab / tot
        wa, wb, wc = la / za, lb / zb, lc / zc
        inv = wa + wb + wc
        depth = 1.0 / inv
        region = zbuf[y0:y1 + 1, x0:x1 + 1]
        win = inside & (depth < region) & (depth <= camera.far)
        if not win.any():
            continue
        region[win] = depth[win]
        tri_id[y0:y1 + 1, x0:x1 + 1][win] = t
        # weights back in original vertex order (a, b, c) = (a, c', b')
        breg = bary[y0:y1 + 1, x0:x1 + 1]
        breg[win, 0] = (wa / inv)[win]
        breg[win, 1] = (wc / inv)[win]
        breg[win, 2] = (wb / inv)[win]

    return _shade(mesh, transform, camera, world_v, zbuf, tri_id, bary, flat, ambient)


def _edge(ax, ay, bx, by, px, py):
    # evaluate shared edges in one canonical direction so neighbours get exactly
    # opposite values (no cracks, no double hits)
    if (ax, ay) > (bx, by):
        return -((ax - bx) * (py - by) - (ay - by) * (px - bx))
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _covers(e, ax, ay, bx, by):
    dv, du = by - ay, bx - ax
    top_left = dv < 0 or (dv == 0 and du > 0)
    return (e >= 0) if top_left else (e > 0)


def covered_pixels(screen_uv, width: int, height: int) -> np.ndarray:
    """(height, width) mask of pixel centres a screen-space triangle covers,
    under the same fill rule as ``render`` (either winding)."""
    (ua, va), (ub, vb), (uc, vc) = np.asarray(screen_uv, dtype=np.float64)
    if _edge(ua, va, ub, vb, uc, vc) < 0:
        ub, vb, uc, vc = uc, vc, ub, vb
    pu = np.arange(width) + 0.5
    pv = (np.arange(height) + 0.5)[:, None]
    return (_covers(_edge(ub, vb, uc, vc, pu, pv), ub, vb, uc, vc)
            & _covers(_edge(uc, vc, ua, va, pu, pv), uc, vc, ua, va)
            & _covers(_edge(ua, va, ub, vb, pu, pv), ua, va, ub, vb))


def _shade(mesh,transform, camera, world_v, zbuf, tri_id, bary, flat, ambient) -> GBuffer:
    H, W = zbuf.shape
    mask = tri_id >= 0
    world = np.full((H, W, 3), np.nan)
    model = np.full((H, W, 3), np.nan)
    rgb = np.zeros((H, W, 3), dtype=np.uint8)
    if mask.any():
        ids = tri_id[mask]
        fv = mesh.faces[ids]  # (k, 3)
        wts = bary[mask]  # (k, 3)
        world_m = np.einsum("kj,kjd->kd", wts, world_v[fv])
        model_m = np.einsum("kj,kjd->kd", wts, mesh.vertices[fv])
        world[mask] = world_m
        model[mask] = model_m

        if flat:
            tri = world_v[fv]
            n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        else:
            normal_m = np.linalg.inv(transform.matrix[:3, :3]).T
            vn = mesh.normals @ normal_m.T
            vn /= np.linalg.norm(vn, axis=1, keepdims=True)
            n = np.einsum("kj,kjd->kd", wts, vn[fv])
        n = n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
        # directional headlight: shines along the viewing axis
        light = -camera.basis[2]
        lambert = np.clip(n @ light, 0.0, 1.0)
        shade = ambient + (1.0 - ambient) * lambert

        if mesh.textured:
            uv = np.einsum("kj,kjd->kd", wts, mesh.uvs[fv])
            albedo = sample_bilinear(mesh.texture, uv)
        else:
            albedo = np.ones((len(ids), 3))
        rgb[mask] = np.clip(np.rint(albedo * shade[:, None] * 255.0), 0, 255).astype(np.uint8)

    intensity = (rgb.astype(np.float64) @ LUMA) / 255.0
    return GBuffer(intensity, rgb, zbuf, world, model, mask, tri_id)


def sample_bilinear(texture: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Sample an (h, w, 3) uint8 texture at uv in [0,1]^2 (v up); returns floats in [0,1]."""
    th, tw = texture.shape[:2]
    x = np.clip(uv[:, 0], 0.0, 1.0) * (tw - 1)
    y = (1.0 - np.clip(uv[:, 1], 0.0, 1.0)) * (th - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, tw - 1)
    y1 = np.minimum(y0 + 1, th - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    tex = texture.astype(np.float64) / 255.0
    top = tex[y0, x0] * (1 - fx) + tex[y0, x1] * fx
    bot = tex[y1, x0] * (1 - fx) + tex[y1, x1] * fx
    return top * (1 - fy) + bot * fy
