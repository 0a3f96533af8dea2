"""Triangle mesh loading, validation and normalization.

Meshes come in as PLY (ASCII or binary little-endian) or OBJ, optionally with a
single diffuse texture, and are normalized into a canonical model space: vertex
centroid at the origin, bounding-sphere radius 1.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class MeshError(Exception):
    """Base class for mesh loading/validation failures."""


class ParseError(MeshError):
    pass


class EmptyMesh(MeshError):
    pass


class IndexOutOfRange(MeshError):
    pass


class DegenerateMesh(MeshError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray  # (n, 3) float64
    faces: np.ndarray  # (m, 3) int64
    normals: np.ndarray  # (n, 3) unit vectors
    uvs: np.ndarray | None = None  # (n, 2) in [0, 1]
    texture: np.ndarray | None = None  # (h, w, 3) uint8
    name: str = "mesh"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.vertices, self.faces, self.normals, self.uvs, self.texture):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def textured(self) -> bool:
        return self.texture is not None and self.uvs is not None


def make_mesh(vertices, faces, normals=None, uvs=None, texture=None, name="mesh") -> Mesh:
    """Validate raw arrays and build a Mesh, computing normals if missing."""
    v = np.array(vertices, dtype=np.float64).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if len(f) == 0:
        raise EmptyMesh(f"{name}: mesh has no faces")
    if len(v) < 3:
        raise EmptyMesh(f"{name}: mesh needs at least 3 vertices, got {len(v)}")
    if f.min() < 0 or f.max() >= len(v):
        raise IndexOutOfRange(
            f"{name}: face index out of range [0, {len(v)}): min {f.min()}, max {f.max()}")
    if not np.all(np.isfinite(v)):
        raise ParseError(f"{name}: non-finite vertex coordinates")
    if normals is None:
        n = vertex_normals(v, f)
    else:
        n = _unitize(np.array(normals, dtype=np.float64).reshape(-1, 3), v, f)
        if len(n) != len(v):
            raise ParseError(f"{name}: {len(n)} normals for {len(v)} vertices")
    if uvs is not None:
        uvs = np.array(uvs, dtype=np.float64).reshape(-1, 2)
        if len(uvs) != len(v):
            raise ParseError(f"{name}: {len(uvs)} uvs for {len(v)} vertices")
    if texture is not None:
        texture = np.ascontiguousarray(texture, dtype=np.uint8)[..., :3]
    return Mesh(v, f, n, uvs, texture, name)


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals (the unnormalized cross product carries the area)."""
    a, b, c = (vertices[faces[:, k]] for k in range(3))
    fn = np.cross(b - a, c - a)
    acc = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(acc, faces[:, k], fn)
    return _unitize(acc, vertices, faces)


def _unitize(n: np.ndarray, vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(n, axis=1)
    bad = ~(norm > 1e-300)
    out = np.empty_like(n)
    out[~bad] = n[~bad] / norm[~bad, None]
    if bad.any():
        # zero-area neighbourhoods: point away from the centroid, else +z
        d = vertices[bad] - vertices.mean(axis=0)
        dn = np.linalg.norm(d, axis=1)
        fallback = np.tile([0.0, 0.0, 1.0], (int(bad.sum()), 1))
        ok = dn > 1e-300
        fallback[ok] = d[ok] / dn[ok, None]
        out[bad] = fallback
    return out


def normalize_mesh(mesh: Mesh) -> Mesh:
    """Center on the vertex centroid and scale to unit bounding-sphere radius."""
    centroid = mesh.vertices.mean(axis=0)
    centered = mesh.vertices - centroid
    radius = float(np.sqrt((centered ** 2).sum(axis=1)).max())
    if not radius > 1e-12:
        raise DegenerateMesh(f"{mesh.name}: all vertices coincide")
    v = centered / radius
    return replace(mesh, vertices=v, meta={**mesh.meta, "normalized": True})


def mesh_aabb(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    return mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)


def load_mesh(path, format: str | None = None) -> Mesh:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    if fmt == "PLY":
        return _load_ply(path)
    if fmt == "OBJ":
        return _load_obj(path)
    raise ParseError(f"unsupported mesh format {fmt!r} for {path}")


# --- PLY ---

_PLY_TYPES = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def _parse_ply_header(fh, path):
    if fh.readline().strip() != b"ply":
        raise ParseError(f"{path}: missing 'ply' magic")
    fmt = None
    elements = []  # [name, count, [(prop, type, list_count_type|None)]]
    while True:
        line = fh.readline()
        if not line:
            raise ParseError(f"{path}: unterminated header")
        tok = line.decode("ascii", "replace").split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements:
                raise ParseError(f"{path}: property before element")
            if tok[1] == "list":
                if tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise ParseError(f"{path}: bad list property types {tok[2:4]}")
                elements[-1][2].append((tok[4], tok[3], tok[2]))
            else:
                if tok[1] not in _PLY_TYPES:
                    raise ParseError(f"{path}: unknown property type {tok[1]!r}")
                elements[-1][2].append((tok[2], tok[1], None))
        else:
            raise ParseError(f"{path}: unexpected header line {line!r}")
    if fmt not in ("ascii", "binary_little_endian"):
        raise ParseError(f"{path}: unsupported PLY format {fmt!r}")
    return fmt, elements


def _load_ply(path: Path) -> Mesh:
    with open(path, "rb") as fh:
        try:
            fmt, elements = _parse_ply_header(fh, path)
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}: malformed header: {exc}") from exc
        body = fh.read()
    data = {}
    try:
        if fmt == "ascii":
            tokens = iter(body.split())
            for name, count, props in elements:
                rows = []
                for _ in range(count):
                    row = {}
                    for pname, ptype, ltype in props:
                        if ltype is None:
                            row[pname] = float(next(tokens))
                        else:
                            k = int(next(tokens))
                            row[pname] = [int(float(next(tokens))) for _ in range(k)]
                    rows.append(row)
                data[name] = rows
        else:
            off = 0
            for name, count, props in elements:
                if all(l is None for _, _, l in props):
                    # fixed-size record: read all at once
                    dt = np.dtype([(p, "<" + _PLY_TYPES[t]) for p, t, _ in props])
                    arr = np.frombuffer(body, dtype=dt, count=count, offset=off)
                    off += dt.itemsize * count
                    data[name] = arr
                    continue
                rows = []
                for _ in range(count):
                    row = {}
                    for pname, ptype, ltype in props:
                        if ltype is None:
                            c = "<" + _PLY_TYPES[ptype]
                            row[pname] = struct.unpack_from(c, body, off)[0]
                            off += struct.calcsize(c)
                        else:
                            lc = "<" + _PLY_TYPES[ltype]
                            k = struct.unpack_from(lc, body, off)[0]
                            off += struct.calcsize(lc)
                            c = "<%d%s" % (k, _PLY_TYPES[ptype])
                            row[pname] = list(struct.unpack_from(c, body, off))
                            off += struct.calcsize(c)
                    rows.append(row)
                data[name] = rows
    except (StopIteration, struct.error, ValueError) as exc:
        raise ParseError(f"{path}: truncated or malformed body: {exc}") from exc

    if "vertex" not in data:
        raise ParseError(f"{path}: no vertex element")
    vert = data["vertex"]

    def column(key):
        if isinstance(vert, np.ndarray):
            return np.asarray(vert[key], dtype=np.float64) if key in vert.dtype.names else None
        if vert and key not in vert[0]:
            return None
        return np.array([r[key] for r in vert], dtype=np.float64)

    xyz = [column(k) for k in "xyz"]
    if any(c is None for c in xyz):
        raise ParseError(f"{path}: vertex element lacks x/y/z")
    vertices = np.stack(xyz, axis=1) if len(vert) else np.zeros((0, 3))
    nrm = [column(k) for k in ("nx", "ny", "nz")]
    normals = np.stack(nrm, axis=1) if all(c is not None for c in nrm) else None
    uv = [column(k) for k in ("u", "v")]
    if any(c is None for c in uv):
        uv = [column(k) for k in ("s", "t")]
    uvs = np.stack(uv, axis=1) if all(c is not None for c in uv) else None

    polys = []
    for row in data.get("face", []):
        idx = row["vertex_indices"] if "vertex_indices" in row else row.get("vertex_index")
        if idx is None:
            raise ParseError(f"{path}: face element lacks vertex_indices")
        polys.append(idx)
    faces = _fan(polys, path)
    return make_mesh(vertices, faces, normals, uvs, None, name=path.stem)


def _fan(polys, path) -> np.ndarray:
    tris = []
    for p in polys:
        if len(p) < 3:
            raise ParseError(f"{path}: face with {len(p)} vertices")
        for k in range(1, len(p) - 1):
            tris.append((p[0], p[k], p[k + 1]))
    return np.array(tris, dtype=np.int64).reshape(-1, 3)


def save_ply(mesh: Mesh, path) -> None:
    """Write binary little-endian PLY with double-precision vertex data (lossless)."""
    n = len(mesh.vertices)
    props = [("x", "d"), ("y", "d"), ("z", "d"), ("nx", "d"), ("ny", "d"), ("nz", "d")]
    if mesh.uvs is not None:
        props += [("u", "d"), ("v", "d")]
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += [f"property double {p}" for p, _ in props]
    header += [f"element face {len(mesh.faces)}",
               "property list uchar int vertex_indices", "end_header"]
    dt = np.dtype([(p, "<f8") for p, _ in props])
    rec = np.empty(n, dtype=dt)
    for k, key in enumerate("xyz"):
        rec[key] = mesh.vertices[:, k]
        rec["n" + key] = mesh.normals[:, k]
    if mesh.uvs is not None:
        rec["u"], rec["v"] = mesh.uvs[:, 0], mesh.uvs[:, 1]
    fdt = np.dtype([("k", "u1"), ("i", "<i4", 3)])
    frec = np.empty(len(mesh.faces), dtype=fdt)
    frec["k"] = 3
    frec["i"] = mesh.faces
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(rec.tobytes())
        fh.write(frec.tobytes())


# --- OBJ ---

def _obj_index(tok: str, count: int, path) -> int:
    i = int(tok)
    if i < 0:
        return count + i
    if i == 0:
        raise ParseError(f"{path}: OBJ index 0 is invalid")
    return i - 1


def _load_obj(path: Path) -> Mesh:
    pos, tex, nrm = [], [], []
    # corners are (v, vt, vn) triples; uvs/normals are re-indexed per position
    polys = []
    mtllib = None
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            try:
                if tok[0] == "v":
                    pos.append([float(t) for t in tok[1:4]])
                elif tok[0] == "vt":
                    tex.append([float(t) for t in tok[1:3]])
                elif tok[0] == "vn":
                    nrm.append([float(t) for t in tok[1:4]])
                elif tok[0] == "f":
                    corners = []
                    for c in tok[1:]:
                        parts = c.split("/")
                        vi = _obj_index(parts[0], len(pos), path)
                        ti = _obj_index(parts[1], len(tex), path) if len(parts) > 1 and parts[1] else None
                        ni = _obj_index(parts[2], len(nrm), path) if len(parts) > 2 and parts[2] else None
                        corners.append((vi, ti, ni))
                    polys.append(corners)
                elif tok[0] == "mtllib":
                    mtllib = " ".join(tok[1:])
            except (ValueError, IndexError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    for p in pos:
        if len(p) != 3:
            raise ParseError(f"{path}: vertex with {len(p)} coordinates")

    n = len(pos)
    uvs = np.full((n, 2), np.nan) if tex else None
    normals = np.full((n, 3), np.nan) if nrm else None
    for poly in polys:
        for vi, ti, ni in poly:
            if not 0 <= vi < n:
                raise IndexOutOfRange(f"{path}: face references vertex {vi + 1} of {n}")
            if uvs is not None and ti is not None:
                if not 0 <= ti < len(tex):
                    raise IndexOutOfRange(f"{path}: face references texcoord {ti + 1}")
                uvs[vi] = tex[ti]
            if normals is not None and ni is not None:
                if not 0 <= ni < len(nrm):
                    raise IndexOutOfRange(f"{path}: face references normal {ni + 1}")
                normals[vi] = nrm[ni]
    if uvs is not None and np.isnan(uvs).any():
        uvs = None
    if normals is not None and np.isnan(normals).any():
        normals = None
    faces = _fan([[c[0] for c in poly] for poly in polys], path)

    texture = None
    if mtllib and uvs is not None:
        texture = _load_mtl_texture(path.parent / mtllib)
    return make_mesh(pos, faces, normals, uvs, texture, name=path.stem)


def _load_mtl_texture(mtl_path: Path):
    if not mtl_path.is_file():
        return None
    with open(mtl_path, "r", encoding="utf-8", errors="replace") as fh:
        for line in fh:
            tok = line.split()
            if tok and tok[0] == "map_Kd":
                return load_texture(mtl_path.parent / tok[-1])
    return None


def load_texture(path) -> np.ndarray:
    """PNG (8-bit RGB/RGBA) or PPM (P6) to an (h, w, 3) uint8 array."""
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
