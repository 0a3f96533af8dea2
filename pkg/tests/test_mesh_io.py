import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from vgtbench.mesh_io import (DegenerateMesh, EmptyMesh, IndexOutOfRange, ParseError, load_mesh,
                              make_mesh, mesh_aabb, normalize_mesh, save_ply)

CUBE_V = [(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)]
CUBE_Q = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
CUBE_T = [(q[0], q[k], q[k + 1]) for q in CUBE_Q for k in (1, 2)]


def ascii_ply(vertices, faces, extra_vertex_props=()):
    lines = ["ply", "format ascii 1.0", "comment test", f"element vertex {len(vertices)}",
             "property float x", "property float y", "property float z"]
    lines += [f"property float {p}" for p in extra_vertex_props]
    lines += [f"element face {len(faces)}", "property list uchar int vertex_indices", "end_header"]
    lines += [" ".join(str(c) for c in v) for v in vertices]
    lines += [f"{len(f)} " + " ".join(str(i) for i in f) for f in faces]
    return "\n".join(lines) + "\n"


def test_load_ascii_ply_cube(tmp_path):
    p = tmp_path / "cube.ply"
    p.write_text(ascii_ply(CUBE_V, CUBE_T))
    m = load_mesh(p)
    assert m.vertices.shape == (8, 3)
    assert m.faces.shape == (12, 3)
    assert m.name == "cube"
    assert np.allclose(np.linalg.norm(m.normals, axis=1), 1.0, atol=1e-12)


def test_ply_quads_are_fanned(tmp_path):
    p = tmp_path / "quads.ply"
    p.write_text(ascii_ply(CUBE_V, CUBE_Q))
    assert len(load_mesh(p).faces) == 12


def test_ply_index_out_of_range(tmp_path):
    p = tmp_path / "bad.ply"
    p.write_text(ascii_ply(CUBE_V, [(0, 1, 8)]))
    with pytest.raises(IndexOutOfRange):
        load_mesh(p)


def test_ply_without_faces_is_empty(tmp_path):
    p = tmp_path / "empty.ply"
    p.write_text(ascii_ply(CUBE_V, []))
    with pytest.raises(EmptyMesh):
        load_mesh(p)


@pytest.mark.parametrize("text", [
    "plx\nformat ascii 1.0\nend_header\n",
    "ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n",
    "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
    "element face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0\n",
    "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n0\n",
])
def test_ply_parse_errors(tmp_path, text):
    p = tmp_path / "broken.ply"
    p.write_text(text)
    with pytest.raises(ParseError):
        load_mesh(p)


def test_binary_ply_with_normals_and_uvs(tmp_path):
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype="<f4")
    header = ("ply\nformat binary_little_endian 1.0\nelement vertex 4\n"
              "property float x\nproperty float y\nproperty float z\n"
              "property float nx\nproperty float ny\nproperty float nz\n"
              "property float u\nproperty float v\n"
              "element face 1\nproperty list uchar int vertex_indices\nend_header\n")
    rec = np.zeros((4, 8), dtype="<f4")
    rec[:, :3] = v
    rec[:, 5] = 1.0
    rec[:, 6:8] = v[:, :2]
    body = rec.tobytes() + bytes([4]) + np.array([0, 1, 3, 2], dtype="<i4").tobytes()
    p = tmp_path / "quad.ply"
    p.write_bytes(header.encode() + body)
    m = load_mesh(p)
    assert m.faces.tolist() == [[0, 1, 3], [0, 3, 2]]
    assert np.array_equal(m.normals, np.tile([0.0, 0.0, 1.0], (4, 1)))
    assert np.array_equal(m.uvs, v[:, :2].astype(float))


def test_save_load_roundtrip_is_exact(tmp_path, relief):
    p = tmp_path / "relief.ply"
    save_ply(relief, p)
    back = load_mesh(p)
    assert np.array_equal(back.vertices, relief.vertices)
    assert np.array_equal(back.faces, relief.faces)


def test_obj_quads_negative_indices_and_texture(tmp_path):
    Image.fromarray(np.full((4, 4, 3), 200, np.uint8)).save(tmp_path / "tex.png")
    (tmp_path / "m.mtl").write_text("newmtl a\nmap_Kd tex.png\n")
    (tmp_path / "m.obj").write_text(
        "mtllib m.mtl\n"
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\n"
        "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\n"
        "f 1/1 2/2 3/3 4/4\n"
        "f -6/1 -5/2 -1/3 -2/4\n")
    m = load_mesh(tmp_path / "m.obj")
    assert len(m.faces) == 4  # 2 quads -> 4 triangles
    assert m.faces[2].tolist() == [0, 1, 5]
    assert m.textured and m.texture.shape == (4, 4, 3)


def test_obj_out_of_range(tmp_path):
    (tmp_path / "bad.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n")
    with pytest.raises(IndexOutOfRange):
        load_mesh(tmp_path / "bad.obj")


def test_ppm_texture(tmp_path):
    from vgtbench.mesh_io import load_texture

    img = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    (tmp_path / "t.ppm").write_bytes(b"P6\n3 2\n255\n" + img.tobytes())
    assert np.array_equal(load_texture(tmp_path / "t.ppm"), img)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_mesh("/nonexistent/mesh.ply")


def test_normalize_offset_cube():
    v = np.array(CUBE_V, dtype=float) * 4 - 2 + 5  # corners at +-2 around (5,5,5)
    m = normalize_mesh(make_mesh(v, CUBE_T))
    assert np.allclose(m.vertices.mean(axis=0), 0, atol=1e-12)
    assert math.isclose(np.linalg.norm(m.vertices, axis=1).max(), 1.0, abs_tol=1e-12)


def test_normalize_is_idempotent(relief):
    again = normalize_mesh(relief)
    assert np.abs(again.vertices - relief.vertices).max() <= 1e-9
    assert np.array_equal(again.normals, relief.normals)


def test_normalize_degenerate():
    m = make_mesh([(1, 2, 3)] * 3, [(0, 1, 2)])
    with pytest.raises(DegenerateMesh):
        normalize_mesh(m)
    # normals stay unit even for zero-area faces
    assert np.allclose(np.linalg.norm(m.normals, axis=1), 1.0)


def test_aabb_of_normalized_cube(cube):
    lo, hi = mesh_aabb(cube)
    # corner of a centred cube at radius 1 sits at 1/sqrt(3) on every axis
    assert np.allclose(hi, 1 / math.sqrt(3), atol=1e-12)
    assert np.allclose(lo, -1 / math.sqrt(3), atol=1e-12)


def test_aabb_single_triangle():
    lo, hi = mesh_aabb(make_mesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)]))
    assert lo.tolist() == [0, 0, 0] and hi.tolist() == [1, 1, 0]


def test_mesh_is_immutable(cube):
    with pytest.raises(ValueError):
        cube.vertices[0, 0] = 5.0


coords = st.floats(-1e3, 1e3, allow_nan=False)


@st.composite
def random_meshes(draw):
    n = draw(st.integers(3, 30))
    v = np.array(draw(st.lists(st.tuples(coords, coords, coords), min_size=n, max_size=n)))
    m = draw(st.integers(1, 30))
    f = draw(st.lists(st.tuples(*[st.integers(0, n - 1)] * 3), min_size=m, max_size=m))
    return make_mesh(v, f)


@settings(max_examples=60, deadline=None)
@given(random_meshes())
def test_aabb_contains_vertices_and_normals_unit(m):
    lo, hi = mesh_aabb(m)
    assert np.all(m.vertices >= lo) and np.all(m.vertices <= hi)
    assert np.allclose(np.linalg.norm(m.normals, axis=1), 1.0, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(random_meshes())
def test_normalize_invariants(m):
    try:
        n1 = normalize_mesh(m)
    except DegenerateMesh:
        return
    assert np.allclose(n1.vertices.mean(axis=0), 0, atol=1e-6)
    assert abs(np.linalg.norm(n1.vertices, axis=1).max() - 1.0) < 1e-6
    n2 = normalize_mesh(n1)
    assert np.abs(n2.vertices - n1.vertices).max() <= 1e-9
