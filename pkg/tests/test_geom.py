import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import greedy_pairs_direct
from vgtbench.detect import InterestPoint
from vgtbench.geom import (MODE_2D, MODE_3D, PreselectMode, WorldPoint, bbox_tolerance, cull_bbox,
                           greedy_match, lift_points, overlap_filter, preselect,
                           to_reference_frame, world_distance, write_pairs_csv)
from vgtbench.mesh_io import mesh_aabb
from vgtbench.raster import make_transform, render


def wp(world, u=0, v=0, scene=1):
    return WorldPoint(u, v, tuple(float(x) for x in world), scene)


def points_from(coords, scene=1):
    # distinct pixels so keys are unique
    return [wp(c, u=i % 50, v=i // 50, scene=scene) for i, c in enumerate(coords)]


# --- lifting and frames ---

def test_lift_points_reads_gbuffer_and_drops_background(cube, camera):
    gb = render(cube, make_transform("Identity"), camera)
    vs, us = np.nonzero(gb.mask)
    fg = InterestPoint(int(us[0]), int(vs[0]), 1.0, "HarrisA")
    bg = InterestPoint(0, 0, 1.0, "HarrisA")
    assert not gb.mask[0, 0]
    lifted, dropped = lift_points([fg, bg], gb, scene_index=3)
    assert dropped == 1 and len(lifted) == 1
    assert lifted[0].world == tuple(gb.world_pos[fg.v, fg.u])
    assert lifted[0].scene_index == 3 and lifted[0].source is fg
    assert lift_points([bg, bg], gb) == ([], 2)


def test_to_reference_frame_examples():
    (p,) = to_reference_frame([wp((0, 1, 0))], make_transform("RotZ", 90))
    assert np.allclose(p.world, (1, 0, 0), atol=1e-12)
    (p,) = to_reference_frame([wp((2, 4, 1))], make_transform("ScaleXY", 2))
    assert p.world == (1.0, 2.0, 1.0)
    same = [wp((0.3, 0.2, 0.1))]
    assert to_reference_frame(same, make_transform("Identity")) == same


def test_transform_round_trip(rng):
    pts = rng.normal(size=(100, 3))
    for kind, val in (("RotX", 30), ("RotY", -50), ("RotZ", 170), ("ScaleXY", 3.25)):
        t = make_transform(kind, val)
        back = to_reference_frame(points_from(t.apply(pts)), t)
        assert np.abs(np.array([p.world for p in back]) - pts).max() < 1e-6


def test_cull_bbox(cube):
    aabb = mesh_aabb(cube)
    tol = bbox_tolerance(aabb)
    lo, hi = aabb
    assert tol == pytest.approx(2e-3)  # diagonal of the unit-radius cube is 2
    centre = wp((lo + hi) / 2)
    outside = wp(hi + 2 * tol)
    assert cull_bbox([centre, outside], aabb, tol) == [centre]
    on_face = wp((hi[0], 0, 0))
    assert cull_bbox([on_face], aabb, 0.0) == [on_face]
    just_out = wp((np.nextafter(hi[0], 2), 0, 0))
    assert cull_bbox([just_out], aabb, 0.0) == []


def test_overlap_filter(camera):
    ident = make_transform("Identity")
    refs = points_from([(0, 0, 0), (0.5, 0.5, 0)])
    cands = points_from([(0.1, 0, 0)])
    assert overlap_filter(refs, cands, ident, camera) == (refs, cands)
    # a reference point whose transformed projection lands at u = -5
    f = camera.focal
    x_at_u = (-5 + 0.5 - camera.width / 2) / f * 3.0
    t = make_transform("ScaleXY", 2)
    far_left = wp((x_at_u / 2, 0, 0))
    uv, _ = camera.project(t.apply(np.array([far_left.world])))
    assert uv[0, 0] < 0
    kept_r, kept_c = overlap_filter([far_left] + refs, cands, t, camera)
    assert far_left not in kept_r
    assert set(kept_r) <= set([far_left] + refs) and set(kept_c) <= set(cands)


def test_overlap_filter_candidate_side(camera):
    cand_off = wp((5.0, 0, 0))
    kept_r, kept_c = overlap_filter([], [cand_off, wp((0, 0, 0))], make_transform("RotZ", 10), camera)
    assert kept_r == [] and kept_c == [wp((0, 0, 0))]


# --- distances and pairing ---

def test_world_distance_examples():
    assert world_distance((0, 0, 0), (1, 2, 2), MODE_3D) == 3.0
    assert world_distance((0, 0, 0), (3, 4, 100), MODE_2D) == 5.0
    for mode in ("2D", "3D", 2, 3):
        assert world_distance((1, 2, 3), (1, 2, 3), mode) == 0.0


def test_preselect_mode_parsing():
    assert PreselectMode.parse("2d") == MODE_2D and PreselectMode.parse(3) == MODE_3D
    with pytest.raises(ValueError):
        PreselectMode(4)


def test_preselect_2d_3d_divergence():
    ref = [wp((0, 0, 0), 1, 1)]
    near_xy = wp((0, 0, 5), 2, 2)
    near_3d = wp((1, 0, 0), 3, 3)
    p2 = preselect(ref, [near_xy, near_3d], MODE_2D)
    p3 = preselect(ref, [near_xy, near_3d], MODE_3D)
    assert p2.pairs[0].cand == near_xy and p2.pairs[0].dist2 == 0.0 and p2.pairs[0].dist3 == 5.0
    assert p3.pairs[0].cand == near_3d and p3.pairs[0].dist3 == 1.0


def brute_force_optimal(refs, cands, dims):
    """Minimum total distance over all maximum-cardinality assignments."""
    best = None
    k = min(len(refs), len(cands))
    for rs in itertools.permutations(range(len(refs)), k):
        for cs in itertools.permutations(range(len(cands)), k):
            cost = sum(world_distance(refs[i].world, cands[j].world, dims) for i, j in zip(rs, cs))
            pairs = frozenset(zip(rs, cs))
            if best is None or cost < best[0]:
                best = (cost, pairs)
    return best


def test_preselect_far_reference_unmatched():
    refs = [wp((0, 0, 0), 0, 0), wp((10, 0, 0), 1, 0)]
    cands = [wp((1, 0, 0), 5, 5)]
    for mode in (MODE_2D, MODE_3D):
        ps = preselect(refs, cands, mode)
        assert [(p.ref.world, p.cand.world) for p in ps.pairs] == [((0, 0, 0), (1, 0, 0))]
        assert (ps.ref_count, ps.cand_count) == (2, 1)
        _, opt = brute_force_optimal(refs, cands, mode.dims)
        assert opt == frozenset({(0, 0)})


def test_preselect_empty():
    ps = preselect(points_from([(0, 0, 0), (1, 1, 1)]), [], MODE_3D)
    assert len(ps) == 0 and ps.ref_count == 2 and ps.cand_count == 0
    assert greedy_match(np.zeros((0, 4))) == []


def test_identity_scene_pairs_every_point_with_itself(rng):
    pts = points_from(rng.normal(size=(40, 3)))
    for mode in (MODE_2D, MODE_3D):
        ps = preselect(pts, pts, mode)
        assert len(ps) == 40
        assert all(p.ref == p.cand and p.dist2 == 0 and p.dist3 == 0 for p in ps.pairs)


def _pair_keys(pairs):
    return [(p.ref.key, p.cand.key) for p in pairs]


@pytest.mark.parametrize("integer", [False, True])
def test_greedy_matches_oracle(rng, integer):
    for _ in range(60):
        n, m = rng.integers(0, 51, size=2)
        if integer:
            # small integer lattice: many exact distance ties
            a, b = rng.integers(0, 4, size=(n, 3)), rng.integers(0, 4, size=(m, 3))
        else:
            a, b = rng.normal(size=(n, 3)), rng.normal(size=(m, 3))
        refs = points_from(a)
        cands = points_from(b)
        rng.shuffle(refs)
        rng.shuffle(cands)
        for dims in (2, 3):
            got = preselect(refs, cands, dims)
            want = greedy_pairs_direct(refs, cands, dims)
            assert sorted(_pair_keys(got.pairs)) == sorted((r.key, c.key) for r, c in want)
            r_keys = [p.ref.key for p in got.pairs]
            c_keys = [p.cand.key for p in got.pairs]
            assert len(set(r_keys)) == len(r_keys) and len(set(c_keys)) == len(c_keys)
            assert len(got) <= min(n, m)
            if n and m:
                assert len(got) == min(n, m)


def test_pair_distances_recorded(rng):
    refs = points_from(rng.normal(size=(10, 3)))
    cands = points_from(rng.normal(size=(12, 3)))
    for p in preselect(refs, cands, MODE_2D).pairs:
        assert p.dist2 == world_distance(p.ref.world, p.cand.world, 2)
        assert p.dist3 == world_distance(p.ref.world, p.cand.world, 3)


finite = st.floats(-10, 10, allow_nan=False)
xyz = st.tuples(finite, finite, finite)


@settings(max_examples=300, deadline=None)
@given(xyz, st.lists(xyz, min_size=1, max_size=12))
def test_cross_dominance(ref, cands):
    refs = [wp(ref)]
    cps = points_from(cands)
    (p2,) = preselect(refs, cps, MODE_2D).pairs
    (p3,) = preselect(refs, cps, MODE_3D).pairs
    assert p2.dist2 <= p3.dist2
    assert p3.dist3 <= p2.dist3


def test_write_pairs_csv(tmp_path):
    ps = preselect([wp((0, 0, 0), 1, 2)], [wp((3, 4, 12), 5, 6)], MODE_3D)
    write_pairs_csv(ps, tmp_path / "pairs.csv")
    lines = (tmp_path / "pairs.csv").read_text().splitlines()
    assert lines == ["ref_u,ref_v,cand_u,cand_v,dist2,dist3", "1,2,5,6,5.0,13.0"]
