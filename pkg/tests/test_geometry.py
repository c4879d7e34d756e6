import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viewplan.geometry import (
    Mesh, MeshContentError, MeshFormatError, PointCloud, Pose, load_mesh, load_point_cloud, make_box,
    normalize_mesh, quantize, sample_surface, save_mesh_ply, save_obj, save_point_cloud, toy_objects,
)

CUBE_OBJ = """# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


def test_load_unit_cube_obj(tmp_path):
    p = tmp_path / "cube.obj"
    p.write_text(CUBE_OBJ)
    mesh = load_mesh(p)
    assert mesh.vertices.shape == (8, 3)
    assert mesh.triangles.shape == (12, 3)
    assert mesh.is_watertight


def test_obj_bad_index_names_line(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text(CUBE_OBJ + "f 1 2 9\n")
    with pytest.raises(MeshFormatError, match=":21:|vertex 9|index"):
        load_mesh(p)


def test_obj_garbage_line_reported(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 x\n")
    with pytest.raises(MeshFormatError, match=":2:"):
        load_mesh(p)


def test_obj_quads_and_negative_indices(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\n")
    mesh = load_mesh(p)
    assert mesh.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_empty_mesh_is_content_error(tmp_path):
    p = tmp_path / "empty.obj"
    p.write_text("# nothing\n")
    with pytest.raises(MeshContentError):
        load_mesh(p)


def test_unknown_suffix(tmp_path):
    p = tmp_path / "m.stl"
    p.write_text("solid")
    with pytest.raises(MeshFormatError):
        load_mesh(p)


def test_ply_ascii_bbox_matches_vertices(tmp_path, rng):
    verts = rng.normal(size=(30, 3))
    faces = rng.integers(0, 30, size=(20, 3))
    lines = ["ply", "format ascii 1.0", "comment scanner export", f"element vertex {len(verts)}",
             "property float x", "property float y", "property float z", "property uchar red",
             f"element face {len(faces)}", "property list uchar int vertex_indices", "end_header"]
    lines += [f"{x:.6f} {y:.6f} {z:.6f} 7" for x, y, z in verts]
    lines += [f"3 {a} {b} {c}" for a, b, c in faces]
    p = tmp_path / "scan.ply"
    p.write_text("\n".join(lines) + "\n")
    mesh = load_mesh(p)
    parsed = np.array([[float(t) for t in l.split()[:3]] for l in lines[11 : 11 + len(verts)]])
    lo, hi = mesh.bbox
    np.testing.assert_array_equal(lo, parsed.min(axis=0))
    np.testing.assert_array_equal(hi, parsed.max(axis=0))
    np.testing.assert_array_equal(mesh.triangles, faces)


def test_binary_ply_and_obj_roundtrip(tmp_path):
    mesh = toy_objects()["tower"]
    save_mesh_ply(mesh, tmp_path / "t.ply")
    save_obj(mesh, tmp_path / "t.obj")
    for name in ("t.ply", "t.obj"):
        back = load_mesh(tmp_path / name)
        np.testing.assert_array_equal(back.vertices, mesh.vertices)
        np.testing.assert_array_equal(back.triangles, mesh.triangles)


def test_point_cloud_roundtrip(tmp_path, rng):
    cloud = PointCloud(rng.normal(size=(50, 3)), source=rng.integers(0, 32, 50))
    save_point_cloud(cloud, tmp_path / "c.ply")
    back = load_point_cloud(tmp_path / "c.ply")
    np.testing.assert_array_equal(back.points, cloud.points)
    np.testing.assert_array_equal(back.source, cloud.source)


def test_point_cloud_rejects_bad_input():
    with pytest.raises(ValueError):
        PointCloud(np.array([[0.0, np.nan, 0.0]]))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((3, 3)), source=np.zeros(2))


def test_mesh_rejects_bad_index():
    with pytest.raises(MeshContentError):
        Mesh(np.zeros((3, 3)), np.array([[0, 1, 3]]))


def test_normalize_unit_cube():
    out = normalize_mesh(make_box((1, 1, 1)), 0.1)
    lo, hi = out.bbox
    assert out.diagonal == pytest.approx(0.1, abs=1e-12)
    assert lo[2] == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose((lo + hi)[:2], 0.0, atol=1e-15)


@pytest.mark.parametrize("name", sorted(toy_objects()))
def test_normalize_scales_diagonal_and_is_idempotent(name):
    mesh = toy_objects()[name]
    out = normalize_mesh(mesh, 0.15)
    assert out.diagonal / mesh.diagonal == pytest.approx(0.15 / mesh.diagonal, rel=1e-12)
    again = normalize_mesh(out, 0.15)
    np.testing.assert_allclose(again.vertices, out.vertices, atol=1e-9)


def test_normalize_degenerate():
    with pytest.raises(MeshContentError):
        normalize_mesh(Mesh(np.zeros((3, 3)), np.array([[0, 1, 2]])), 0.1)


@pytest.mark.parametrize("name", sorted(toy_objects()))
def test_toys_are_outward_and_closed(name):
    mesh = toy_objects()[name]
    assert mesh.signed_volume > 0
    if name not in ("capsule", "tower"):
        assert mesh.is_watertight


def test_sample_square_stays_inside():
    sq = Mesh(np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float), np.array([[0, 1, 2], [0, 2, 3]]))
    pts = sample_surface(sq, 0.5, seed=3).points
    assert np.all((pts[:, :2] >= 0) & (pts[:, :2] <= 1)) and np.all(pts[:, 2] == 0)


def test_sample_deterministic_and_dense_enough():
    cube = normalize_mesh(make_box((1, 1, 1)), 0.1 * np.sqrt(3))
    a = sample_surface(cube, 0.002, seed=9)
    b = sample_surface(cube, 0.002, seed=9)
    np.testing.assert_array_equal(a.points, b.points)
    expected = cube.area / 0.002**2
    assert abs(len(a) - expected) <= 0.2 * expected
    assert len(np.unique(quantize(a.points, 0.002), axis=0)) == len(a)


def test_sample_normals_point_outward():
    cube = make_box((1, 1, 1))
    s = sample_surface(cube, 0.1, seed=0)
    assert np.all(np.einsum("ij,ij->i", s.points, s.normals) > 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_look_at_is_proper_rotation(pos, target):
    pos, target = np.array(pos), np.array(target)
    if np.linalg.norm(target - pos) < 1e-3:
        return
    pose = Pose.look_at(pos, target)
    R = pose.rotation
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-9)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(pose.forward, (target - pos) / np.linalg.norm(target - pos), atol=1e-9)


def test_pose_rejects_reflection():
    with pytest.raises(ValueError):
        Pose(np.zeros(3), np.diag([1.0, 1.0, -1.0]))
