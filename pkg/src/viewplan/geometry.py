"""Meshes, point clouds, poses and the file formats they travel in."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

TABLE_ORIGIN = np.zeros(3)


class MeshFormatError(ValueError):
    """A mesh or point-cloud file could not be parsed."""


class MeshContentError(ValueError):
    """A mesh parsed fine but cannot be used (empty, degenerate)."""


def quantize(points: np.ndarray, resolution: float) -> np.ndarray:
    """Integer lattice keys ``floor(p / resolution)``.

    Every module that bins points into voxels goes through this one
    function, so keys computed anywhere in the package agree exactly.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return np.floor(pts / resolution).astype(np.int64)


def unique_keys(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct rows of ``keys`` (sorted) and the index of each row's first occurrence."""
    if len(keys) == 0:
        return np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64)
    uniq, first = np.unique(keys, axis=0, return_index=True)
    return uniq, first


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(t) == 0:
            raise MeshContentError("mesh has no triangles")
        if len(v) == 0:
            raise MeshContentError("mesh has no vertices")
        if t.min() < 0 or t.max() >= len(v):
            raise MeshContentError(
                f"triangle index out of range [0, {len(v)}): min {t.min()}, max {t.max()}"
            )
        if not np.all(np.isfinite(v)):
            raise MeshContentError("mesh has non-finite vertex coordinates")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def diagonal(self) -> float:
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    @property
    def center(self) -> np.ndarray:
        lo, hi = self.bbox
        return 0.5 * (lo + hi)

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def face_normals(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        n = np.cross(b - a, c - a)
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(norm > 0, norm, 1.0)

    @property
    def area(self) -> float:
        return float(self.triangle_areas().sum())

    @property
    def signed_volume(self) -> float:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def oriented_outward(self) -> "Mesh":
        """Flip every winding when the enclosed volume comes out negative."""
        if self.signed_volume >= 0:
            return self
        return Mesh(self.vertices, self.triangles[:, ::-1])

    @property
    def is_watertight(self) -> bool:
        """True when every undirected edge is shared by exactly two triangles."""
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        edges.sort(axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return bool(np.all(counts == 2))


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    source: Optional[np.ndarray] = None
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise ValueError("point cloud has non-finite coordinates")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)
        if self.normals is not None:
            nrm = np.ascontiguousarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(nrm) != len(p):
                raise ValueError(f"normals ({len(nrm)}) do not match point count ({len(p)})")
            nrm.setflags(write=False)
            object.__setattr__(self, "normals", nrm)
        if self.source is not None:
            s = np.ascontiguousarray(self.source, dtype=np.int64).reshape(-1)
            if len(s) != len(p):
                raise ValueError(f"source tags ({len(s)}) do not match point count ({len(p)})")
            s.setflags(write=False)
            object.__setattr__(self, "source", s)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))

    def subset(self, index) -> "PointCloud":
        src = None if self.source is None else self.source[index]
        nrm = None if self.normals is None else self.normals[index]
        return PointCloud(self.points[index], src, nrm)

    def with_source(self, view_id: int) -> "PointCloud":
        return PointCloud(self.points, np.full(len(self.points), view_id, dtype=np.int64), self.normals)


@dataclass(frozen=True, eq=False)
class Pose:
    """Camera pose; the rotation maps the camera forward axis (+z) into the world."""

    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9) or abs(np.linalg.det(rot) - 1) > 1e-9:
            raise ValueError("orientation is not a proper rotation")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "rotation", rot)

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[:, 2]

    @classmethod
    def look_at(cls, position, target, up=(0.0, 0.0, 1.0)) -> "Pose":
        position = np.asarray(position, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - position
        norm = np.linalg.norm(fwd)
        if norm == 0:
            raise ValueError("camera position coincides with its target")
        fwd = fwd / norm
        up = np.asarray(up, dtype=np.float64)
        if abs(np.dot(up, fwd)) > 1 - 1e-9:
            up = np.array([0.0, 1.0, 0.0]) if abs(fwd[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        # camera x = right, y = down, z = forward
        right = np.cross(fwd, up)
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        return cls(position, np.column_stack([right, down, fwd]))


# --------------------------------------------------------------------------
# Mesh I/O


def load_mesh(path) -> Mesh:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        vertices, faces = _read_obj(path)
    elif suffix == ".ply":
        vertices, faces, _ = _read_ply(path)
        if faces is None:
            raise MeshContentError(f"{path}: PLY file has no face element")
    else:
        raise MeshFormatError(f"{path}: unsupported mesh format {suffix!r} (OBJ or PLY expected)")
    if len(vertices) == 0 or len(faces) == 0:
        raise MeshContentError(f"{path}: empty mesh ({len(vertices)} vertices, {len(faces)} faces)")
    return Mesh(vertices, faces)


def _read_obj(path: Path):
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                try:
                    vertices.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise MeshFormatError(f"{path}:{lineno}: bad vertex line {line.strip()!r}") from None
                if len(vertices[-1]) != 3:
                    raise MeshFormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshFormatError(f"{path}:{lineno}: face needs at least 3 vertices")
                idx = []
                for token in parts[1:]:
                    try:
                        i = int(token.split("/")[0])
                    except ValueError:
                        raise MeshFormatError(f"{path}:{lineno}: bad face index {token!r}") from None
                    i = i - 1 if i > 0 else len(vertices) + i
                    if i < 0 or i >= len(vertices):
                        raise MeshFormatError(
                            f"{path}:{lineno}: face references vertex {token} "
                            f"but only {len(vertices)} vertices are defined"
                        )
                    idx.append(i)
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return np.array(vertices, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply_header(fh, path):
    first = fh.readline()
    if first.strip() != b"ply":
        raise MeshFormatError(f"{path}:1: missing 'ply' magic")
    fmt = None
    elements = []  # (name, count, [(prop, dtype, list_count_dtype or None)])
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise MeshFormatError(f"{path}:{lineno}: header not terminated by end_header")
        parts = raw.decode("ascii", errors="replace").split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "end_header":
            break
        if parts[0] == "format":
            fmt = parts[1]
            if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
                raise MeshFormatError(f"{path}:{lineno}: unknown PLY format {fmt!r}")
        elif parts[0] == "element":
            try:
                elements.append((parts[1], int(parts[2]), []))
            except (IndexError, ValueError):
                raise MeshFormatError(f"{path}:{lineno}: bad element line") from None
        elif parts[0] == "property":
            if not elements:
                raise MeshFormatError(f"{path}:{lineno}: property before any element")
            try:
                if parts[1] == "list":
                    elements[-1][2].append((parts[4], _PLY_TYPES[parts[3]], _PLY_TYPES[parts[2]]))
                else:
                    elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]], None))
            except (IndexError, KeyError):
                raise MeshFormatError(f"{path}:{lineno}: bad property line {raw.strip()!r}") from None
        else:
            raise MeshFormatError(f"{path}:{lineno}: unexpected header line {raw.strip()!r}")
    if fmt is None:
        raise MeshFormatError(f"{path}: PLY header lacks a format line")
    return fmt, elements, lineno


def _read_ply(path: Path):
    """Return (vertices, faces or None, vertex property dict)."""
    with open(path, "rb") as fh:
        fmt, elements, lineno = _parse_ply_header(fh, path)
        data = {}
        if fmt == "ascii":
            text = fh.read().decode("ascii", errors="replace").splitlines()
            cursor = 0
            for name, count, props in elements:
                rows = []
                for _ in range(count):
                    while cursor < len(text) and not text[cursor].strip():
                        cursor += 1
                    if cursor >= len(text):
                        raise MeshFormatError(f"{path}:{lineno + cursor + 1}: unexpected end of file in {name}")
                    tokens = text[cursor].split()
                    try:
                        rows.append(_ascii_row(tokens, props))
                    except (ValueError, IndexError):
                        raise MeshFormatError(
                            f"{path}:{lineno + cursor + 1}: cannot parse {name} row {text[cursor]!r}"
                        ) from None
                    cursor += 1
                data[name] = rows
        else:
            endian = "<" if fmt == "binary_little_endian" else ">"
            for name, count, props in elements:
                data[name] = _binary_rows(fh, path, name, count, props, endian)
    return _ply_to_arrays(path, elements, data)


def _ascii_row(tokens, props):
    row = []
    pos = 0
    for _, dtype, list_dtype in props:
        if list_dtype is None:
            row.append(float(tokens[pos]) if dtype.startswith("f") else int(tokens[pos]))
            pos += 1
        else:
            n = int(tokens[pos])
            row.append([int(t) for t in tokens[pos + 1 : pos + 1 + n]])
            if len(row[-1]) != n:
                raise ValueError
            pos += 1 + n
    return row


def _binary_rows(fh, path, name, count, props, endian):
    if all(p[2] is None for p in props):
        dt = np.dtype([(p[0], endian + p[1]) for p in props])
        buf = fh.read(dt.itemsize * count)
        if len(buf) != dt.itemsize * count:
            raise MeshFormatError(f"{path}: truncated binary data in element {name!r}")
        return np.frombuffer(buf, dtype=dt)
    # one list property of triangles is by far the common case
    if len(props) == 1 and props[0][2] is not None:
        prop, dtype, cdtype = props[0]
        dt = np.dtype([("n", endian + cdtype), ("v", endian + dtype, (3,))])
        start = fh.tell()
        buf = fh.read(dt.itemsize * count)
        if len(buf) == dt.itemsize * count:
            arr = np.frombuffer(buf, dtype=dt)
            if np.all(arr["n"] == 3):
                return [[list(v)] for v in arr["v"]]
        fh.seek(start)
    rows = []
    for i in range(count):
        row = []
        for prop, dtype, cdtype in props:
            if cdtype is None:
                row.append(_read_scalar(fh, path, name, i, endian + dtype))
            else:
                n = int(_read_scalar(fh, path, name, i, endian + cdtype))
                row.append([int(_read_scalar(fh, path, name, i, endian + dtype)) for _ in range(n)])
        rows.append(row)
    return rows


def _read_scalar(fh, path, name, i, dtype):
    dt = np.dtype(dtype)
    buf = fh.read(dt.itemsize)
    if len(buf) != dt.itemsize:
        raise MeshFormatError(f"{path}: truncated binary data in element {name!r} row {i}")
    return np.frombuffer(buf, dtype=dt)[0]


def _ply_to_arrays(path, elements, data):
    spec = {name: props for name, _, props in elements}
    if "vertex" not in data:
        raise MeshContentError(f"{path}: PLY file has no vertex element")
    names = [p[0] for p in spec["vertex"]]
    verts = data["vertex"]
    if isinstance(verts, np.ndarray):
        try:
            vertices = np.column_stack([verts[k].astype(np.float64) for k in ("x", "y", "z")])
        except ValueError:
            raise MeshFormatError(f"{path}: vertex element lacks x/y/z") from None
        extra = {k: np.array(verts[k]) for k in names if k not in ("x", "y", "z")}
    else:
        try:
            cols = [names.index(k) for k in ("x", "y", "z")]
        except ValueError:
            raise MeshFormatError(f"{path}: vertex element lacks x/y/z") from None
        vertices = np.array([[row[c] for c in cols] for row in verts], dtype=np.float64).reshape(-1, 3)
        extra = {k: np.array([row[names.index(k)] for row in verts]) for k in names if k not in ("x", "y", "z")}
    faces = None
    if "face" in data:
        faces = []
        n = len(vertices)
        for fi, row in enumerate(data["face"]):
            idx = row[0] if isinstance(row, list) else list(row[0])
            if len(idx) < 3:
                raise MeshFormatError(f"{path}: face {fi} has fewer than 3 vertices")
            for k in idx:
                if k < 0 or k >= n:
                    raise MeshFormatError(f"{path}: face {fi} references vertex {k} of {n}")
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
        faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    return vertices, faces, extra


def save_mesh_ply(mesh: Mesh, path) -> None:
    """Binary little-endian PLY with float64 vertices and int32 triangles."""
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {len(mesh.vertices)}\n"
        "property double x\nproperty double y\nproperty double z\n"
        f"element face {len(mesh.triangles)}\n"
        "property list uchar int vertex_indices\nend_header\n"
    )
    faces = np.zeros(len(mesh.triangles), dtype=np.dtype([("n", "u1"), ("v", "<i4", (3,))]))
    faces["n"] = 3
    faces["v"] = mesh.triangles
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(mesh.vertices.astype("<f8").tobytes())
        fh.write(faces.tobytes())


def save_obj(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write("v %r %r %r\n" % tuple(float(x) for x in v))
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def save_point_cloud(cloud: PointCloud, path) -> None:
    """Binary little-endian PLY, x/y/z float64 plus an optional uint16 ``view`` property."""
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if cloud.source is not None:
        fields.append(("view", "<u2"))
    rec = np.zeros(len(cloud), dtype=np.dtype(fields))
    rec["x"], rec["y"], rec["z"] = cloud.points.T
    header = "ply\nformat binary_little_endian 1.0\n" f"element vertex {len(cloud)}\n"
    header += "property double x\nproperty double y\nproperty double z\n"
    if cloud.source is not None:
        rec["view"] = cloud.source
        header += "property ushort view\n"
    header += "end_header\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(rec.tobytes())


def load_point_cloud(path) -> PointCloud:
    vertices, _, extra = _read_ply(Path(path))
    return PointCloud(vertices, extra.get("view"))


# --------------------------------------------------------------------------
# Mesh operations


def normalize_mesh(mesh: Mesh, target_diameter: float, origin: Sequence[float] = TABLE_ORIGIN) -> Mesh:
    """Uniformly scale to the given bbox diagonal and stand the mesh on the table.

    The bbox center lands on ``origin`` in x/y and the lowest vertex on the
    table plane ``z = origin[2]``.
    """
    if not target_diameter > 0:
        raise ValueError(f"target_diameter must be positive, got {target_diameter}")
    diag = mesh.diagonal
    if diag <= 0:
        raise MeshContentError("cannot normalize a zero-extent mesh")
    origin = np.asarray(origin, dtype=np.float64)
    scale = target_diameter / diag
    lo, hi = mesh.bbox
    shift = np.array([0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), lo[2]])
    vertices = (mesh.vertices - shift) * scale + origin
    return Mesh(vertices, mesh.triangles)


def sample_surface(mesh: Mesh, spacing: float, seed: int = 0, oversample: float = 4.0) -> PointCloud:
    """Area-weighted random surface samples, thinned to one point per spacing cell.

    Each sample carries the normal of the triangle it came from.
    ``oversample`` times the ``area / spacing**2`` estimate is drawn before
    the grid deduplication, which keeps the first draw in every cell.
    """
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    rng = np.random.default_rng(seed)
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0:
        raise MeshContentError("mesh has zero surface area")
    count = max(int(np.ceil(oversample * total / spacing**2)), 1)
    tri = rng.choice(len(areas), size=count, p=areas / total)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    a, b, c = (mesh.vertices[mesh.triangles[tri, i]] for i in range(3))
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    _, first = unique_keys(quantize(pts, spacing))
    keep = np.sort(first)
    return PointCloud(pts[keep], normals=mesh.face_normals()[tri[keep]])


# --------------------------------------------------------------------------
# Primitive shapes (test objects and toy datasets)


def make_box(size=(1.0, 1.0, 1.0)) -> Mesh:
    sx, sy, sz = (0.5 * s for s in size)
    v = np.array([[x, y, z] for x in (-sx, sx) for y in (-sy, sy) for z in (-sz, sz)])
    # outward-facing triangles, vertex index = 4*ix + 2*iy + iz
    t = [
        [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],  # -x, +x
        [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],  # -y, +y
        [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],  # -z, +z
    ]
    return Mesh(v, t)


def make_icosphere(radius: float = 1.0, subdivisions: int = 3) -> Mesh:
    phi = (1 + 5**0.5) / 2
    verts = [
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ]
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    verts = [list(np.array(v) / np.linalg.norm(v)) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = np.add(verts[i], verts[j])
                verts.append(list(m / np.linalg.norm(m)))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    return Mesh(np.array(verts) * radius, faces)


def make_cylinder(radius: float = 0.5, height: float = 1.0, segments: int = 48) -> Mesh:
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    bottom = np.column_stack([ring, np.full(segments, -height / 2)])
    top = np.column_stack([ring, np.full(segments, height / 2)])
    v = np.vstack([bottom, top, [[0, 0, -height / 2], [0, 0, height / 2]]])
    cb, ct = 2 * segments, 2 * segments + 1
    t = []
    for i in range(segments):
        j = (i + 1) % segments
        t += [[i, j, segments + j], [i, segments + j, segments + i]]
        t += [[cb, j, i], [ct, segments + i, segments + j]]
    return Mesh(v, t)


def make_cone(radius: float = 0.5, height: float = 1.0, segments: int = 48) -> Mesh:
    ang = 2 * np.pi * np.arange(segments) / segments
    base = np.column_stack([radius * np.cos(ang), radius * np.sin(ang), np.full(segments, -height / 2)])
    v = np.vstack([base, [[0, 0, height / 2], [0, 0, -height / 2]]])
    apex, cb = segments, segments + 1
    t = []
    for i in range(segments):
        j = (i + 1) % segments
        t += [[i, j, apex], [cb, j, i]]
    return Mesh(v, t)


def make_torus(major: float = 0.35, minor: float = 0.15, segments: int = 48, rings: int = 24) -> Mesh:
    u = 2 * np.pi * np.arange(segments) / segments
    w = 2 * np.pi * np.arange(rings) / rings
    uu, ww = np.meshgrid(u, w, indexing="ij")
    x = (major + minor * np.cos(ww)) * np.cos(uu)
    y = (major + minor * np.cos(ww)) * np.sin(uu)
    z = minor * np.sin(ww)
    v = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    t = []
    for i in range(segments):
        for j in range(rings):
            a = i * rings + j
            b = ((i + 1) % segments) * rings + j
            c = ((i + 1) % segments) * rings + (j + 1) % rings
            d = i * rings + (j + 1) % rings
            t += [[a, b, c], [a, c, d]]
    return Mesh(v, t)


def merge_meshes(meshes: Sequence[Mesh], offsets: Sequence[Sequence[float]]) -> Mesh:
    verts, tris, base = [], [], 0
    for m, off in zip(meshes, offsets):
        verts.append(m.vertices + np.asarray(off, dtype=np.float64))
        tris.append(m.triangles + base)
        base += len(m.vertices)
    return Mesh(np.vstack(verts), np.vstack(tris))


def toy_objects() -> dict[str, Mesh]:
    """A fixed zoo of primitive shapes used by tests, demos and toy datasets."""
    return {
        "box": make_box((1.0, 0.8, 0.6)),
        "sphere": make_icosphere(0.5, 3),
        "cylinder": make_cylinder(0.35, 1.0),
        "cone": make_cone(0.5, 0.9),
        "slab": make_box((1.0, 1.0, 0.3)),
        "capsule": merge_meshes(
            [make_cylinder(0.3, 0.6), make_icosphere(0.3, 2), make_icosphere(0.3, 2)],
            [(0, 0, 0), (0, 0, 0.3), (0, 0, -0.3)],
        ),
        "torus": make_torus(),
        "tower": merge_meshes([make_box((0.8, 0.8, 0.4)), make_box((0.4, 0.4, 0.6))], [(0, 0, 0), (0, 0, 0.5)]),
    }
