"""Triangulated planar domains: point location, barycentric coordinates, mesh I/O.

Points are plain ``(..., 2)`` float arrays with columns ``(z1, z2)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DegenerateTriangle, InvalidMesh, ParseError

OUTSIDE = -1
DEGENERACY_TOL = 1e-12
LOCATE_TOL = 1e-10


def _edge_key(a, b):
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True, eq=False)
class TriangulationMesh:
    """A conforming triangulation of a polygonal domain.

    Parameters
    ----------
    vertices : array_like, shape (V, 2)
    triangles : array_like of int, shape (M, 3)
        Vertex indices; orientation may be either way.
    name : str, optional
        Free-form label carried into reports.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=float))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 2:
            raise InvalidMesh("vertices must have shape (V, 2)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise InvalidMesh("triangles must have shape (M, 3)")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        self._validate()

    def _validate(self):
        v, t = self.vertices, self.triangles
        if not np.all(np.isfinite(v)):
            raise InvalidMesh("vertex coordinates must be finite")
        if len(t) == 0:
            raise InvalidMesh("mesh has no triangles")
        if t.min() < 0 or t.max() >= len(v):
            bad = int(np.flatnonzero((t < 0).any(1) | (t >= len(v)).any(1))[0])
            raise InvalidMesh(f"triangle {bad} has a vertex index out of range")
        if np.any(t[:, 0] == t[:, 1]) or np.any(t[:, 1] == t[:, 2]) or np.any(t[:, 0] == t[:, 2]):
            raise InvalidMesh("triangle with repeated vertex index")
        # duplicate vertices
        order = np.lexsort((v[:, 1], v[:, 0]))
        sv = v[order]
        close = np.all(np.abs(np.diff(sv, axis=0)) <= DEGENERACY_TOL, axis=1)
        if np.any(close):
            i = int(np.flatnonzero(close)[0])
            raise InvalidMesh(f"duplicate vertices {order[i]} and {order[i + 1]}")
        area = np.abs(self.signed_areas)
        longest = self.edge_lengths.max(axis=1)
        bad = area <= DEGENERACY_TOL * longest**2
        if np.any(bad):
            raise InvalidMesh(f"triangle {int(np.flatnonzero(bad)[0])} is degenerate (collinear vertices)")
        counts = {}
        for tri in t:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                k = _edge_key(int(a), int(b))
                counts[k] = counts.get(k, 0) + 1
        over = [k for k, c in counts.items() if c > 2]
        if over:
            raise InvalidMesh(f"edge {over[0]} is shared by more than two triangles")
        self._cache["edge_counts"] = counts

    # ------------------------------------------------------------------ basic geometry
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """Triangle corner coordinates, shape (M, 3, 2)."""
        return self.vertices[self.triangles]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        c = self.corners
        d1 = c[:, 1] - c[:, 0]
        d2 = c[:, 2] - c[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        """Lengths of edges opposite each corner, shape (M, 3)."""
        c = self.corners
        return np.stack(
            [
                np.linalg.norm(c[:, 2] - c[:, 1], axis=1),
                np.linalg.norm(c[:, 0] - c[:, 2], axis=1),
                np.linalg.norm(c[:, 1] - c[:, 0], axis=1),
            ],
            axis=1,
        )

    @cached_property
    def inradii(self) -> np.ndarray:
        return 2.0 * self.areas / self.edge_lengths.sum(axis=1)

    @property
    def edges(self) -> dict:
        """Map from sorted vertex pair to the number of triangles using it."""
        return self._cache["edge_counts"]

    @cached_property
    def edge_triangles(self) -> dict:
        """Map from sorted vertex pair to the list of triangles containing it."""
        out: dict = {}
        for ti, tri in enumerate(self.triangles):
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                out.setdefault(_edge_key(int(a), int(b)), []).append(ti)
        return out

    @property
    def boundary_edges(self) -> list:
        return sorted(k for k, c in self.edges.items() if c == 1)

    @property
    def interior_edges(self) -> list:
        return sorted(k for k, c in self.edges.items() if c == 2)

    def boundary_loops(self) -> list:
        """Closed vertex loops formed by the boundary edges."""
        nbrs: dict = {}
        for a, b in self.boundary_edges:
            nbrs.setdefault(a, []).append(b)
            nbrs.setdefault(b, []).append(a)
        seen = set()
        loops = []
        for start in sorted(nbrs):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            prev, cur = None, start
            while True:
                nxt = [w for w in nbrs[cur] if w != prev and (w not in seen or (w == start and len(loop) > 2))]
                if not nxt:
                    break
                w = nxt[0]
                if w == start:
                    break
                loop.append(w)
                seen.add(w)
                prev, cur = cur, w
            loops.append(loop)
        return loops

    def boundary_polygon_area(self) -> float:
        """Signed-area sum of boundary loops, holes subtracted."""
        areas = []
        for loop in self.boundary_loops():
            p = self.vertices[loop]
            x, y = p[:, 0], p[:, 1]
            areas.append(0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))
        areas = np.abs(areas)
        # the largest loop is the outer boundary; remaining loops are holes
        return float(areas.max() - (areas.sum() - areas.max()))

    # ------------------------------------------------------------------ location
    @cached_property
    def _affine(self):
        c = self.corners
        mats = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)  # (M, 2, 2) columns
        return c[:, 0], np.linalg.inv(mats)

    def barycentric_all(self, points) -> np.ndarray:
        """Barycentric coordinates of every point w.r.t. every triangle, shape (P, M, 3)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        origin, inv = self._affine
        d = p[:, None, :] - origin[None, :, :]
        b23 = np.einsum("mij,pmj->pmi", inv, d)
        b1 = 1.0 - b23.sum(axis=2)
        return np.concatenate([b1[..., None], b23], axis=2)

    def locate(self, points, chunk: int = 2048) -> np.ndarray:
        """Index of the containing triangle for each point, ``OUTSIDE`` (-1) if none.

        Points on shared edges or vertices go to the lowest-index triangle.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(p), OUTSIDE, dtype=np.int64)
        for s in range(0, len(p), chunk):
            b = self.barycentric_all(p[s : s + chunk])
            inside = b.min(axis=2) >= -LOCATE_TOL
            hit = inside.any(axis=1)
            out[s : s + chunk][hit] = inside[hit].argmax(axis=1)
        return out

    def contains(self, points) -> np.ndarray:
        return self.locate(points) != OUTSIDE

    def barycentric(self, tri: int, points) -> np.ndarray:
        return barycentric(self.corners[tri], points)

    # ------------------------------------------------------------------ comparison
    def structurally_equal(self, other: "TriangulationMesh") -> bool:
        return (
            self.vertices.shape == other.vertices.shape
            and self.triangles.shape == other.triangles.shape
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
        )


def barycentric(corners, points) -> np.ndarray:
    """Barycentric coordinates of ``points`` relative to one triangle.

    Parameters
    ----------
    corners : array_like, shape (3, 2)
    points : array_like, shape (2,) or (P, 2)

    Returns
    -------
    ndarray, shape (3,) or (P, 3)
        Weights ``b`` with ``b @ corners == points`` and ``b.sum(-1) == 1``.
    """
    c = np.asarray(corners, dtype=float)
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    d1, d2 = c[1] - c[0], c[2] - c[0]
    area2 = d1[0] * d2[1] - d1[1] * d2[0]
    longest = max(np.linalg.norm(d1), np.linalg.norm(d2), np.linalg.norm(c[2] - c[1]))
    if abs(area2) / 2 <= DEGENERACY_TOL * longest**2:
        raise DegenerateTriangle("triangle vertices are (nearly) collinear")
    A = np.vstack([c.T, np.ones(3)])
    rhs = np.vstack([p.T, np.ones(len(p))])
    b = np.linalg.solve(A, rhs).T
    return b[0] if single else b


def mesh_stats(mesh: TriangulationMesh) -> dict:
    """Size, shape ratio and counts of a triangulation.

    ``size`` is the longest edge over all triangles and ``shape_ratio`` is the
    largest ratio of a triangle's longest edge to its inradius.
    """
    longest = mesh.edge_lengths.max(axis=1)
    if np.any(mesh.inradii <= 0):
        raise DegenerateTriangle("zero inradius")
    return {
        "size": float(longest.max()),
        "shape_ratio": float((longest / mesh.inradii).max()),
        "n_triangles": mesh.n_triangles,
        "n_vertices": mesh.n_vertices,
    }


# ---------------------------------------------------------------------- I/O


def _read_csv_rows(path, header):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise
    except UnicodeDecodeError as exc:
        raise ParseError("file is not valid UTF-8", path=path) from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0]] != header:
        raise ParseError(f"expected header {','.join(header)}", line=1, path=path)
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno, path=path)
        out.append((lineno, row))
    return out


def load_mesh(vertex_file, triangle_file, name: str | None = None) -> TriangulationMesh:
    """Read a mesh from the vertex/triangle CSV pair.

    Vertex file header ``id,z1,z2``; triangle file header ``id,v1,v2,v3``.
    Ids must be zero-based and contiguous.
    """
    verts = []
    for expected, (lineno, row) in enumerate(_read_csv_rows(vertex_file, ["id", "z1", "z2"])):
        try:
            vid = int(row[0])
            z1, z2 = float(row[1]), float(row[2])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, path=vertex_file) from exc
        if vid != expected:
            raise ParseError(f"vertex id {vid} out of sequence (expected {expected})", line=lineno, path=vertex_file)
        if not (math.isfinite(z1) and math.isfinite(z2)):
            raise ParseError("non-finite coordinate", line=lineno, path=vertex_file)
        verts.append((z1, z2))
    tris = []
    for expected, (lineno, row) in enumerate(_read_csv_rows(triangle_file, ["id", "v1", "v2", "v3"])):
        try:
            tid = int(row[0])
            tri = tuple(int(x) for x in row[1:])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, path=triangle_file) from exc
        if tid != expected:
            raise ParseError(f"triangle id {tid} out of sequence (expected {expected})", line=lineno, path=triangle_file)
        tris.append(tri)
    if not verts:
        raise InvalidMesh("no vertices")
    if not tris:
        raise InvalidMesh("no triangles")
    if name is None:
        name = Path(triangle_file).stem
    return TriangulationMesh(np.array(verts), np.array(tris), name=name)


def mesh_to_csv(mesh: TriangulationMesh) -> tuple[str, str]:
    """Canonical CSV text for the vertex and triangle files."""
    vlines = ["id,z1,z2"] + [f"{i},{x!r},{y!r}" for i, (x, y) in enumerate(mesh.vertices.tolist())]
    tlines = ["id,v1,v2,v3"] + [f"{i},{a},{b},{c}" for i, (a, b, c) in enumerate(mesh.triangles.tolist())]
    return "\n".join(vlines) + "\n", "\n".join(tlines) + "\n"


def save_mesh(mesh: TriangulationMesh, vertex_file, triangle_file) -> None:
    vtext, ttext = mesh_to_csv(mesh)
    Path(vertex_file).write_text(vtext, encoding="utf-8", newline="\n")
    Path(triangle_file).write_text(ttext, encoding="utf-8", newline="\n")


def square_mesh(k: int, lo: float = 0.0, hi: float = 1.0) -> TriangulationMesh:
    """Regular ``k x k`` split-square triangulation of ``[lo, hi]^2`` (``2 k^2`` triangles)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    g = np.linspace(lo, hi, k + 1)
    X, Y = np.meshgrid(g, g)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    tris = []
    for r in range(k):
        for c in range(k):
            v0 = r * (k + 1) + c
            tris += [(v0, v0 + 1, v0 + k + 2), (v0, v0 + k + 2, v0 + k + 1)]
    return TriangulationMesh(verts, np.array(tris), name=f"square_{k}")


# ---------------------------------------------------------------------- pixel grids


@dataclass(frozen=True, eq=False)
class PixelGrid:
    """In-domain pixels of a regular lattice on the unit square.

    ``coords`` holds the N in-domain pixel locations, ``index`` their
    ``(row, col)`` lattice positions (row follows z2, col follows z1) and
    ``shape`` the full lattice shape ``(n2, n1)``.
    """

    coords: np.ndarray
    index: np.ndarray
    shape: tuple

    @property
    def n(self) -> int:
        return len(self.coords)

    def to_image(self, values, fill=np.nan) -> np.ndarray:
        img = np.full(self.shape, fill, dtype=float)
        img[self.index[:, 0], self.index[:, 1]] = values
        return img


def lattice_grid(mesh: TriangulationMesh, n1: int, n2: int | None = None,
                 lo: float = 0.0, hi: float = 1.0) -> PixelGrid:
    """Pixels of an ``n1 x n2`` equispaced lattice over ``[lo, hi]^2`` that lie in the mesh."""
    n2 = n1 if n2 is None else n2
    x = np.linspace(lo, hi, n1)
    y = np.linspace(lo, hi, n2)
    X, Y = np.meshgrid(x, y)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    rows, cols = np.divmod(np.arange(len(pts)), n1)
    inside = mesh.contains(pts)
    return PixelGrid(
        coords=pts[inside],
        index=np.column_stack([rows[inside], cols[inside]]),
        shape=(n2, n1),
    )
