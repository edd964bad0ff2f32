"""Build the shipped fixture meshes.

The brain-like domain is a convex 25-vertex polygon whose boundary radius is
a short Fourier series around a fixed centre. The coefficients below were
obtained by minimising boundary roughness subject to

* area equal to 921 pixels of a 40x40 lattice on the unit square,
* the two simulation eigenfunctions being orthonormal in L2 over the polygon,

and then screening perturbed solutions for exactly 921 (40x40) and 3682
(79x79) lattice pixels inside. ``--search`` reruns that screen.

Three nested-boundary meshes are then produced (49/80/144 triangles with
38/54/87 vertices) by placing interior vertices with a constrained Lloyd
iteration and triangulating with Delaunay. A regular unit-square mesh is also
written.

Run ``python3 scripts/make_fixture_meshes.py`` to regenerate
``src/imagescc/data``.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from matplotlib.path import Path as MplPath
from scipy.optimize import minimize
from scipy.spatial import Delaunay, cKDTree

from imagescc.geometry import TriangulationMesh, mesh_stats, save_mesh, square_mesh
from imagescc.simulation import eigenfunctions

CENTER_Z1 = 0.505
TARGET_AREA = 921 / 39**2
N_HARMONICS = 6
# centre z2, r0, cos terms 1..6, sin terms 1..6
COEFFS = np.array([
    0.4753835923312177, 0.4397016495197029, 0.053704263422049425, -0.006737210580535024,
    -0.0009862851098549465, -0.0011112590838414298, -0.0001925751134176033, -2.1181164352905898e-05,
    0.008335681176244877, 0.006325887310677878, 0.0003586442612047913, -0.0004852363493260991,
    0.00021556808602133631, 1.8103765305716337e-05,
])
# 13 vertices on the upper half (both ends included), 12 on the lower half
THETA = np.r_[np.pi * np.arange(13) / 12, np.pi + np.pi * np.arange(1, 13) / 13]

# (name, boundary midpoints added, interior vertices, seed)
MESHES = [("brain_d1", 0, 13, 1), ("brain_d2", 1, 28, 2), ("brain_d3", 3, 59, 3)]


def boundary_polygon(q=COEFFS):
    cy, a, b = q[0], q[1 : N_HARMONICS + 2], q[N_HARMONICS + 2 :]
    k = np.arange(1, N_HARMONICS + 1)[:, None]
    r = a[0] + a[1:] @ np.cos(k * THETA) + b @ np.sin(k * THETA)
    return np.column_stack([CENTER_Z1 + r * np.cos(THETA), cy + r * np.sin(THETA)])


def _fan_rule(order=12):
    x, w = np.polynomial.legendre.leggauss(order)
    x, w = (x + 1) / 2, w / 2
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    return u.ravel(), (v * (1 - u)).ravel(), (wu * wv * (1 - u)).ravel() * 2


def polygon_moments(poly):
    """Area and the L2 Gram matrix entries of the two eigenfunctions over a star-shaped polygon."""
    s, t, wt = _fan_rule()
    c = poly.mean(axis=0)
    out = np.zeros(4)
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        area = 0.5 * abs((a - c)[0] * (b - c)[1] - (a - c)[1] * (b - c)[0])
        z = c + np.outer(s, a - c) + np.outer(t, b - c)
        p1, p2 = eigenfunctions(z)
        out += area * np.array([wt.sum(), wt @ p1**2, wt @ p2**2, wt @ (p1 * p2)])
    return out


def lattice_count(poly, n):
    g = np.linspace(0, 1, n)
    X, Y = np.meshgrid(g, g)
    return int(MplPath(poly).contains_points(np.column_stack([X.ravel(), Y.ravel()])).sum())


def _moment_residual(q):
    m = polygon_moments(boundary_polygon(q))
    return np.array([m[0] - TARGET_AREA, m[1] - 1, m[2] - 1, m[3]])


def search_shape(start=COEFFS, tries=400, seed=0):
    """Roughness-penalised constrained solves around ``start``; yields hits on the lattice counts."""
    rng = np.random.default_rng(seed)
    k4 = np.arange(1, N_HARMONICS + 1) ** 4
    for _ in range(tries):
        target = start + rng.normal(0, 0.01, start.size)

        def objective(q, target=target):
            a, b = q[2 : N_HARMONICS + 2], q[N_HARMONICS + 2 :]
            return k4 @ (a**2 + b**2) + 20 * np.sum((q - target) ** 2)

        sol = minimize(objective, start, method="SLSQP", constraints=[{"type": "eq", "fun": _moment_residual}],
                       options={"maxiter": 500, "ftol": 1e-14})
        if not sol.success or np.abs(_moment_residual(sol.x)).max() > 1e-12:
            continue
        poly = boundary_polygon(sol.x)
        if lattice_count(poly, 40) == 921 and lattice_count(poly, 79) == 3682:
            yield sol.x


def lloyd_interior(poly, n_interior, seed, iters=200):
    """Interior generator positions from a Lloyd iteration with fixed boundary generators."""
    rng = np.random.default_rng(seed)
    path = MplPath(poly)
    g = np.linspace(0, 1, 500)
    X, Y = np.meshgrid(g, g)
    samples = np.column_stack([X.ravel(), Y.ravel()])
    samples = samples[path.contains_points(samples)]
    gens = samples[rng.choice(len(samples), n_interior, replace=False)]
    nb = len(poly)
    for _ in range(iters):
        tree = cKDTree(np.vstack([poly, gens]))
        _, lab = tree.query(samples)
        lab = lab - nb
        keep = lab >= 0
        sums = np.zeros_like(gens)
        np.add.at(sums, lab[keep], samples[keep])
        cnt = np.bincount(lab[keep], minlength=n_interior)[:, None]
        moved = np.where(cnt > 0, sums / np.maximum(cnt, 1), gens)
        if np.max(np.abs(moved - gens)) < 1e-7:
            gens = moved
            break
        gens = moved
    return gens


def refine_boundary(poly, n_extra):
    """Insert midpoints on the ``n_extra`` longest boundary edges (domain unchanged)."""
    pts = [tuple(p) for p in poly]
    for _ in range(n_extra):
        arr = np.array(pts)
        lengths = np.linalg.norm(np.roll(arr, -1, axis=0) - arr, axis=1)
        i = int(np.argmax(lengths))
        mid = 0.5 * (arr[i] + arr[(i + 1) % len(arr)])
        pts.insert(i + 1, tuple(mid))
    return np.array(pts)


def triangulate(boundary, interior, original_count):
    """Delaunay triangulation of a convex polygon with interior points.

    Boundary midpoints are nudged outward for the triangulation so they remain
    hull vertices, then restored.
    """
    pts = np.vstack([boundary, interior])
    nudged = pts.copy()
    c = boundary.mean(axis=0)
    is_mid = np.zeros(len(pts), bool)
    is_mid[: len(boundary)] = ~np.array([any(np.allclose(b, o) for o in original_count) for b in boundary])
    nudged[is_mid] += 1e-6 * (pts[is_mid] - c)
    tri = Delaunay(nudged).simplices
    # counterclockwise orientation
    p = pts[tri]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    tri[cross < 0] = tri[cross < 0][:, [0, 2, 1]]
    order = np.lexsort((p.mean(axis=1)[:, 0], p.mean(axis=1)[:, 1]))
    return pts, tri[order]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "src" / "imagescc" / "data")
    ap.add_argument("--search", action="store_true", help="print coefficient vectors meeting the targets and exit")
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)

    if args.search:
        for q in search_shape():
            print(repr(q.tolist()))
        return
    poly = boundary_polygon()
    mom = polygon_moments(poly)
    print("area %.6f  |psi1|^2 %.3e  |psi2|^2 %.3e  <psi1,psi2> %.3e" % (mom[0], mom[1] - 1, mom[2] - 1, mom[3]))
    print("lattice counts", lattice_count(poly, 40), lattice_count(poly, 79))

    for name, extra, n_int, seed in MESHES:
        bnd = refine_boundary(poly, extra)
        interior = lloyd_interior(bnd, n_int, seed)
        verts, tris = triangulate(bnd, interior, poly)
        mesh = TriangulationMesh(verts, tris, name=name)
        stats = mesh_stats(mesh)
        print(name, stats, "area %.6f" % mesh.area)
        save_mesh(mesh, args.out / f"{name}_vertices.csv", args.out / f"{name}_triangles.csv")

    sq = square_mesh(4)
    save_mesh(sq, args.out / "square_4_vertices.csv", args.out / "square_4_triangles.csv")
    print("square_4", mesh_stats(sq))


if __name__ == "__main__":
    main()
