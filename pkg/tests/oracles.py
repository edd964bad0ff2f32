"""Reference computations written independently of the package internals.

These favour clarity over speed: explicit loops, closed-form formulas, dense
linear algebra and symbolic integration.
"""

from math import comb, factorial

import numpy as np
import scipy.linalg as sla
import sympy as sp


def bary_cramer(corners, z):
    """Barycentric coordinates by Cramer's rule."""
    (x1, y1), (x2, y2), (x3, y3) = corners
    x, y = z
    det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
    b2 = ((x - x1) * (y3 - y1) - (x3 - x1) * (y - y1)) / det
    b3 = ((x2 - x1) * (y - y1) - (x - x1) * (y2 - y1)) / det
    return np.array([1 - b2 - b3, b2, b3])


def exponent_list(d):
    """Storage order: i descending, then j descending."""
    return [(i, j, d - i - j) for i in range(d, -1, -1) for j in range(d - i, -1, -1)]


def bernstein_at(d, b):
    return np.array([factorial(d) / (factorial(i) * factorial(j) * factorial(k)) * b[0] ** i * b[1] ** j * b[2] ** k
                     for i, j, k in exponent_list(d)])


def point_in_triangle(corners, z, tol=1e-10):
    return bary_cramer(corners, z).min() >= -tol


def dense_basis(mesh, d, points):
    """Full (unreduced) evaluation matrix; each point assigned to the first triangle containing it."""
    nb = (d + 1) * (d + 2) // 2
    B = np.zeros((len(points), mesh.n_triangles * nb))
    for r, z in enumerate(points):
        for t in range(mesh.n_triangles):
            c = mesh.vertices[mesh.triangles[t]]
            if point_in_triangle(c, z):
                B[r, t * nb:(t + 1) * nb] = bernstein_at(d, bary_cramer(c, z))
                break
    return B


def symbolic_penalty(mesh, d):
    key = (mesh.vertices.tobytes(), mesh.triangles.tobytes(), d)
    if key not in _PENALTY_CACHE:
        _PENALTY_CACHE[key] = _symbolic_penalty(mesh, d)
    return _PENALTY_CACHE[key].copy()


_PENALTY_CACHE: dict = {}


def _symbolic_penalty(mesh, d):
    """Exact energy matrix by symbolic differentiation and integration."""
    x, y, s, t = sp.symbols("x y s t")
    nb = (d + 1) * (d + 2) // 2
    P = np.zeros((mesh.n_triangles * nb, mesh.n_triangles * nb))
    for tri in range(mesh.n_triangles):
        c = [tuple(sp.nsimplify(float(v), rational=True) for v in mesh.vertices[k]) for k in mesh.triangles[tri]]
        (x1, y1), (x2, y2), (x3, y3) = c
        det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
        b2 = ((x - x1) * (y3 - y1) - (x3 - x1) * (y - y1)) / det
        b3 = ((x2 - x1) * (y - y1) - (x - x1) * (y2 - y1)) / det
        b1 = 1 - b2 - b3
        polys = [sp.Rational(factorial(d), factorial(i) * factorial(j) * factorial(k)) * b1**i * b2**j * b3**k
                 for i, j, k in exponent_list(d)]
        hess = [(sp.diff(p, x, 2), sp.diff(p, x, y), sp.diff(p, y, 2)) for p in polys]
        sub = {x: x1 + s * (x2 - x1) + t * (x3 - x1), y: y1 + s * (y2 - y1) + t * (y3 - y1)}
        jac = abs(det)
        for a in range(nb):
            for b in range(a, nb):
                integrand = sp.expand((hess[a][0] * hess[b][0] + 2 * hess[a][1] * hess[b][1]
                                       + hess[a][2] * hess[b][2]).subs(sub))
                # int_{s+t<=1} s^a t^b = a! b! / (a+b+2)!
                val = sum(cf * sp.Rational(factorial(a_) * factorial(b_), factorial(a_ + b_ + 2))
                          for (a_, b_), cf in sp.Poly(integrand, s, t).terms()) * jac
                P[tri * nb + a, tri * nb + b] = P[tri * nb + b, tri * nb + a] = float(val)
    return P


def smoothness_by_sampling(mesh, d, r, per_edge=None):
    """Constraint rows forcing matching derivatives up to order r along every interior edge.

    Derivatives come from exact polynomial differentiation in sympy, sampled at
    enough points per edge to pin down the univariate traces.
    """
    x, y = sp.symbols("x y")
    nb = (d + 1) * (d + 2) // 2
    per_edge = per_edge or d + 1
    basis = []
    for tri in range(mesh.n_triangles):
        c = [tuple(float(v) for v in mesh.vertices[k]) for k in mesh.triangles[tri]]
        (x1, y1), (x2, y2), (x3, y3) = c
        det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
        b2 = ((x - x1) * (y3 - y1) - (x3 - x1) * (y - y1)) / det
        b3 = ((x2 - x1) * (y - y1) - (x - x1) * (y2 - y1)) / det
        b1 = 1 - b2 - b3
        basis.append([comb(d, i) * comb(d - i, j) * b1**i * b2**j * b3**k for i, j, k in exponent_list(d)])
    rows = []
    edges = {}
    for tri, verts in enumerate(mesh.triangles):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = tuple(sorted((int(verts[a]), int(verts[b]))))
            edges.setdefault(key, []).append(tri)
    for (p, q), tris in sorted(edges.items()):
        if len(tris) != 2:
            continue
        t0, t1 = tris
        for u in np.linspace(0.1, 0.9, per_edge):
            z = (1 - u) * mesh.vertices[p] + u * mesh.vertices[q]
            for order in range(r + 1):
                for ax in range(order + 1):
                    row = np.zeros(mesh.n_triangles * nb)
                    for tri, sign in ((t0, 1.0), (t1, -1.0)):
                        for m, poly in enumerate(basis[tri]):
                            expr = poly
                            if ax:
                                expr = sp.diff(expr, x, ax)
                            if order - ax:
                                expr = sp.diff(expr, y, order - ax)
                            row[tri * nb + m] += sign * float(expr.subs({x: z[0], y: z[1]}))
                    rows.append(row)
    return np.array(rows)


def constrained_penalized_fit(B, P, H, ybar, c):
    """Minimise ||ybar - B g||^2 + c g'Pg subject to H g = 0 via a null-space basis from the SVD."""
    Z = sla.null_space(H, rcond=1e-10) if H.shape[0] else np.eye(B.shape[1])
    A = Z.T @ (B.T @ B + c * P) @ Z
    theta = np.linalg.solve(A, Z.T @ B.T @ ybar)
    return Z @ theta


def spline_dimension_r1(mesh, d):
    """Dimension of C^1 splines of degree d >= 4 on a triangulation (generic vertex positions).

    C(d+2,2) + C(d,2) E_I - (C(d+2,2) - 3) V_I + sigma, where sigma counts
    interior vertices with exactly four edges lying on two lines.
    """
    edges = {}
    for verts in mesh.triangles:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = tuple(sorted((int(verts[a]), int(verts[b]))))
            edges[key] = edges.get(key, 0) + 1
    boundary_vertices = {v for e, n in edges.items() if n == 1 for v in e}
    interior_vertices = [v for v in range(mesh.n_vertices) if v not in boundary_vertices]
    e_int = sum(1 for n in edges.values() if n == 2)
    sigma = 0
    for v in interior_vertices:
        nbrs = [w for e in edges for w in e if v in e and w != v]
        if len(nbrs) != 4:
            continue
        dirs = [mesh.vertices[w] - mesh.vertices[v] for w in nbrs]
        dirs = [u / np.linalg.norm(u) for u in dirs]
        pairs = sum(1 for i in range(4) for j in range(i + 1, 4) if abs(dirs[i][0] * dirs[j][1] - dirs[i][1] * dirs[j][0]) < 1e-12)
        if pairs == 2:
            sigma += 1
    return comb(d + 2, 2) + comb(d, 2) * e_int - (comb(d + 2, 2) - 3) * len(interior_vertices) + sigma


def dense_pixel_eigen(G, pixel_area):
    """Eigenpairs of the pixel-discretized covariance operator: A G v = lambda v, A sum psi^2 = 1."""
    lam, V = np.linalg.eigh(pixel_area * 0.5 * (G + G.T))
    order = np.argsort(lam)[::-1]
    return lam[order], V[:, order] / np.sqrt(pixel_area)
