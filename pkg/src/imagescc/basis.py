"""Bernstein-basis spline spaces on triangulations.

A spline of degree ``d`` on a mesh with ``M`` triangles is stored as a vector
of ``M * nb`` Bernstein coefficients, ``nb = (d+1)(d+2)/2``. Within a triangle
the coefficient for ``(i, j, k)`` (exponents of ``b1, b2, b3``) sits at the
local position returned by :func:`local_index`; triangle ``t`` owns the slice
``t*nb : (t+1)*nb``.

Continuity across interior edges is encoded by the matrix ``H`` (``H @ gamma
== 0``) and removed by an orthonormal null-space basis ``Q2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import OrderTooHigh
from .geometry import OUTSIDE, TriangulationMesh

RANK_TOL = 1e-10


# ---------------------------------------------------------------------- index helpers


@lru_cache(maxsize=None)
def bernstein_indices(d: int) -> tuple:
    """Exponent triples ``(i, j, k)`` in storage order (i descending, then j descending)."""
    return tuple((i, j, d - i - j) for i in range(d, -1, -1) for j in range(d - i, -1, -1))


def n_local(d: int) -> int:
    return (d + 1) * (d + 2) // 2


def local_index(i: int, j: int, k: int) -> int:
    """Storage position of the exponent triple ``(i, j, k)``."""
    d = i + j + k
    # rows with larger i come first: sum_{i'>i} (d-i'+1)
    before = sum(d - ip + 1 for ip in range(d, i, -1))
    return before + (d - i - j)


@lru_cache(maxsize=None)
def _exponents(d: int) -> np.ndarray:
    return np.array(bernstein_indices(d), dtype=np.int64)


@lru_cache(maxsize=None)
def _multinomials(d: int) -> np.ndarray:
    f = math.factorial
    return np.array([f(d) / (f(i) * f(j) * f(k)) for i, j, k in bernstein_indices(d)])


def bernstein_values(d: int, bary) -> np.ndarray:
    """All degree-``d`` Bernstein polynomials at barycentric points, shape (P, nb)."""
    b = np.atleast_2d(np.asarray(bary, dtype=float))
    e = _exponents(d)
    vals = _multinomials(d)[None, :] * np.ones((len(b), 1))
    for c in range(3):
        vals = vals * b[:, c : c + 1] ** e[None, :, c]
    return vals


@lru_cache(maxsize=None)
def _shift_maps(d: int) -> np.ndarray:
    """For each degree ``d-1`` multi-index and each corner c, the degree-``d`` position of ``nu + e_c``."""
    out = np.empty((n_local(d - 1), 3), dtype=np.int64)
    for row, (i, j, k) in enumerate(bernstein_indices(d - 1)):
        out[row, 0] = local_index(i + 1, j, k)
        out[row, 1] = local_index(i, j + 1, k)
        out[row, 2] = local_index(i, j, k + 1)
    return out


def directional_operator(d: int, a) -> np.ndarray:
    """Matrix mapping degree-``d`` coefficients to those of the directional derivative.

    ``a`` holds the directional coordinates (derivatives of ``b1, b2, b3`` along the
    direction). Result has shape ``(nb(d-1), nb(d))``.
    """
    a = np.asarray(a, dtype=float)
    op = np.zeros((n_local(d - 1), n_local(d)))
    sm = _shift_maps(d)
    rows = np.arange(n_local(d - 1))
    for c in range(3):
        op[rows, sm[:, c]] += d * a[c]
    return op


# ---------------------------------------------------------------------- quadrature


@lru_cache(maxsize=None)
def triangle_quadrature(exact_degree: int):
    """Collapsed Gauss-Legendre rule on the reference triangle.

    Returns barycentric points (Q, 3) and weights summing to 1 (i.e. relative to
    the triangle area). Exact for polynomials of total degree ``exact_degree``.
    """
    n = max(1, (exact_degree + 2) // 2 + 1)
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    # Duffy map (u, v) -> (s, t) = (u, v(1-u)) with Jacobian (1-u)
    s = u.ravel()
    t = (v * (1 - u)).ravel()
    wt = (wu * wv * (1 - u)).ravel() * 2.0  # reference area is 1/2
    bary = np.column_stack([1 - s - t, s, t])
    return bary, wt


# ---------------------------------------------------------------------- spline system


@dataclass(frozen=True, eq=False)
class SplineBasisSystem:
    """Spline space of degree ``degree`` and smoothness ``smoothness`` on ``mesh``.

    Attributes
    ----------
    H : scipy.sparse.csr_matrix
        Smoothness conditions, one row per cross-edge relation.
    P : scipy.sparse.csr_matrix
        Energy penalty (block diagonal by triangle).
    Q2 : ndarray
        Orthonormal basis of the null space of ``H``.
    rank : int
        Numerical rank of ``H``.
    """

    mesh: TriangulationMesh
    degree: int
    smoothness: int
    H: sp.csr_matrix
    P: sp.csr_matrix
    Q2: np.ndarray
    rank: int
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def nb(self) -> int:
        return n_local(self.degree)

    @property
    def basis_count(self) -> int:
        return self.mesh.n_triangles * self.nb

    @property
    def reduced_dim(self) -> int:
        return self.Q2.shape[1]

    @property
    def D(self) -> np.ndarray:
        """Reduced penalty ``Q2' P Q2``."""
        if "D" not in self._cache:
            D = self.Q2.T @ (self.P @ self.Q2)
            self._cache["D"] = 0.5 * (D + D.T)
        return self._cache["D"]

    def eval(self, points, tri=None) -> sp.csr_matrix:
        return eval_basis(self, points, tri=tri)

    def eval_deriv(self, points, a1: int, a2: int, tri=None) -> sp.csr_matrix:
        return eval_basis_deriv(self, points, a1, a2, tri=tri)

    def reduced_eval(self, points, tri=None) -> np.ndarray:
        """Dense ``B(points) @ Q2``."""
        return np.asarray(eval_basis(self, points, tri=tri) @ self.Q2)

    def spline_values(self, gamma, points, tri=None) -> np.ndarray:
        return eval_basis(self, points, tri=tri) @ np.asarray(gamma)

    def energy(self, gamma) -> float:
        g = np.asarray(gamma)
        return float(g @ (self.P @ g))


def _barycentric_gradients(mesh: TriangulationMesh) -> np.ndarray:
    """``grad[t, c, :]`` = gradient of barycentric coordinate ``c`` in triangle ``t``."""
    c = mesh.corners
    A = np.empty((mesh.n_triangles, 3, 3))
    A[:, 0, :] = c[:, :, 0]
    A[:, 1, :] = c[:, :, 1]
    A[:, 2, :] = 1.0
    inv = np.linalg.inv(A)  # b = inv @ (z1, z2, 1)
    return inv[:, :, :2]


def derivative_operators(mesh: TriangulationMesh, d: int, a1: int, a2: int) -> np.ndarray:
    """Per-triangle operator ``(M, nb(d-a1-a2), nb(d))`` for the ``(a1, a2)`` partial derivative."""
    if a1 < 0 or a2 < 0:
        raise ValueError("derivative orders must be nonnegative")
    if a1 + a2 > d:
        raise OrderTooHigh(f"derivative order {a1 + a2} exceeds degree {d}")
    grads = _barycentric_gradients(mesh)
    out = np.empty((mesh.n_triangles, n_local(d - a1 - a2), n_local(d)))
    for t in range(mesh.n_triangles):
        op = np.eye(n_local(d))
        deg = d
        for axis, count in ((0, a1), (1, a2)):
            for _ in range(count):
                op = directional_operator(deg, grads[t, :, axis]) @ op
                deg -= 1
        out[t] = op
    return out


def _locate_and_bary(mesh, points, tri):
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if tri is None:
        tri = mesh.locate(p)
    tri = np.asarray(tri, dtype=np.int64)
    bary = np.zeros((len(p), 3))
    ok = tri != OUTSIDE
    if np.any(ok):
        full = mesh.barycentric_all(p[ok])  # (P, M, 3)
        bary[ok] = full[np.arange(ok.sum()), tri[ok]]
    return tri, bary, ok


def _assemble_rows(system, tri, vals, ok):
    nb_full = system.nb
    ncols = system.basis_count
    P = len(tri)
    if not np.any(ok):
        return sp.csr_matrix((P, ncols))
    rows = np.repeat(np.flatnonzero(ok), vals.shape[1])
    cols = (tri[ok][:, None] * nb_full + np.arange(vals.shape[1])[None, :]).ravel()
    return sp.csr_matrix((vals[ok].ravel(), (rows, cols)), shape=(P, ncols))


def eval_basis(system: SplineBasisSystem, points, tri=None) -> sp.csr_matrix:
    """Evaluation matrix, one row per point; points outside the mesh give zero rows."""
    tri, bary, ok = _locate_and_bary(system.mesh, points, tri)
    vals = bernstein_values(system.degree, bary)
    return _assemble_rows(system, tri, vals, ok)


def eval_basis_deriv(system: SplineBasisSystem, points, a1: int, a2: int, tri=None) -> sp.csr_matrix:
    """Evaluation matrix of the ``d^(a1+a2) / dz1^a1 dz2^a2`` derivatives of the basis."""
    d = system.degree
    if a1 + a2 > d:
        raise OrderTooHigh(f"derivative order {a1 + a2} exceeds degree {d}")
    if a1 == 0 and a2 == 0:
        return eval_basis(system, points, tri=tri)
    key = ("dops", a1, a2)
    if key not in system._cache:
        system._cache[key] = derivative_operators(system.mesh, d, a1, a2)
    ops = system._cache[key]
    tri, bary, ok = _locate_and_bary(system.mesh, points, tri)
    low = bernstein_values(d - a1 - a2, bary)
    vals = np.zeros((len(tri), system.nb))
    if np.any(ok):
        vals[ok] = np.einsum("pl,plm->pm", low[ok], ops[tri[ok]])
    return _assemble_rows(system, tri, vals, ok)


# ---------------------------------------------------------------------- H, P, Q2


def assemble_smoothness(mesh: TriangulationMesh, d: int, r: int) -> sp.csr_matrix:
    """Cross-edge C^r conditions on Bernstein coefficients.

    For each interior edge ``pq`` shared by ``T = <a, p, q>`` and ``T' = <a', p, q>``
    and each ``l <= r``, ``j + k = d - l``:

        c'(a'^l p^j q^k) = sum_{|nu| = l} l!/nu! beta^nu c(a^nu1 p^(j+nu2) q^(k+nu3))

    where ``beta`` are the barycentric coordinates of ``a'`` relative to ``T``
    ordered ``(a, p, q)``.
    """
    if r < 0:
        raise ValueError("smoothness must be nonnegative")
    nb = n_local(d)
    rows, cols, vals = [], [], []
    row = 0
    f = math.factorial
    for (p, q), tris in sorted(mesh.edge_triangles.items()):
        if len(tris) != 2:
            continue
        t, tp = tris
        tv = list(mesh.triangles[t])
        tpv = list(mesh.triangles[tp])
        a = next(v for v in tv if v not in (p, q))
        ap = next(v for v in tpv if v not in (p, q))
        beta_full = mesh.barycentric(t, mesh.vertices[ap])
        pos_t = {v: c for c, v in enumerate(tv)}
        pos_tp = {v: c for c, v in enumerate(tpv)}
        beta = np.array([beta_full[pos_t[a]], beta_full[pos_t[p]], beta_full[pos_t[q]]])

        def idx(pos, verts_exp):
            e = [0, 0, 0]
            for v, ex in verts_exp:
                e[pos[v]] = ex
            return local_index(*e)

        for l in range(r + 1):
            for j in range(d - l, -1, -1):
                k = d - l - j
                rows.append(row)
                cols.append(tp * nb + idx(pos_tp, ((ap, l), (p, j), (q, k))))
                vals.append(1.0)
                for n1 in range(l, -1, -1):
                    for n2 in range(l - n1, -1, -1):
                        n3 = l - n1 - n2
                        w = f(l) / (f(n1) * f(n2) * f(n3)) * beta[0] ** n1 * beta[1] ** n2 * beta[2] ** n3
                        if w == 0.0:
                            continue
                        rows.append(row)
                        cols.append(t * nb + idx(pos_t, ((a, n1), (p, j + n2), (q, k + n3))))
                        vals.append(-w)
                row += 1
    H = sp.coo_matrix((vals, (rows, cols)), shape=(row, mesh.n_triangles * nb))
    return H.tocsr()


def assemble_penalty(mesh: TriangulationMesh, d: int) -> sp.csr_matrix:
    """Block-diagonal energy matrix with ``g' P g = sum_T int_T (g11^2 + 2 g12^2 + g22^2)``."""
    nb = n_local(d)
    if d < 2:
        return sp.csr_matrix((mesh.n_triangles * nb, mesh.n_triangles * nb))
    bary, w = triangle_quadrature(2 * (d - 2))
    low = bernstein_values(d - 2, bary)
    gram = low.T @ (w[:, None] * low)  # integral over a unit-area triangle
    o11 = derivative_operators(mesh, d, 2, 0)
    o12 = derivative_operators(mesh, d, 1, 1)
    o22 = derivative_operators(mesh, d, 0, 2)
    areas = mesh.areas
    blocks = []
    for t in range(mesh.n_triangles):
        blk = o11[t].T @ gram @ o11[t] + 2.0 * o12[t].T @ gram @ o12[t] + o22[t].T @ gram @ o22[t]
        blk = areas[t] * 0.5 * (blk + blk.T)
        blocks.append(blk)
    return sp.block_diag(blocks, format="csr")


def qr_reduce(H) -> tuple[np.ndarray, int]:
    """Orthonormal null-space basis of ``H`` and its numerical rank.

    The rank counts singular values above ``1e-10 * sigma_max``; the basis is
    the trailing block of a column-pivoted QR of ``H'``.
    """
    Hd = H.toarray() if sp.issparse(H) else np.asarray(H, dtype=float)
    if Hd.ndim == 1:
        Hd = Hd[None, :]
    K = Hd.shape[1]
    if Hd.shape[0] == 0 or not np.any(Hd):
        return np.eye(K), 0
    s = sla.svdvals(Hd)
    rank = int(np.sum(s > RANK_TOL * s[0]))
    Q, _, _ = sla.qr(Hd.T, mode="full", pivoting=True)
    return np.ascontiguousarray(Q[:, rank:]), rank


@lru_cache(maxsize=32)
def _build_cached(mesh: TriangulationMesh, d: int, r: int) -> SplineBasisSystem:
    H = assemble_smoothness(mesh, d, r)
    P = assemble_penalty(mesh, d)
    Q2, rank = qr_reduce(H)
    return SplineBasisSystem(mesh=mesh, degree=d, smoothness=r, H=H, P=P, Q2=Q2, rank=rank)


def build_system(mesh: TriangulationMesh, degree: int = 5, smoothness: int = 1) -> SplineBasisSystem:
    """Assemble (or fetch from cache) the spline space ``S_d^r`` on ``mesh``."""
    d, r = int(degree), int(smoothness)
    if d < 1:
        raise ValueError("degree must be at least 1")
    if r < 0 or d < r + 1:
        raise ValueError(f"need 0 <= r <= d-1, got d={d}, r={r}")
    if d < 3 * r + 2:
        warnings.warn(
            f"degree {d} < 3r+2 = {3 * r + 2}: spline space may lack full approximation power",
            stacklevel=2,
        )
    return _build_cached(mesh, d, r)
