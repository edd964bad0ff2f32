"""Penalized spline fits of image stacks.

The mean fit minimises

    ||Ybar - U theta||^2 + (rho / n) theta' D theta,     U = B Q2,  D = Q2' P Q2,

over reduced coefficients ``theta``; ``gamma = Q2 theta`` satisfies the
smoothness constraints by construction.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .basis import SplineBasisSystem
from .errors import AllInvalid, DomainMismatch, InputError, NotPD, SingularSystem
from .geometry import OUTSIDE

COND_LIMIT = 1e12
N_GRID = 21
GRID_SPAN = (1e-6, 1e3)


# ---------------------------------------------------------------------- data containers


@dataclass(eq=False)
class ImageStack:
    """``n`` images observed on a common set of ``N`` pixels.

    Parameters
    ----------
    coords : array (N, 2)
    values : array (n, N)
    group : optional label
    """

    coords: np.ndarray
    values: np.ndarray
    group: str | None = None

    def __post_init__(self):
        self.coords = np.ascontiguousarray(np.asarray(self.coords, dtype=float))
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        self.values = np.ascontiguousarray(v)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise InputError("pixel coordinates must have shape (N, 2)")
        if self.values.shape[1] != len(self.coords):
            raise InputError(f"values have {self.values.shape[1]} pixels but {len(self.coords)} coordinates")
        if not np.all(np.isfinite(self.values)):
            raise InputError("image values contain NaN or infinity")
        if not np.all(np.isfinite(self.coords)):
            raise InputError("pixel coordinates contain NaN or infinity")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    @property
    def mean_image(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def check_domain(self, mesh) -> np.ndarray:
        """Triangle index per pixel; raises if any pixel lies outside ``mesh``."""
        tri = mesh.locate(self.coords)
        bad = int(np.sum(tri == OUTSIDE))
        if bad:
            raise DomainMismatch(f"{bad} of {self.N} pixels lie outside the mesh domain")
        return tri

    def subset(self, rows) -> "ImageStack":
        return ImageStack(self.coords, self.values[rows], self.group)


class SplineDesign:
    """Pixel-level quantities for one spline space and one pixel grid.

    Holds ``U = B Q2``, ``G = U'U`` and the reduced penalty ``D``. When ``U`` has
    full column rank a spectral form of the smoother is precomputed:
    ``U = Qu Ru`` and ``Ru^-T D Ru^-1 = V diag(s) V'``, so that
    ``S(rho) = W diag(1 / (1 + c s)) W'`` with ``W = Qu V`` and ``c = rho / n``.
    """

    def __init__(self, system: SplineBasisSystem, coords, tri=None):
        self.system = system
        self.coords = np.asarray(coords, dtype=float)
        if tri is None:
            tri = system.mesh.locate(self.coords)
        self.tri = np.asarray(tri)
        if np.any(self.tri == OUTSIDE):
            raise DomainMismatch(f"{int(np.sum(self.tri == OUTSIDE))} pixels lie outside the mesh domain")
        self.U = system.reduced_eval(self.coords, tri=self.tri)
        self.G = self.U.T @ self.U
        self.D = system.D
        self._spectral = None

    @property
    def N(self) -> int:
        return self.U.shape[0]

    @property
    def p(self) -> int:
        return self.U.shape[1]

    @property
    def spectral(self):
        """``(W, s, Ru, V)`` or ``None`` when ``U`` is column-rank deficient."""
        if self._spectral is None:
            self._spectral = self._build_spectral()
        return self._spectral or None

    def _build_spectral(self):
        if self.N < self.p:
            return False
        Qu, Ru = np.linalg.qr(self.U)
        d = np.abs(np.diag(Ru))
        if d.min() <= 1e-10 * d.max():
            return False
        X = sla.solve_triangular(Ru, self.D, trans="T")  # Ru^-T D
        X = sla.solve_triangular(Ru, X.T, trans="T").T  # Ru^-T D Ru^-1
        s, V = np.linalg.eigh(0.5 * (X + X.T))
        s = np.clip(s, 0.0, None)
        return Qu @ V, s, Ru, V

    def default_grid(self) -> np.ndarray:
        trD = float(np.trace(self.D))
        scale = self.N / trD if trD > 0 else 1.0
        return scale * np.logspace(np.log10(GRID_SPAN[0]), np.log10(GRID_SPAN[1]), N_GRID)


_DESIGN_CACHE: dict = {}


def design_for(system: SplineBasisSystem, coords) -> SplineDesign:
    """Cached :class:`SplineDesign` for a system and pixel set."""
    c = np.ascontiguousarray(np.asarray(coords, dtype=float))
    key = (id(system), hashlib.sha1(c.tobytes()).hexdigest(), c.shape)
    hit = _DESIGN_CACHE.get(key)
    if hit is not None and hit.system is system:
        return hit
    if len(_DESIGN_CACHE) > 64:
        _DESIGN_CACHE.clear()
    des = SplineDesign(system, c)
    _DESIGN_CACHE[key] = des
    return des


@dataclass(eq=False)
class MeanFitResult:
    """Outcome of :func:`fit_mean`.

    ``residual_matrix`` holds ``Y_ij - muhat(z_j)`` for every subject.
    """

    theta: np.ndarray
    gamma: np.ndarray
    rho: float
    gcv_value: float
    hat_trace: float
    fitted: np.ndarray
    residual_matrix: np.ndarray
    n: int
    design: SplineDesign = field(repr=False)
    gcv_rhos: np.ndarray = field(default_factory=lambda: np.empty(0))
    gcv_curve: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def system(self) -> SplineBasisSystem:
        return self.design.system

    def evaluate(self, points) -> np.ndarray:
        return self.system.spline_values(self.gamma, points)


# ---------------------------------------------------------------------- solver core


def _solve_penalized(G, D, rhs, c):
    """Solve ``(G + c D) x = rhs``; Cholesky with an SVD least-squares fallback."""
    A = G + c * D
    A = 0.5 * (A + A.T)
    try:
        L = np.linalg.cholesky(A)
        dg = np.diag(L)
        if (dg.max() / dg.min()) ** 2 <= COND_LIMIT:
            return sla.cho_solve((L, True), rhs), A
    except np.linalg.LinAlgError:
        pass
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 1e-14 * sv[0]:
        raise SingularSystem(f"penalized system is singular (rho/n = {c:g}); use rho > 0 or a coarser mesh")
    x = sla.lstsq(A, rhs)[0]
    return x, A


def _gcv_direct(des: SplineDesign, ybar, rhos, n):
    """GCV via a fresh solve per rho (used when the spectral form is unavailable)."""
    N = des.N
    rhs = des.U.T @ ybar
    out_v, out_t = [], []
    for rho in rhos:
        try:
            th, A = _solve_penalized(des.G, des.D, rhs, rho / n)
            tr = float(np.trace(np.linalg.solve(A, des.G)))
            rss = float(np.sum((ybar - des.U @ th) ** 2))
        except SingularSystem:
            tr, rss = float(N), np.inf
        out_t.append(tr)
        out_v.append(rss / (N * (1 - tr / N) ** 2) if tr < N else np.inf)
    return np.array(out_v), np.array(out_t)


def _gcv_spectral(des: SplineDesign, Ybar, rhos, n):
    """GCV for one or many right-hand sides (columns of ``Ybar``), pooled across columns."""
    W, s, _, _ = des.spectral
    N = des.N
    Y = Ybar.reshape(N, -1)
    a = W.T @ Y
    perp = float(np.sum((Y - W @ a) ** 2))
    a2 = np.sum(a**2, axis=1)
    vals, traces = [], []
    for rho in rhos:
        c = rho / n
        shrink = c * s / (1.0 + c * s)
        rss = perp + float(np.sum(shrink**2 * a2))
        tr = float(np.sum(1.0 / (1.0 + c * s)))
        traces.append(tr)
        vals.append(rss / (Y.shape[1] * N * (1 - tr / N) ** 2) if tr < N - 1e-9 else np.inf)
    return np.array(vals), np.array(traces)


def gcv_curve(des: SplineDesign, ybar, rhos, n: int):
    """GCV values and hat traces over ``rhos`` for the averaged image ``ybar``."""
    rhos = np.asarray(rhos, dtype=float)
    if des.spectral is not None:
        return _gcv_spectral(des, np.asarray(ybar, float), rhos, n)
    return _gcv_direct(des, np.asarray(ybar, float), rhos, n)


def _argmin_first(values):
    finite = np.isfinite(values)
    if not np.any(finite):
        raise AllInvalid("every grid value yields tr S >= N")
    v = np.where(finite, values, np.inf)
    best = v.min()
    # ties (up to rounding) go to the smaller rho
    return int(np.flatnonzero(v <= best * (1 + 1e-12) + 1e-300)[0])


def gcv_select(stack: ImageStack, system: SplineBasisSystem, rho_grid=None, design: SplineDesign | None = None):
    """Pick ``rho`` minimising GCV on the averaged image.

    Returns ``(rho, rhos, gcv_values)``.
    """
    des = design or design_for(system, stack.coords)
    rhos = des.default_grid() if rho_grid is None else np.asarray(rho_grid, dtype=float)
    if rhos.size == 0:
        raise ValueError("rho grid is empty")
    if np.any(np.diff(rhos) < 0):
        raise ValueError("rho grid must be ascending")
    vals, _ = gcv_curve(des, stack.mean_image, rhos, stack.n)
    i = _argmin_first(vals)
    return float(rhos[i]), rhos, vals


def fit_mean(stack: ImageStack, system: SplineBasisSystem, rho="auto", rho_grid=None,
             design: SplineDesign | None = None) -> MeanFitResult:
    """Penalized spline estimate of the mean image.

    Parameters
    ----------
    rho : float or ``"auto"``
        Smoothing parameter; ``"auto"`` selects it by GCV over ``rho_grid``.
    """
    des = design or design_for(system, stack.coords)
    if des.N != stack.N:
        raise DomainMismatch("design and stack have different pixel counts")
    ybar = stack.mean_image
    n = stack.n
    rhos = np.empty(0)
    curve = np.empty(0)
    if isinstance(rho, str):
        if rho != "auto":
            raise ValueError(f"rho must be a number or 'auto', got {rho!r}")
        rho_val, rhos, curve = gcv_select(stack, system, rho_grid, design=des)
    else:
        rho_val = float(rho)
        if rho_val < 0:
            raise ValueError("rho must be nonnegative")
    if rho_val == 0 and (des.N < des.p or des.spectral is None):
        raise SingularSystem("rank-deficient design with rho = 0")
    rhs = des.U.T @ ybar
    theta, A = _solve_penalized(des.G, des.D, rhs, rho_val / n)
    fitted = des.U @ theta
    trace = float(np.trace(np.linalg.solve(A, des.G)))
    N = des.N
    rss = float(np.sum((ybar - fitted) ** 2))
    gcv = rss / (N * (1 - trace / N) ** 2) if trace < N else np.inf
    return MeanFitResult(
        theta=theta,
        gamma=system.Q2 @ theta,
        rho=rho_val,
        gcv_value=gcv,
        hat_trace=trace,
        fitted=fitted,
        residual_matrix=stack.values - fitted[None, :],
        n=n,
        design=des,
        gcv_rhos=rhos,
        gcv_curve=curve,
    )


def smoother_matrix(des: SplineDesign, rho: float, n: int) -> np.ndarray:
    """Dense ``N x N`` hat matrix (testing aid)."""
    A = des.G + (rho / n) * des.D
    return des.U @ np.linalg.solve(A, des.U.T)


# ---------------------------------------------------------------------- subject smoothing


def smooth_subjects(R, system: SplineBasisSystem, coords, rho_eta="auto", rho_grid=None,
                    design: SplineDesign | None = None):
    """Smooth each row of ``R`` separately on ``system`` (single-curve penalty).

    Every row solves ``||R_i - U beta||^2 + rho beta' D beta``. With
    ``rho_eta="auto"`` one ``rho`` is chosen for all rows by pooled GCV.

    Returns ``(coefficients (n, p), rho)``.
    """
    des = design or design_for(system, coords)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape[1] != des.N:
        raise DomainMismatch("residual rows do not match the pixel grid")
    if isinstance(rho_eta, str):
        if rho_eta != "auto":
            raise ValueError(f"rho_eta must be a number or 'auto', got {rho_eta!r}")
        rhos = des.default_grid() if rho_grid is None else np.asarray(rho_grid, float)
        if des.spectral is not None:
            vals, _ = _gcv_spectral(des, R.T, rhos, 1)
        else:
            vals = np.array([_pooled_gcv_direct(des, R, r) for r in rhos])
        rho = float(rhos[_argmin_first(vals)])
    else:
        rho = float(rho_eta)
    if rho == 0 and des.spectral is None:
        raise SingularSystem("rank-deficient design with rho = 0")
    coef, _ = _solve_penalized(des.G, des.D, des.U.T @ R.T, rho)
    return np.ascontiguousarray(coef.T), rho


def _pooled_gcv_direct(des, R, rho):
    try:
        coef, A = _solve_penalized(des.G, des.D, des.U.T @ R.T, rho)
    except SingularSystem:
        return np.inf
    tr = float(np.trace(np.linalg.solve(A, des.G)))
    if tr >= des.N:
        return np.inf
    rss = float(np.sum((R.T - des.U @ coef) ** 2))
    return rss / (R.shape[0] * des.N * (1 - tr / des.N) ** 2)


def smooth_subject(residual_row, system: SplineBasisSystem, coords, rho_eta="auto", rho_grid=None):
    """Single-subject convenience wrapper returning the reduced coefficient vector."""
    coef, _ = smooth_subjects(np.atleast_2d(residual_row), system, coords, rho_eta, rho_grid)
    return coef[0]


# ---------------------------------------------------------------------- Gram operator


@dataclass(eq=False)
class GramOperator:
    """``Gamma = U'U / N + rho / (n N) D`` and its Cholesky factor."""

    matrix: np.ndarray
    chol: np.ndarray
    rho: float
    n: int
    N: int

    def solve(self, rhs) -> np.ndarray:
        return sla.cho_solve((self.chol, True), rhs)

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


def gram_operator(design: SplineDesign, n: int, rho: float) -> GramOperator:
    N = design.N
    M = design.G / N + (rho / (n * N)) * design.D
    M = 0.5 * (M + M.T)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPD("Gamma is not positive definite; the spline space is too rich for the pixel grid") from exc
    if np.diag(L).min() <= 0:
        raise NotPD("Gamma is not positive definite")
    return GramOperator(matrix=M, chol=L, rho=float(rho), n=int(n), N=N)
