"""Covariance estimation and functional principal components.

Each subject's residual surface is smoothed on a (possibly different) spline
space, giving reduced coefficients ``beta_i``; the covariance estimate is
``G_eta(z, z') = u(z)' S_eta u(z')`` with ``S_eta = n^-1 sum_i beta_i beta_i'``
and ``u(z) = Q2' B(z)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import SplineBasisSystem
from .errors import NoPositiveEigenvalues
from .estimator import GramOperator, ImageStack, MeanFitResult, SplineDesign, design_for, smooth_subjects

EIG_REL_TOL = 1e-12


@dataclass(eq=False)
class CovarianceModel:
    """Estimated covariance of the subject-level deviations.

    Eigen quantities are ``None`` until :func:`eigen_decompose` runs.
    ``eigenvectors`` holds reduced coefficient vectors (columns) with
    ``psi_k(z) = u(z)' eigenvectors[:, k]``; ``psi_grid`` holds their pixel
    values, shape ``(N, K)``.
    """

    eta_coeffs: np.ndarray
    S_eta: np.ndarray
    design: SplineDesign = field(repr=False)
    rho_eta: float = 0.0
    pixel_area: float = 0.0
    eigenvalues: np.ndarray | None = None
    eigenvectors: np.ndarray | None = None
    psi_grid: np.ndarray | None = None
    kappa: int | None = None
    sigma2_grid: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.eta_coeffs.shape[0]

    @property
    def system(self) -> SplineBasisSystem:
        return self.design.system

    def eta_grid(self) -> np.ndarray:
        """Smoothed subject deviations at the pixels, shape ``(n, N)``."""
        return self.eta_coeffs @ self.design.U.T

    def cov(self, za, zb=None) -> np.ndarray:
        """``G_eta`` between two point sets."""
        ua = self.system.reduced_eval(za)
        ub = ua if zb is None else self.system.reduced_eval(zb)
        return ua @ self.S_eta @ ub.T

    def cov_diag_grid(self) -> np.ndarray:
        U = self.design.U
        return np.einsum("ij,jk,ik->i", U, self.S_eta, U)

    def truncated_var_grid(self, kappa: int | None = None) -> np.ndarray:
        """``sum_{k<=kappa} lambda_k psi_k(z)^2`` at the pixels."""
        k = self.kappa if kappa is None else kappa
        lam = self.eigenvalues[:k]
        psi = self.psi_grid[:, :k]
        return psi**2 @ lam

    def psi(self, points, k=None) -> np.ndarray:
        vecs = self.eigenvectors if k is None else self.eigenvectors[:, :k]
        return self.system.reduced_eval(points) @ vecs


def estimate_covariance(stack: ImageStack, fit: MeanFitResult, system_eta: SplineBasisSystem,
                        rho_eta="auto", rho_grid=None, domain_area: float | None = None) -> CovarianceModel:
    """Smooth every residual image on ``system_eta`` and form ``S_eta``."""
    des = design_for(system_eta, stack.coords)
    coef, rho = smooth_subjects(fit.residual_matrix, system_eta, stack.coords, rho_eta, rho_grid, design=des)
    n = coef.shape[0]
    S = coef.T @ coef / n
    area = system_eta.mesh.area if domain_area is None else float(domain_area)
    return CovarianceModel(
        eta_coeffs=coef,
        S_eta=0.5 * (S + S.T),
        design=des,
        rho_eta=rho,
        pixel_area=area / des.N,
    )


def _sign_fix(psi_cols, area):
    signs = np.ones(psi_cols.shape[1])
    for k in range(psi_cols.shape[1]):
        col = psi_cols[:, k]
        total = col.sum() * area
        scale = np.abs(col).max() * len(col) * area
        if abs(total) > 1e-12 * max(scale, 1e-300):
            signs[k] = 1.0 if total > 0 else -1.0
        else:
            nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
            signs[k] = 1.0 if len(nz) == 0 or col[nz[0]] > 0 else -1.0
    return signs


def eigen_decompose(model: CovarianceModel) -> CovarianceModel:
    """Pixel-discretized eigen-analysis of ``G_eta``.

    Solves ``A sum_j G(z_j, z') psi(z_j) = lambda psi(z')`` (``A`` = pixel area)
    in coefficient space: with ``U = Qu Ru`` the problem becomes the symmetric
    eigenproblem of ``A Ru S_eta Ru'``. Eigenfunctions satisfy
    ``A sum_j psi_k(z_j)^2 = 1``; nonpositive eigenvalues are dropped.
    """
    des = model.design
    A = model.pixel_area
    Qu, Ru = np.linalg.qr(des.U)
    M = A * (Ru @ model.S_eta @ Ru.T)
    lam, W = np.linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(lam)[::-1]
    lam, W = lam[order], W[:, order]
    top = lam[0] if len(lam) else 0.0
    keep = lam > max(EIG_REL_TOL * top, 0.0) if top > 0 else np.zeros(len(lam), bool)
    if not np.any(keep):
        raise NoPositiveEigenvalues("covariance estimate has no positive eigenvalues")
    lam, W = lam[keep], W[:, keep]
    psi_grid = Qu @ W / np.sqrt(A)
    coeffs = np.linalg.lstsq(Ru, W, rcond=None)[0] / np.sqrt(A)
    signs = _sign_fix(psi_grid, A)
    model.eigenvalues = lam
    model.eigenvectors = coeffs * signs
    model.psi_grid = psi_grid * signs
    if model.kappa is None or model.kappa > len(lam):
        model.kappa = len(lam)
    return model


def select_kappa(eigenvalues, rule="fve", tau: float = 0.95, k: int | None = None) -> int:
    """Number of retained components.

    ``rule="fve"`` returns the smallest ``kappa`` whose cumulative share of the
    positive eigenvalues reaches ``tau``; ``rule="fixed"`` returns ``k``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    lam = lam[lam > 0]
    if len(lam) == 0:
        raise NoPositiveEigenvalues("no positive eigenvalues")
    if rule == "fixed":
        if k is None or k < 1:
            raise ValueError("fixed rule needs k >= 1")
        return int(k)
    if rule != "fve":
        raise ValueError(f"unknown kappa rule {rule!r}")
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    share = np.cumsum(lam) / lam.sum()
    return int(np.flatnonzero(share >= tau - 1e-12)[0] + 1)


def parse_kappa(spec: str | int | None):
    """Parse ``"fve:0.95"`` / ``"k:2"`` / int into ``(rule, tau, k)``."""
    if spec is None:
        return "fve", 0.95, None
    if isinstance(spec, (int, np.integer)):
        return "fixed", 0.95, int(spec)
    s = str(spec).strip().lower()
    if s.startswith("fve:"):
        return "fve", float(s[4:]), None
    if s.startswith("k:"):
        return "fixed", 0.95, int(s[2:])
    raise ValueError(f"kappa must look like 'fve:<tau>' or 'k:<int>', got {spec!r}")


def estimate_noise(fit: MeanFitResult, model: CovarianceModel) -> np.ndarray:
    """``sigma2(z_j) = n^-1 sum_i (R_ij - eta_i(z_j))^2``."""
    eps = fit.residual_matrix - model.eta_grid()
    s2 = np.mean(eps**2, axis=0)
    model.sigma2_grid = s2
    return s2


@dataclass(eq=False)
class ErrorCovariance:
    """``G_eps(z, z') = u(z)' M u(z')`` on the mean-fit spline space."""

    M: np.ndarray
    design: SplineDesign = field(repr=False)

    def diag_grid(self) -> np.ndarray:
        U = self.design.U
        return np.einsum("ij,jk,ik->i", U, self.M, U)


def error_covariance(sigma2, gram: GramOperator, mean_design: SplineDesign, n: int) -> ErrorCovariance:
    """``M = n^-1 N^-2 Gamma^-1 (sum_j u_j sigma2_j u_j') Gamma^-1``."""
    U = mean_design.U
    N = mean_design.N
    inner = U.T @ (np.asarray(sigma2)[:, None] * U)
    X = gram.solve(inner)
    M = gram.solve(X.T).T / (n * N**2)
    return ErrorCovariance(M=0.5 * (M + M.T), design=mean_design)


def fpca(stack: ImageStack, fit: MeanFitResult, system_eta: SplineBasisSystem, rho_eta="auto",
         kappa="fve:0.95", domain_area: float | None = None) -> CovarianceModel:
    """Covariance, eigenpairs, retained count and noise field in one call."""
    model = estimate_covariance(stack, fit, system_eta, rho_eta, domain_area=domain_area)
    eigen_decompose(model)
    rule, tau, k = parse_kappa(kappa)
    model.kappa = min(select_kappa(model.eigenvalues, rule, tau, k), len(model.eigenvalues))
    estimate_noise(fit, model)
    return model
