"""Data-driven choice of the mean and covariance triangulations.

Step 1 picks the mean mesh by leave-images-out k-fold cross-validation.
Step 2 picks the covariance mesh by a wild bootstrap: for every candidate the
residuals are split into a smooth subject part and pixel noise, both are
sign-flipped, the whole pipeline is rerun, and the candidate whose bootstrap
coverage of the fitted mean best tracks the nominal level over
``[alpha - delta, alpha + delta]`` wins.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .basis import SplineBasisSystem
from .errors import AllInvalid, SccError
from .estimator import ImageStack, MeanFitResult, design_for, fit_mean, smooth_subjects
from .fpca import fpca
from .geometry import TriangulationMesh
from .parallel import pmap
from .pipeline import FitConfig, eta_system, mean_system
from .scc import BASIC, build_scc_one, noise_term, simulate_quantile_one

N_ALPHA = 11
TIE_REL = 1e-12


@dataclass
class SelectionReport:
    """Scores behind a triangulation choice.

    ``cv_scores[i]`` belongs to ``mu_candidates[i]`` and ``objectives[i]`` to
    ``eta_candidates[i]``; skipped candidates score ``inf``.
    """

    mu_candidates: list
    eta_candidates: list
    cv_scores: list
    objectives: list
    chosen_mu: str
    chosen_eta: str
    k: int
    B: int
    delta: float
    alpha: float
    alpha_grid: list
    seed: int
    reselect_rho: bool = True
    coverage_curves: list = field(default_factory=list)

    def as_dict(self) -> dict:
        d = asdict(self)
        for key in ("cv_scores", "objectives"):
            d[key] = [v if np.isfinite(v) else None for v in d[key]]
        return d

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def _mesh_id(mesh: TriangulationMesh, i: int) -> str:
    return mesh.name or f"candidate_{i}"


def _pick(scores, meshes) -> int:
    """Smallest score; near-ties go to the mesh with fewer triangles, then to the earlier one."""
    s = np.asarray(scores, dtype=float)
    if not np.any(np.isfinite(s)):
        raise AllInvalid("every candidate failed")
    best = np.min(s[np.isfinite(s)])
    tied = [i for i in range(len(s)) if np.isfinite(s[i]) and s[i] <= best + TIE_REL * abs(best)]
    return min(tied, key=lambda i: (meshes[i].n_triangles, i))


def alpha_grid(alpha: float, delta: float, points: int = N_ALPHA) -> np.ndarray:
    lo, hi = alpha - delta, alpha + delta
    if not (0 < lo <= hi < 1):
        raise ValueError(f"[alpha - delta, alpha + delta] = [{lo}, {hi}] must lie inside (0, 1)")
    return np.linspace(lo, hi, points)


def fold_assignment(n: int, k: int, seed: int) -> list:
    perm = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0,))).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


# ---------------------------------------------------------------------- step 1


def cv_score(stack: ImageStack, system: SplineBasisSystem, folds, rho="auto", rho_grid=None) -> float:
    """Held-out squared error summed over subjects and pixels.

    Failed folds are dropped and the total is rescaled by the share of
    held-out subjects actually scored; ``inf`` if every fold fails.
    """
    total, scored = 0.0, 0
    des = design_for(system, stack.coords)
    for test in folds:
        train = np.setdiff1d(np.arange(stack.n), test)
        try:
            fit = fit_mean(stack.subset(train), system, rho, rho_grid, design=des)
        except SccError as exc:
            warnings.warn(f"CV fold skipped: {exc}", RuntimeWarning, stacklevel=2)
            continue
        total += float(np.sum((stack.values[test] - fit.fitted[None, :]) ** 2))
        scored += len(test)
    if scored == 0:
        return np.inf
    return total * stack.n / scored


def cv_select_mu(stack: ImageStack, candidates, k: int = 5, cfg: FitConfig = FitConfig(), seed: int = 0,
                 rho_grid=None, threads: int = 1):
    """Leave-images-out k-fold CV over candidate mean meshes.

    Returns ``(mesh, scores)``.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidate meshes")
    if k < 2 or stack.n < k:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={stack.n}")
    folds = fold_assignment(stack.n, k, seed)

    def score(mesh):
        try:
            system = mean_system(mesh, cfg)
            stack.check_domain(mesh)
        except SccError as exc:
            warnings.warn(f"candidate {mesh.name!r} skipped: {exc}", RuntimeWarning, stacklevel=2)
            return np.inf
        s = cv_score(stack, system, folds, cfg.rho, rho_grid)
        if not np.isfinite(s):
            warnings.warn(f"candidate {mesh.name!r} skipped: every fold failed", RuntimeWarning, stacklevel=2)
        return s

    scores = pmap(score, candidates, threads)
    return candidates[_pick(scores, candidates)], scores


# ---------------------------------------------------------------------- step 2


def _rademacher(rng, shape):
    return rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0


def wild_bootstrap_stack(mu_hat, eta, eps, rng) -> np.ndarray:
    """``Y* = mu_hat + delta_i eta_i + delta_ij eps_ij`` with Rademacher signs (subject signs drawn first)."""
    n, N = eps.shape
    d_i = _rademacher(rng, n)
    d_ij = _rademacher(rng, (n, N))
    return mu_hat[None, :] + d_i[:, None] * eta + d_ij * eps


def bootstrap_coverage(stack: ImageStack, fit: MeanFitResult, sys_eta: SplineBasisSystem, alphas,
                       B: int = 100, seed: int = 0, candidate: int = 0, cfg: FitConfig = FitConfig(),
                       B_scc: int = 1000, variant: str = BASIC, reselect_rho: bool = True,
                       domain_area: float | None = None, threads: int = 1) -> np.ndarray:
    """Bootstrap coverage of ``fit.fitted`` by bands at each level in ``alphas``.

    Replicate ``b`` of candidate ``q`` draws from ``SeedSequence(seed,
    spawn_key=(q, b))``: signs from its first child, band quantile seed from
    the second.
    """
    alphas = np.asarray(alphas, dtype=float)
    coords = stack.coords
    des_eta = design_for(sys_eta, coords)
    coef, rho_eta = smooth_subjects(fit.residual_matrix, sys_eta, coords, cfg.rho_eta, design=des_eta)
    eta = coef @ des_eta.U.T
    eps = fit.residual_matrix - eta
    mu_hat = fit.fitted
    sys_mu = fit.system
    area = sys_mu.mesh.area if domain_area is None else domain_area
    rho_mu = cfg.rho if reselect_rho else fit.rho
    rho_eta_use = cfg.rho_eta if reselect_rho else rho_eta

    def one(b):
        ss = np.random.SeedSequence(int(seed), spawn_key=(int(candidate), int(b)))
        data_ss, quant_ss = ss.spawn(2)
        Ystar = wild_bootstrap_stack(mu_hat, eta, eps, np.random.default_rng(data_ss))
        st = ImageStack(coords, Ystar)
        fb = fit_mean(st, sys_mu, rho_mu, design=fit.design)
        mb = fpca(st, fb, sys_eta, rho_eta_use, cfg.kappa, domain_area=area)
        noise = noise_term(fb, mb) if variant != BASIC else None
        qseed = int(quant_ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
        qe = simulate_quantile_one(mb, float(alphas.max()), B_scc, qseed, variant, noise)
        return [build_scc_one(fb, mb, a, B_scc, qseed, variant, quantile=qe, noise=noise).covers(mu_hat)
                for a in alphas]

    hits = np.array(pmap(one, range(int(B)), threads), dtype=float)
    return hits.mean(axis=0)


def coverage_objective(alphas, coverage) -> float:
    """Trapezoid approximation of the integrated squared coverage error."""
    a = np.asarray(alphas, dtype=float)
    err = (np.asarray(coverage, dtype=float) - (1.0 - a)) ** 2
    if len(a) == 1:
        return float(err[0])
    return float(np.trapezoid(err, a) if hasattr(np, "trapezoid") else np.trapz(err, a))


def bootstrap_select_eta(stack: ImageStack, fit: MeanFitResult, candidates, B: int = 100, alpha: float = 0.05,
                         delta: float = 0.005, seed: int = 0, cfg: FitConfig = FitConfig(), B_scc: int = 1000,
                         variant: str = BASIC, reselect_rho: bool = True, domain_area: float | None = None,
                         threads: int = 1, return_curves: bool = False):
    """Wild-bootstrap calibration over candidate covariance meshes.

    Returns ``(mesh, objectives)`` (plus per-candidate coverage curves when
    ``return_curves``).
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidate meshes")
    grid = alpha_grid(alpha, delta)
    objectives, curves = [], []
    for q, mesh in enumerate(candidates):
        try:
            stack.check_domain(mesh)
            sys_eta = eta_system(mesh, cfg)
            cov = bootstrap_coverage(stack, fit, sys_eta, grid, B, seed, q, cfg, B_scc, variant, reselect_rho,
                                     domain_area, threads)
        except SccError as exc:
            warnings.warn(f"candidate {mesh.name!r} skipped: {exc}", RuntimeWarning, stacklevel=2)
            objectives.append(np.inf)
            curves.append([])
            continue
        objectives.append(coverage_objective(grid, cov))
        curves.append(cov.tolist())
    chosen = candidates[_pick(objectives, candidates)]
    if return_curves:
        return chosen, objectives, curves
    return chosen, objectives


def select_triangulations(stack: ImageStack, mu_candidates, eta_candidates=None, k: int = 5, B: int = 100,
                          alpha: float = 0.05, delta: float = 0.005, seed: int = 0,
                          cfg: FitConfig = FitConfig(), B_scc: int = 1000, variant: str = BASIC,
                          reselect_rho: bool = True, domain_area: float | None = None,
                          threads: int = 1) -> SelectionReport:
    """Both selection steps; ``eta_candidates`` defaults to ``mu_candidates``."""
    mu_candidates = list(mu_candidates)
    eta_candidates = mu_candidates if eta_candidates is None else list(eta_candidates)
    mu_mesh, scores = cv_select_mu(stack, mu_candidates, k, cfg, seed, threads=threads)
    sys_mu = mean_system(mu_mesh, cfg)
    fit = fit_mean(stack, sys_mu, cfg.rho)
    eta_mesh, objectives, curves = bootstrap_select_eta(
        stack, fit, eta_candidates, B, alpha, delta, seed, cfg, B_scc, variant, reselect_rho, domain_area,
        threads, return_curves=True)
    return SelectionReport(
        mu_candidates=[_mesh_id(m, i) for i, m in enumerate(mu_candidates)],
        eta_candidates=[_mesh_id(m, i) for i, m in enumerate(eta_candidates)],
        cv_scores=[float(s) for s in scores],
        objectives=[float(o) for o in objectives],
        chosen_mu=_mesh_id(mu_mesh, mu_candidates.index(mu_mesh)),
        chosen_eta=_mesh_id(eta_mesh, eta_candidates.index(eta_mesh)),
        k=k, B=B, delta=delta, alpha=alpha, alpha_grid=alpha_grid(alpha, delta).tolist(), seed=seed,
        reselect_rho=reselect_rho, coverage_curves=curves,
    )
