"""Simultaneous confidence corridors for one mean image or a difference of two.

Quantiles come from simulating the standardized limiting process: for the
one-sample band

    zeta_b(z) = V(z)^-1/2 sum_k lambda_k^1/2 Z_kb psi_k(z),   V(z) = sum_k lambda_k psi_k(z)^2,

and ``q`` is the ``ceil((1 - alpha) B)``-th smallest of ``max_j |zeta_b(z_j)|``.

Random draws are consumed in a fixed order: one ``(B, width)`` block per
group (group 1 first); inside a row the ``kappa`` component draws precede the
``N`` pixel noise draws used by the adjusted variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCovariance, GridMismatch
from .estimator import GramOperator, MeanFitResult, gram_operator
from .fpca import CovarianceModel, error_covariance

FLOOR_REL = 1e-12
BASIC, ADJUSTED = "basic", "adjusted"
ABOVE_UPPER, BELOW_LOWER, CONTAINS0 = "above_upper", "below_lower", "contains0"
CHUNK = 2000


@dataclass(eq=False)
class QuantileEstimate:
    alpha: float
    value: float
    B: int
    seed: int | None
    maxima: np.ndarray | None = field(default=None, repr=False)

    def at(self, alpha: float) -> float:
        """Quantile for another ``alpha`` from the same draws (requires retained maxima)."""
        if self.maxima is None:
            raise ValueError("maxima were not retained")
        return order_statistic(self.maxima, alpha)


@dataclass(eq=False)
class SccBand:
    """A confidence corridor on the pixel grid."""

    center: np.ndarray
    half_width: np.ndarray
    alpha: float
    quantile: float
    variant: str
    B: int
    seed: int | None
    coords: np.ndarray | None = field(default=None, repr=False)

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.half_width

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.half_width

    @property
    def mean_width(self) -> float:
        return float(np.mean(2.0 * self.half_width))

    def covers(self, truth) -> bool:
        t = np.asarray(truth)
        return bool(np.all((self.lower <= t) & (t <= self.upper)))

    def excludes_zero(self) -> bool:
        return bool(np.any((self.lower > 0) | (self.upper < 0)))

    def summary(self) -> dict:
        return {
            "alpha": self.alpha,
            "q": self.quantile,
            "B": self.B,
            "seed": self.seed,
            "variant": self.variant,
            "mean_width": self.mean_width,
        }


def order_statistic(maxima, alpha: float) -> float:
    """``ceil((1 - alpha) B)``-th smallest value (1-based) of ``maxima``."""
    m = np.sort(np.asarray(maxima))
    B = len(m)
    k = min(max(int(math.ceil((1.0 - alpha) * B - 1e-9)), 1), B)
    return float(m[k - 1])


def _standardizer(field_values):
    v = np.asarray(field_values, dtype=float)
    top = v.max() if v.size else 0.0
    if not np.isfinite(top) or top <= 0:
        raise DegenerateCovariance("variance field is zero everywhere")
    floor = FLOOR_REL * top
    active = v >= floor
    sd = np.sqrt(np.where(active, v, floor))
    return sd, active


def _sup_abs(signal, sd, active):
    return np.max(np.abs(signal[:, active]) / sd[active], axis=1)


# ---------------------------------------------------------------------- one sample


@dataclass(eq=False)
class NoiseTerm:
    """Pixel-noise contribution to the adjusted process.

    ``(Z_eps @ left) @ right`` gives ``u(z)' Gamma^-1 N^-1 sum_j u_j sigma_j Z_j`` at
    every pixel, with ``left = diag(sigma) U Gamma^-1 / N`` (N, p) and ``right = U'``.
    """

    left: np.ndarray
    right: np.ndarray
    var_grid: np.ndarray  # n * G_eps(z, z)

    @property
    def width(self) -> int:
        return self.left.shape[0]


def noise_term(fit: MeanFitResult, model: CovarianceModel, gram: GramOperator | None = None) -> NoiseTerm:
    des = fit.design
    if model.sigma2_grid is None:
        raise ValueError("noise variance not estimated; run estimate_noise first")
    gram = gram or gram_operator(des, fit.n, fit.rho)
    U, N = des.U, des.N
    sig = np.sqrt(model.sigma2_grid)
    left = gram.solve((sig[:, None] * U).T).T / N
    eps_cov = error_covariance(model.sigma2_grid, gram, des, fit.n)
    return NoiseTerm(left=left, right=np.ascontiguousarray(U.T), var_grid=fit.n * eps_cov.diag_grid())


def _components(model: CovarianceModel):
    k = model.kappa
    lam = model.eigenvalues[:k]
    return np.sqrt(lam)[:, None] * model.psi_grid[:, :k].T  # (kappa, N)


def _simulate_maxima(blocks, sd, active, B, seed):
    """``blocks``: per group a tuple ``(comp (k, N), noise factor or None, weight)``."""
    rng = np.random.default_rng(seed)
    draws = []
    for comp, noise, _ in blocks:
        width = comp.shape[0] + (noise.width if noise is not None else 0)
        draws.append(rng.standard_normal((B, width)))
    return _maxima_from_draws(blocks, draws, sd, active)


def _maxima_from_draws(blocks, draws, sd, active):
    B = draws[0].shape[0]
    out = np.empty(B)
    for s in range(0, B, CHUNK):
        signal = 0.0
        for (comp, noise, w), Z in zip(blocks, draws):
            Zc = Z[s : s + CHUNK]
            k = comp.shape[0]
            part = Zc[:, :k] @ comp
            if noise is not None:
                part = part + (Zc[:, k:] @ noise.left) @ noise.right
            signal = signal + w * part
        out[s : s + CHUNK] = _sup_abs(signal, sd, active)
    return out


def one_sample_field(model: CovarianceModel, variant: str = BASIC, noise: NoiseTerm | None = None):
    var = model.truncated_var_grid()
    if variant == ADJUSTED:
        if noise is None:
            raise ValueError("adjusted variant needs the noise term")
        var = var + noise.var_grid
    elif variant != BASIC:
        raise ValueError(f"variant must be 'basic' or 'adjusted', got {variant!r}")
    return var


def simulate_quantile_one(model: CovarianceModel, alpha: float = 0.05, B: int = 1000, seed: int | None = 0,
                          variant: str = BASIC, noise: NoiseTerm | None = None,
                          keep_maxima: bool = True) -> QuantileEstimate:
    """Monte Carlo quantile of the sup of the standardized limiting process."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if model.kappa is None or model.kappa < 1:
        raise DegenerateCovariance("no retained components")
    var = one_sample_field(model, variant, noise)
    sd, active = _standardizer(var)
    blocks = [(_components(model), noise if variant == ADJUSTED else None, 1.0)]
    maxima = _simulate_maxima(blocks, sd, active, int(B), seed)
    return QuantileEstimate(alpha, order_statistic(maxima, alpha), int(B), seed, maxima if keep_maxima else None)


def build_scc_one(fit: MeanFitResult, model: CovarianceModel, alpha: float = 0.05, B: int = 1000,
                  seed: int | None = 0, variant: str = BASIC, quantile: QuantileEstimate | None = None,
                  noise: NoiseTerm | None = None) -> SccBand:
    """Band ``muhat(z) +/- n^-1/2 q V(z)^1/2`` on the fit's pixel grid."""
    if variant == ADJUSTED and noise is None:
        noise = noise_term(fit, model)
    if quantile is None:
        quantile = simulate_quantile_one(model, alpha, B, seed, variant, noise)
    q = quantile.value if quantile.alpha == alpha else quantile.at(alpha)
    var = one_sample_field(model, variant, noise)
    sd, _ = _standardizer(var)
    hw = q * sd / math.sqrt(fit.n)
    return SccBand(fit.fitted.copy(), hw, alpha, q, variant, quantile.B, quantile.seed, fit.design.coords)


def scc_one_multi(fit, model, alphas, B=1000, seed=0, variant=BASIC):
    """Bands for several ``alpha`` values from one set of draws."""
    noise = noise_term(fit, model) if variant == ADJUSTED else None
    q = simulate_quantile_one(model, max(alphas), B, seed, variant, noise)
    return {a: build_scc_one(fit, model, a, B, seed, variant, quantile=q, noise=noise) for a in alphas}


# ---------------------------------------------------------------------- two sample


@dataclass(eq=False)
class TwoSampleContext:
    """Fits and covariance models of two groups on a common pixel grid."""

    fit1: MeanFitResult
    model1: CovarianceModel
    fit2: MeanFitResult
    model2: CovarianceModel
    noise1: NoiseTerm | None = None
    noise2: NoiseTerm | None = None

    def __post_init__(self):
        c1, c2 = self.fit1.design.coords, self.fit2.design.coords
        if c1.shape != c2.shape or not np.array_equal(c1, c2):
            raise GridMismatch("the two groups are observed on different pixel grids")

    @property
    def n1(self) -> int:
        return self.fit1.n

    @property
    def n2(self) -> int:
        return self.fit2.n

    @property
    def tau(self) -> float:
        return self.n1 / self.n2

    def ensure_noise(self):
        if self.noise1 is None:
            self.noise1 = noise_term(self.fit1, self.model1)
        if self.noise2 is None:
            self.noise2 = noise_term(self.fit2, self.model2)

    def variance_field(self, variant: str = BASIC) -> np.ndarray:
        v1 = self.model1.truncated_var_grid()
        v2 = self.model2.truncated_var_grid()
        if variant == ADJUSTED:
            self.ensure_noise()
            v1 = v1 + self.noise1.var_grid
            v2 = v2 + self.noise2.var_grid
        elif variant != BASIC:
            raise ValueError(f"variant must be 'basic' or 'adjusted', got {variant!r}")
        return v1 + self.tau * v2

    def blocks(self, variant: str = BASIC):
        adj = variant == ADJUSTED
        if adj:
            self.ensure_noise()
        w2 = -math.sqrt(self.tau)
        return [
            (_components(self.model1), self.noise1 if adj else None, 1.0),
            (_components(self.model2), self.noise2 if adj else None, w2),
        ]


def simulate_quantile_two(ctx: TwoSampleContext, alpha: float = 0.05, B: int = 1000, seed: int | None = 0,
                          variant: str = BASIC, keep_maxima: bool = True) -> QuantileEstimate:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    sd, active = _standardizer(ctx.variance_field(variant))
    maxima = _simulate_maxima(ctx.blocks(variant), sd, active, int(B), seed)
    return QuantileEstimate(alpha, order_statistic(maxima, alpha), int(B), seed, maxima if keep_maxima else None)


def build_scc_two(ctx: TwoSampleContext, alpha: float = 0.05, B: int = 1000, seed: int | None = 0,
                  variant: str = BASIC, quantile: QuantileEstimate | None = None) -> SccBand:
    """Band ``(muhat1 - muhat2)(z) +/- n1^-1/2 q V(z)^1/2``."""
    if quantile is None:
        quantile = simulate_quantile_two(ctx, alpha, B, seed, variant)
    q = quantile.value if quantile.alpha == alpha else quantile.at(alpha)
    sd, _ = _standardizer(ctx.variance_field(variant))
    hw = q * sd / math.sqrt(ctx.n1)
    center = ctx.fit1.fitted - ctx.fit2.fitted
    return SccBand(center, hw, alpha, q, variant, quantile.B, quantile.seed, ctx.fit1.design.coords)


def scc_two_multi(ctx, alphas, B=1000, seed=0, variant=BASIC):
    q = simulate_quantile_two(ctx, max(alphas), B, seed, variant)
    return {a: build_scc_two(ctx, a, B, seed, variant, quantile=q) for a in alphas}


# ---------------------------------------------------------------------- labels


def exceedance_map(band: SccBand) -> np.ndarray:
    """Per-pixel label: zero above the upper surface, below the lower one, or inside."""
    lab = np.full(len(band.center), CONTAINS0, dtype=object)
    lab[band.upper < 0] = ABOVE_UPPER
    lab[band.lower > 0] = BELOW_LOWER
    return lab
