"""Pixelwise signal detection: Bonferroni, cluster threshold, and SCC exceedance.

All detectors test ``H0: mu(z_j) = 0`` from a stack of images and return a
boolean discovery mask over the in-domain pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, stats

from .geometry import PixelGrid
from .scc import CONTAINS0, SccBand, exceedance_map

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def one_sample_t(Y) -> tuple[np.ndarray, np.ndarray]:
    """Pixelwise one-sample t statistics and two-sided p-values."""
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    m = Y.mean(axis=0)
    s = Y.std(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(s > 0, m / (s / np.sqrt(n)), 0.0)
    p = 2.0 * stats.t.sf(np.abs(t), df=n - 1)
    return t, p


def bonferroni(Y, alpha: float = 0.05) -> np.ndarray:
    _, p = one_sample_t(Y)
    return p < alpha / p.size


def _cluster_sizes(mask_img):
    lab, k = ndimage.label(mask_img, structure=FOUR_CONNECTED)
    if k == 0:
        return lab, np.zeros(0, dtype=int)
    return lab, np.bincount(lab.ravel())[1:]


def cluster_null_size(Y, grid: PixelGrid, p_thr: float, n_flip: int = 100, seed=0, quantile: float = 0.95) -> float:
    """Quantile of the largest supra-threshold cluster under random subject sign flips."""
    rng = np.random.default_rng(seed)
    Y = np.asarray(Y, dtype=float)
    maxima = np.empty(n_flip)
    for b in range(n_flip):
        signs = rng.choice((-1.0, 1.0), size=Y.shape[0])
        _, p = one_sample_t(signs[:, None] * Y)
        _, sizes = _cluster_sizes(grid.to_image(p < p_thr, fill=0) > 0)
        maxima[b] = sizes.max() if sizes.size else 0
    return float(np.quantile(maxima, quantile))


def cluster_threshold(Y, grid: PixelGrid, p_thr: float = 0.05, n_flip: int = 100, seed=0) -> np.ndarray:
    """Keep 4-connected supra-threshold clusters larger than the sign-flip null size."""
    _, p = one_sample_t(Y)
    lab, sizes = _cluster_sizes(grid.to_image(p < p_thr, fill=0) > 0)
    cutoff = cluster_null_size(Y, grid, p_thr, n_flip, seed)
    keep_ids = np.flatnonzero(sizes > cutoff) + 1
    keep_img = np.isin(lab, keep_ids)
    return keep_img[grid.index[:, 0], grid.index[:, 1]]


def scc_discoveries(band: SccBand) -> np.ndarray:
    return exceedance_map(band) != CONTAINS0


@dataclass(frozen=True)
class DetectionMetrics:
    """Error rates of one discovery mask.

    ``fpr``/``fnr`` divide by the number of in-domain pixels; ``fpr_neg`` and
    ``fnr_pos`` are the conventional rates over truly null / truly active pixels.
    ``fdr`` is 0 when nothing is discovered.
    """

    fpr: float
    fnr: float
    fdr: float
    fpr_neg: float
    fnr_pos: float
    discoveries: int

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("fpr", "fnr", "fdr", "fpr_neg", "fnr_pos", "discoveries")}


def detection_metrics(discovered, truth) -> DetectionMetrics:
    d = np.asarray(discovered, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    N = d.size
    fp = int(np.sum(d & ~t))
    fn = int(np.sum(~d & t))
    disc = int(d.sum())
    return DetectionMetrics(
        fpr=fp / N,
        fnr=fn / N,
        fdr=fp / disc if disc else 0.0,
        fpr_neg=fp / max(int((~t).sum()), 1),
        fnr_pos=fn / max(int(t.sum()), 1),
        discoveries=disc,
    )
