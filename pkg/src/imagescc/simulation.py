"""Simulation designs and image generators.

Images follow

    Y_ij = mu(z_j) + sum_k sqrt(lambda_k) xi_ik psi_k(z_j) + sigma(z_j) eps_ij

with ``xi`` and ``eps`` standard normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .data import load_fixture
from .geometry import PixelGrid, TriangulationMesh, lattice_grid

C1, C2, C3, C4 = 0.988, 0.5, 2.157, -0.084


def eigenfunctions(z) -> np.ndarray:
    """The two simulation eigenfunctions evaluated at ``z``, shape (2, P)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return np.stack([C1 * np.sin(np.pi * z[:, 0]) + C2, C3 * np.cos(np.pi * z[:, 1]) + C4])


def _r2(z):
    return (z[:, 0] - 0.5) ** 2 + (z[:, 1] - 0.5) ** 2


def mean_quadratic(z):
    return 20.0 * _r2(z)


def mean_exponential(z):
    return 5.0 * np.exp(-15.0 * _r2(z)) + 0.5


def mean_cubic(z):
    return 3.2 * (-z[:, 0] ** 3 + z[:, 1] ** 3) + 2.4


def mean_sine(z):
    return -10.0 * (np.sin(5 * np.pi * (z[:, 0] + 0.22)) - np.sin(5 * np.pi * (z[:, 1] - 0.18))) + 2.8


def mean_bump(z):
    r2 = _r2(z)
    return np.where(r2 <= 0.10, np.exp(-30.0 * r2), 0.0)


def cubic_difference(z):
    """Direction of the two-sample mean shift."""
    return -z[:, 0] ** 3 + z[:, 1] ** 3


MEANS: dict[str, Callable] = {
    "quadratic": mean_quadratic,
    "exponential": mean_exponential,
    "cubic": mean_cubic,
    "sine": mean_sine,
    "bump": mean_bump,
}


def sigma_hetero(z):
    return 0.25 * (1.0 - _r2(z))


def sigma_const(value: float):
    def f(z):
        return np.full(len(z), float(value))

    return f


@dataclass(frozen=True)
class SimDesign:
    """One simulation setting.

    ``grid`` is the lattice size along z1; ``grid2`` (defaults to ``grid``) along
    z2. ``sigma`` is ``"hetero"`` for the heteroscedastic field or a constant.
    For two-sample designs ``delta`` is not None and group 2 has mean
    ``mu + delta * (-z1^3 + z2^3)``.
    """

    mean_id: str = "quadratic"
    n: int = 200
    n2: int | None = None
    delta: float | None = None
    grid: int = 40
    grid2: int | None = None
    lambdas: tuple = (0.5, 0.2)
    sigma: str | float = "hetero"
    domain: str = "brain_d1"
    reps: int = 200
    alphas: tuple = (0.10, 0.05, 0.01)
    seed: int = 2024
    custom_mean: Callable | None = field(default=None, compare=False, repr=False)

    @property
    def two_sample(self) -> bool:
        return self.delta is not None

    def mean_fn(self) -> Callable:
        if self.mean_id == "custom":
            if self.custom_mean is None:
                raise ValueError("custom mean requires custom_mean")
            return self.custom_mean
        try:
            return MEANS[self.mean_id]
        except KeyError:
            raise ValueError(f"unknown mean {self.mean_id!r}; choose from {sorted(MEANS)}") from None

    def sigma_fn(self) -> Callable:
        if self.sigma == "hetero":
            return sigma_hetero
        return sigma_const(float(self.sigma))

    def domain_mesh(self) -> TriangulationMesh:
        return load_fixture(self.domain)

    def pixel_grid(self) -> PixelGrid:
        return lattice_grid(self.domain_mesh(), self.grid, self.grid2)

    def with_(self, **kw) -> "SimDesign":
        return replace(self, **kw)


def named_design(name: str, **overrides) -> SimDesign:
    """Named designs: ``"one_sample"``, ``"two_sample"``, ``"detection"``."""
    if name == "one_sample":
        d = SimDesign()
    elif name == "two_sample":
        d = SimDesign(mean_id="quadratic", delta=0.0, sigma=0.1, alphas=(0.10, 0.05, 0.01))
    elif name == "detection":
        d = SimDesign(mean_id="bump", lambdas=(0.2, 0.05), grid=79, grid2=95, reps=100, alphas=(0.05,))
    else:
        raise ValueError(f"unknown design {name!r}")
    return replace(d, **overrides)


@dataclass
class SimulatedStack:
    """Generated images plus the truth needed to score them."""

    Y: np.ndarray
    grid: PixelGrid
    mu: np.ndarray
    cov_factor: np.ndarray  # (K, N) rows sqrt(lambda_k) psi_k(z_j)
    sigma: np.ndarray

    def true_cov(self, a=None, b=None) -> np.ndarray:
        """True ``G_eta`` between pixel sets (defaults to all pixels)."""
        fa = self.cov_factor if a is None else self.cov_factor[:, a]
        fb = self.cov_factor if b is None else self.cov_factor[:, b]
        return fa.T @ fb


def _draw(rng, mu, factor, sigma, n):
    xi = rng.standard_normal((n, factor.shape[0]))
    eps = rng.standard_normal((n, len(mu)))
    return mu[None, :] + xi @ factor + sigma[None, :] * eps


def generate_stack(design: SimDesign, rep_seed, grid: PixelGrid | None = None):
    """Draw one replicate.

    Returns a :class:`SimulatedStack` for one-sample designs and a pair of them
    for two-sample designs (group 1 first). ``rep_seed`` may be an int or a
    :class:`numpy.random.SeedSequence`.
    """
    grid = design.pixel_grid() if grid is None else grid
    z = grid.coords
    rng = np.random.default_rng(rep_seed)
    mu = design.mean_fn()(z)
    psi = eigenfunctions(z)[: len(design.lambdas)]
    factor = np.sqrt(np.asarray(design.lambdas, dtype=float))[:, None] * psi
    sig = design.sigma_fn()(z)
    Y1 = _draw(rng, mu, factor, sig, design.n)
    s1 = SimulatedStack(Y1, grid, mu, factor, sig)
    if not design.two_sample:
        return s1
    mu2 = mu + design.delta * cubic_difference(z)
    Y2 = _draw(rng, mu2, factor, sig, design.n2 or design.n)
    return s1, SimulatedStack(Y2, grid, mu2, factor, sig)


def rep_seeds(seed: int, reps: int) -> list:
    """Independent per-replicate seed sequences (data stream of :func:`rep_stream`)."""
    return [rep_stream(seed, r, 0) for r in range(reps)]


def rep_stream(seed: int, rep: int, stream: int = 0) -> np.random.SeedSequence:
    """Seed for stream ``stream`` of replicate ``rep``; independent of execution order."""
    return np.random.SeedSequence(int(seed), spawn_key=(int(rep), int(stream)))


def stream_int(seq: np.random.SeedSequence) -> int:
    """A 63-bit integer seed derived from a seed sequence."""
    return int(seq.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))
