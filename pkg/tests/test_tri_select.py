import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from imagescc.errors import AllInvalid
from imagescc.estimator import ImageStack, fit_mean
from imagescc.geometry import TriangulationMesh, lattice_grid, square_mesh
from imagescc.pipeline import FitConfig, mean_system
from imagescc.tri_select import (alpha_grid, bootstrap_coverage, bootstrap_select_eta, coverage_objective,
                                 cv_score, cv_select_mu, fold_assignment, select_triangulations,
                                 wild_bootstrap_stack, _pick)
from imagescc.pipeline import eta_system

CFG = FitConfig()


@pytest.fixture(scope="module")
def meshes():
    return [square_mesh(1), square_mesh(4)]


@pytest.fixture(scope="module")
def wavy(meshes):
    grid = lattice_grid(meshes[1], 20)
    z = grid.coords
    rng = np.random.default_rng(0)
    mu = np.sin(4 * np.pi * z[:, 0]) * np.cos(3 * np.pi * z[:, 1])
    xi = rng.standard_normal((30, 1)) * 0.5
    return ImageStack(z, mu + xi + 0.1 * rng.standard_normal((30, grid.n)))


def test_alpha_grid():
    g = alpha_grid(0.05, 0.005)
    assert len(g) == 11 and g[0] == pytest.approx(0.045) and g[-1] == pytest.approx(0.055)
    with pytest.raises(ValueError):
        alpha_grid(0.05, 0.06)


@given(n=st.integers(2, 200), k=st.integers(2, 10), seed=st.integers(0, 10**6))
def test_folds_partition_subjects(n, k, seed):
    k = min(k, n)
    folds = fold_assignment(n, k, seed)
    assert len(folds) == k
    assert sorted(np.concatenate(folds).tolist()) == list(range(n))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    assert all(np.array_equal(a, b) for a, b in zip(folds, fold_assignment(n, k, seed)))


def test_cv_score_oracle(wavy, meshes):
    folds = fold_assignment(wavy.n, 3, 1)
    system = mean_system(meshes[0], CFG)
    total = 0.0
    for f in folds:
        train = np.setdiff1d(np.arange(wavy.n), f)
        fit = fit_mean(wavy.subset(train), system, 0.5)
        total += np.sum((wavy.values[f] - fit.fitted) ** 2)
    assert cv_score(wavy, system, folds, 0.5) == pytest.approx(total, rel=1e-12)


def test_cv_prefers_fine_mesh_for_wavy_mean(wavy, meshes):
    chosen, scores = cv_select_mu(wavy, meshes, k=5, seed=0)
    assert chosen is meshes[1] and scores[1] < scores[0]


def test_cv_single_candidate(wavy, meshes):
    chosen, scores = cv_select_mu(wavy, meshes[:1], k=3)
    assert chosen is meshes[0] and np.isfinite(scores[0])


def test_cv_coarse_wins_on_plane(meshes):
    grid = lattice_grid(meshes[1], 15)
    rng = np.random.default_rng(5)
    plane = 1 + grid.coords[:, 0]
    stack = ImageStack(grid.coords, plane + 0.2 * rng.standard_normal((20, grid.n)))
    chosen, scores = cv_select_mu(stack, meshes, k=4)
    # both spaces reproduce a plane; the coarse one must not lose
    assert chosen is meshes[0]


def test_cv_skips_candidates_outside_domain(wavy, meshes):
    small = TriangulationMesh([[0, 0], [0.5, 0], [0, 0.5]], [[0, 1, 2]], name="small")
    with pytest.warns(RuntimeWarning, match="small"):
        chosen, scores = cv_select_mu(wavy, [small, meshes[0]], k=3)
    assert chosen is meshes[0] and scores[0] == np.inf
    with pytest.warns(RuntimeWarning), pytest.raises(AllInvalid):
        cv_select_mu(wavy, [small], k=3)


def test_cv_argument_checks(wavy, meshes):
    with pytest.raises(ValueError):
        cv_select_mu(wavy, [], k=3)
    with pytest.raises(ValueError):
        cv_select_mu(wavy, meshes, k=1)


def test_pick_tie_rules(meshes):
    assert _pick([1.0, 1.0], [meshes[1], meshes[0]]) == 1
    assert _pick([1.0, 1.0], [meshes[0], meshes[0]]) == 0
    assert _pick([np.inf, 2.0], meshes) == 1
    with pytest.raises(AllInvalid):
        _pick([np.inf], meshes[:1])


@given(seed=st.integers(0, 10**6))
def test_objective_nonnegative_and_zero_on_nominal(seed):
    a = alpha_grid(0.05, 0.005)
    cov = np.random.default_rng(seed).uniform(0, 1, len(a))
    assert coverage_objective(a, cov) >= 0
    assert coverage_objective(a, 1 - a) == 0


def test_objective_trapezoid():
    a = np.array([0.04, 0.05, 0.06])
    cov = 1 - a + np.array([0.1, 0.0, 0.1])
    assert coverage_objective(a, cov) == pytest.approx(0.01 * 0.01 * 0.5 + 0.01 * 0.01 * 0.5)


def test_wild_bootstrap_moments():
    rng = np.random.default_rng(0)
    mu = np.array([1.0, -1.0, 0.5])
    eta = np.tile([[2.0, 1.0, 0.0]], (4000, 1))
    eps = np.full((4000, 3), 0.5)
    Y = wild_bootstrap_stack(mu, eta, eps, rng)
    # each entry is mu + (+-eta) + (+-eps): mean mu, variance eta^2 + eps^2
    se = np.sqrt((eta[0] ** 2 + 0.25) / 4000)
    assert np.all(np.abs(Y.mean(axis=0) - mu) <= 3 * se + 1e-12)
    np.testing.assert_allclose(Y.var(axis=0), eta[0] ** 2 + 0.25, rtol=0.1)
    # signs drawn subjects first, then pixels
    r = np.random.default_rng(1)
    Y1 = wild_bootstrap_stack(mu, eta[:2], eps[:2], np.random.default_rng(1))
    d_i = r.integers(0, 2, 2) * 2.0 - 1.0
    d_ij = r.integers(0, 2, (2, 3)) * 2.0 - 1.0
    np.testing.assert_array_equal(Y1, mu + d_i[:, None] * eta[:2] + d_ij * eps[:2])


def test_bootstrap_smoke_and_determinism(wavy, meshes):
    fit = fit_mean(wavy, mean_system(meshes[1], CFG))
    sys_eta = eta_system(meshes[0], CFG)
    a = alpha_grid(0.05, 0.005)
    c1 = bootstrap_coverage(wavy, fit, sys_eta, a, B=1, seed=3, B_scc=200)
    assert c1.shape == (11,) and set(np.unique(c1)) <= {0.0, 1.0}
    c4 = bootstrap_coverage(wavy, fit, sys_eta, a, B=4, seed=3, B_scc=200)
    assert np.array_equal(c4, bootstrap_coverage(wavy, fit, sys_eta, a, B=4, seed=3, B_scc=200, threads=3))
    assert np.all(np.diff(c4) <= 0)


def test_bootstrap_single_candidate(wavy, meshes):
    fit = fit_mean(wavy, mean_system(meshes[1], CFG))
    chosen, obj = bootstrap_select_eta(wavy, fit, meshes[:1], B=2, B_scc=100)
    assert chosen is meshes[0] and len(obj) == 1 and obj[0] >= 0


def test_report_json(wavy, meshes):
    rep = select_triangulations(wavy, meshes, k=3, B=2, B_scc=100, seed=4)
    d = json.loads(rep.to_json())
    assert d["chosen_mu"] == "square_4"
    assert d["mu_candidates"] == ["square_1", "square_4"]
    assert len(d["coverage_curves"]) == 2 and len(d["alpha_grid"]) == 11
