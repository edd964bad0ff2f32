import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from imagescc.basis import build_system
from imagescc.data import load_fixture
from imagescc.errors import DomainMismatch, InputError
from imagescc.estimator import (ImageStack, _gcv_direct, _gcv_spectral, _pooled_gcv_direct, design_for, fit_mean,
                                gcv_select, gram_operator, smooth_subjects, smoother_matrix)
from imagescc.geometry import lattice_grid

from oracles import constrained_penalized_fit, dense_basis, smoothness_by_sampling, symbolic_penalty


def fan_pixels(mesh, k=7):
    g = np.linspace(0.02, 0.98, k)
    pts = np.array([(x, y) for y in g for x in g])
    return pts[mesh.locate(pts) >= 0]


@pytest.fixture(scope="module")
def small_case(four_triangles):
    with pytest.warns(UserWarning):
        system = build_system(four_triangles, 3, 1)
    pts = fan_pixels(four_triangles)
    rng = np.random.default_rng(7)
    Y = np.sin(3 * pts[:, 0]) + pts[:, 1] ** 2 + 0.2 * rng.standard_normal((6, len(pts)))
    return system, ImageStack(pts, Y)


@pytest.mark.parametrize("rho", [0.0, 1e-3, 0.1, 10.0])
def test_matches_constrained_oracle(four_triangles, small_case, rho):
    system, stack = small_case
    assert stack.N <= 50
    B = dense_basis(four_triangles, 3, stack.coords)
    P = symbolic_penalty(four_triangles, 3)
    H = smoothness_by_sampling(four_triangles, 3, 1)
    g = constrained_penalized_fit(B, P, H, stack.mean_image, rho / stack.n)
    fit = fit_mean(stack, system, rho)
    np.testing.assert_allclose(fit.fitted, B @ g, atol=1e-9)


def test_hat_trace_matches_dense_smoother(small_case):
    system, stack = small_case
    fit = fit_mean(stack, system, 0.3)
    S = smoother_matrix(fit.design, 0.3, stack.n)
    assert fit.hat_trace == pytest.approx(np.trace(S), rel=1e-10)
    np.testing.assert_allclose(S @ stack.mean_image, fit.fitted, atol=1e-10)


def test_spectral_gcv_equals_direct(small_case):
    system, stack = small_case
    des = design_for(system, stack.coords)
    assert des.spectral is not None
    rhos = des.default_grid()
    v_s, t_s = _gcv_spectral(des, stack.mean_image, rhos, stack.n)
    v_d, t_d = _gcv_direct(des, stack.mean_image, rhos, stack.n)
    np.testing.assert_allclose(t_s, t_d, rtol=1e-8)
    fin = np.isfinite(v_d)
    np.testing.assert_allclose(v_s[fin], v_d[fin], rtol=1e-7)


def test_gcv_choice_is_grid_argmin(small_case):
    system, stack = small_case
    rho, rhos, vals = gcv_select(stack, system)
    assert rho == rhos[int(np.nanargmin(np.where(np.isfinite(vals), vals, np.inf)))]
    assert len(rhos) == 21 and rhos[-1] / rhos[0] == pytest.approx(1e9)
    fit = fit_mean(stack, system)
    assert fit.rho == rho


@pytest.fixture(scope="module")
def brain():
    mesh = load_fixture("brain_d1")
    return build_system(mesh, 5, 1), lattice_grid(mesh, 40)


@pytest.mark.parametrize("poly", [
    lambda z: 2.0 + 0 * z[:, 0],
    lambda z: 1 - 3 * z[:, 0] + 0.5 * z[:, 1],
])
@pytest.mark.parametrize("rho", [0.0, 1.0, "auto"])
def test_reproduces_linear_images(brain, poly, rho):
    system, grid = brain
    y = poly(grid.coords)
    fit = fit_mean(ImageStack(grid.coords, np.vstack([y, y])), system, rho)
    np.testing.assert_allclose(fit.fitted, y, atol=1e-9)


def test_reproduces_quintic_without_penalty(brain):
    system, grid = brain
    z = grid.coords
    y = z[:, 0] ** 5 - 2 * z[:, 0] ** 2 * z[:, 1] ** 3 + z[:, 1]
    fit = fit_mean(ImageStack(z, y), system, 0.0)
    np.testing.assert_allclose(fit.fitted, y, atol=1e-8)


@given(a=st.floats(-5, 5), b=st.floats(0.1, 10).flatmap(lambda v: st.sampled_from([v, -v])),
       seed=st.integers(0, 1000))
def test_affine_equivariance(brain, a, b, seed):
    system, grid = brain
    rng = np.random.default_rng(seed)
    Y = np.cos(2 * grid.coords[:, 0]) + 0.3 * rng.standard_normal((4, grid.n))
    f1 = fit_mean(ImageStack(grid.coords, Y), system)
    f2 = fit_mean(ImageStack(grid.coords, a + b * Y), system)
    assert f2.rho == f1.rho
    np.testing.assert_allclose(f2.fitted, a + b * f1.fitted, atol=1e-8 * (1 + abs(a) + abs(b)))


def test_penalty_shrinks_toward_plane(brain):
    system, grid = brain
    y = grid.coords[:, 0] ** 2
    stack = ImageStack(grid.coords, y)
    e = [system.energy(fit_mean(stack, system, r).gamma) for r in (0.0, 1.0, 100.0, 1e6)]
    assert all(x >= y - 1e-9 for x, y in zip(e, e[1:]))
    assert e[-1] < 1e-2 * e[0]


def test_subject_smoothing_rowwise(brain):
    system, grid = brain
    rng = np.random.default_rng(3)
    R = rng.standard_normal((3, grid.n))
    coef, rho = smooth_subjects(R, system, grid.coords, 0.5)
    des = design_for(system, grid.coords)
    for i in range(3):
        ref = np.linalg.solve(des.G + 0.5 * des.D, des.U.T @ R[i])
        np.testing.assert_allclose(coef[i], ref, atol=1e-9)
    assert rho == 0.5


def test_pooled_gcv_spectral_equals_direct(brain):
    system, grid = brain
    R = np.random.default_rng(4).standard_normal((3, grid.n))
    des = design_for(system, grid.coords)
    rhos = des.default_grid()[::5]
    v_s, _ = _gcv_spectral(des, R.T, rhos, 1)
    v_d = np.array([_pooled_gcv_direct(des, R, r) for r in rhos])
    np.testing.assert_allclose(v_s, v_d, rtol=1e-7)


def test_gram_operator(brain):
    system, grid = brain
    des = design_for(system, grid.coords)
    g = gram_operator(des, 10, 2.0)
    np.testing.assert_allclose(g.matrix, des.G / grid.n + 2.0 / (10 * grid.n) * des.D, atol=1e-14)
    x = np.arange(des.p, dtype=float)
    np.testing.assert_allclose(g.matrix @ g.solve(x), x, atol=1e-8)
    assert g.min_eigenvalue > 0


def test_input_errors(brain):
    system, grid = brain
    with pytest.raises(InputError):
        ImageStack(grid.coords, np.full(grid.n, np.nan))
    with pytest.raises(InputError):
        ImageStack(grid.coords, np.zeros(grid.n + 1))
    with pytest.raises(DomainMismatch):
        fit_mean(ImageStack([[5.0, 5.0]], [1.0]), system)
    stack = ImageStack(grid.coords, np.zeros(grid.n))
    with pytest.raises(ValueError):
        fit_mean(stack, system, -1.0)
    with pytest.raises(ValueError):
        fit_mean(stack, system, "gcv")
    with pytest.raises(ValueError):
        fit_mean(stack, system, rho_grid=[1.0, 0.5])
