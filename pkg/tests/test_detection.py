import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from imagescc.detection import (bonferroni, cluster_null_size, cluster_threshold, detection_metrics,
                                one_sample_t, scc_discoveries)
from imagescc.geometry import lattice_grid, square_mesh
from imagescc.scc import BASIC, SccBand


def test_t_statistics_match_scipy(rng):
    Y = rng.standard_normal((12, 50)) + 0.3
    t, p = one_sample_t(Y)
    ref = stats.ttest_1samp(Y, 0.0, axis=0)
    np.testing.assert_allclose(t, ref.statistic, rtol=1e-12)
    np.testing.assert_allclose(p, ref.pvalue, rtol=1e-10)


def test_constant_pixel_gives_null_statistic():
    t, p = one_sample_t(np.ones((5, 2)) * [[0.0, 1.0]])
    assert t.tolist() == [0.0, 0.0] and p.tolist() == [1.0, 1.0]


def test_bonferroni_cutoff(rng):
    Y = rng.standard_normal((20, 100))
    Y[:, :5] += 3.0
    _, p = one_sample_t(Y)
    np.testing.assert_array_equal(bonferroni(Y, 0.05), p < 0.0005)
    assert bonferroni(Y, 0.05)[:5].all()


@pytest.fixture(scope="module")
def grid():
    return lattice_grid(square_mesh(2), 20)


def test_cluster_threshold_keeps_block(grid):
    rng = np.random.default_rng(0)
    z = grid.coords
    block = (z[:, 0] > 0.3) & (z[:, 0] < 0.7) & (z[:, 1] > 0.3) & (z[:, 1] < 0.7)
    Y = rng.standard_normal((30, grid.n)) + 1.5 * block
    found = cluster_threshold(Y, grid, 0.01, n_flip=50, seed=1)
    assert found[block].mean() > 0.9
    assert found[~block].mean() < 0.05


def test_cluster_null_size_deterministic(grid):
    Y = np.random.default_rng(2).standard_normal((15, grid.n))
    a = cluster_null_size(Y, grid, 0.05, n_flip=30, seed=4)
    assert a == cluster_null_size(Y, grid, 0.05, n_flip=30, seed=4)
    assert a >= 1


def test_metrics_hand_example():
    d = np.array([1, 1, 0, 0, 1, 0], bool)
    t = np.array([1, 0, 1, 0, 1, 0], bool)
    m = detection_metrics(d, t)
    assert (m.fpr, m.fnr, m.fdr) == (1 / 6, 1 / 6, 1 / 3)
    assert (m.fpr_neg, m.fnr_pos, m.discoveries) == (1 / 3, 1 / 3, 3)
    assert detection_metrics(np.zeros(4, bool), np.ones(4, bool)).fdr == 0.0


@given(d=st.lists(st.booleans(), min_size=1, max_size=50), data=st.data())
def test_metric_ranges(d, data):
    t = data.draw(st.lists(st.booleans(), min_size=len(d), max_size=len(d)))
    m = detection_metrics(d, t)
    for v in (m.fpr, m.fnr, m.fdr, m.fpr_neg, m.fnr_pos):
        assert 0 <= v <= 1
    assert m.fpr + m.fnr <= 1
    if d == t:
        assert m.fpr == m.fnr == m.fdr == 0


def test_scc_discoveries():
    band = SccBand(np.array([3.0, 0.0, -3.0]), np.ones(3), 0.05, 2.0, BASIC, 1, 0)
    assert scc_discoveries(band).tolist() == [True, False, True]
