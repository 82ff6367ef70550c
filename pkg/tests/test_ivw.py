"""MV-IVW / MV-IVW-PCA oracle and property tests."""

import numpy as np
import pytest

from cismvmr import (
    RankDeficientDesign,
    SummaryDataset,
    TooFewComponents,
    build_psi,
    build_sigma,
    component_variances,
    mv_ivw,
    mv_ivw_pca,
    pca_decompose,
    select_num_components,
    transform_dataset,
)
from cismvmr.ivw import PcaTransform

from conftest import random_dataset


def test_build_sigma_matches_double_loop(dataset):
    J = dataset.n_variants
    expected = np.empty((J, J))
    for j1 in range(J):
        for j2 in range(J):
            expected[j1, j2] = dataset.se_y[j1] * dataset.se_y[j2] * dataset.rho[j1, j2]
    np.testing.assert_allclose(build_sigma(dataset), expected, rtol=1e-14)


def test_build_psi_matches_double_loop(dataset):
    J = dataset.n_variants
    expected = np.empty((J, J))
    for j1 in range(J):
        for j2 in range(J):
            w1 = np.abs(dataset.beta_x[j1]).sum() / dataset.se_y[j1]
            w2 = np.abs(dataset.beta_x[j2]).sum() / dataset.se_y[j2]
            expected[j1, j2] = w1 * w2 * dataset.rho[j1, j2]
    np.testing.assert_allclose(build_psi(dataset), expected, rtol=1e-14)


def test_mv_ivw_matches_hand_rolled_gls():
    d = random_dataset(J=3, K=2, seed=7)
    sigma = build_sigma(d)
    si = np.linalg.inv(sigma)
    bread = np.linalg.inv(d.beta_x.T @ si @ d.beta_x)
    theta = bread @ d.beta_x.T @ si @ d.beta_y
    est = mv_ivw(d)
    np.testing.assert_allclose(est.theta, theta, rtol=1e-10)
    np.testing.assert_allclose(est.se, np.sqrt(np.diag(bread)), rtol=1e-10)
    np.testing.assert_allclose(est.covariance, (bread + bread.T) / 2, rtol=1e-10)
    assert est.n_instruments_used == 3


def test_mv_ivw_single_exposure_ratio_form():
    # K=1: theta = (bx' S^-1 by) / (bx' S^-1 bx)
    d = random_dataset(J=5, K=1, seed=3)
    si = np.linalg.inv(build_sigma(d))
    bx = d.beta_x[:, 0]
    expected = (bx @ si @ d.beta_y) / (bx @ si @ bx)
    np.testing.assert_allclose(mv_ivw(d).theta[0], expected, rtol=1e-12)


def test_mv_ivw_identity_rho_equals_weighted_ls(dataset):
    # with rho = I, GLS reduces to WLS with weights 1/se_y^2
    d = SummaryDataset(dataset.variant_ids, dataset.exposure_ids, dataset.beta_x,
                       dataset.se_x, dataset.beta_y, dataset.se_y,
                       np.eye(dataset.n_variants))
    w = 1.0 / d.se_y ** 2
    xtwx = d.beta_x.T @ (d.beta_x * w[:, None])
    theta = np.linalg.solve(xtwx, d.beta_x.T @ (d.beta_y * w))
    np.testing.assert_allclose(mv_ivw(d).theta, theta, atol=1e-10)


def test_mv_ivw_scale_equivariance(dataset):
    # rescaling one exposure's associations by c rescales its estimate by 1/c
    c = 3.0
    beta_x = dataset.beta_x.copy()
    beta_x[:, 1] *= c
    d2 = SummaryDataset(dataset.variant_ids, dataset.exposure_ids, beta_x,
                        dataset.se_x, dataset.beta_y, dataset.se_y, dataset.rho)
    a = mv_ivw(dataset)
    b = mv_ivw(d2)
    np.testing.assert_allclose(b.theta[1], a.theta[1] / c, rtol=1e-10)
    np.testing.assert_allclose(b.theta[0], a.theta[0], rtol=1e-10)
    np.testing.assert_allclose(b.se[1], a.se[1] / c, rtol=1e-10)


def test_mv_ivw_variant_permutation_invariance(dataset):
    perm = [4, 1, 7, 2, 0, 6, 3, 5]
    a = mv_ivw(dataset)
    b = mv_ivw(dataset.subset(perm))
    np.testing.assert_allclose(b.theta, a.theta, rtol=1e-9)
    np.testing.assert_allclose(b.se, a.se, rtol=1e-9)


def test_mv_ivw_noiseless_recovery():
    # beta_y constructed exactly as beta_x @ theta -> exact recovery
    d0 = random_dataset(J=10, K=3, seed=11)
    theta = np.array([0.4, 0.0, -0.6])
    d = SummaryDataset(d0.variant_ids, d0.exposure_ids, d0.beta_x, d0.se_x,
                       d0.beta_x @ theta, d0.se_y, d0.rho)
    np.testing.assert_allclose(mv_ivw(d).theta, theta, atol=1e-10)


def test_mv_ivw_underidentified_raises():
    d = random_dataset(J=2, K=3, seed=1)
    with pytest.raises(RankDeficientDesign):
        mv_ivw(d)


def test_pca_decompose_diagonal_case():
    psi = np.diag([4.0, 1.0, 9.0])
    t = pca_decompose(psi)
    np.testing.assert_allclose(t.eigenvalues, [9.0, 4.0, 1.0], atol=1e-12)
    # eigenvectors are coordinate axes, signed positive
    np.testing.assert_allclose(np.abs(t.loadings), np.eye(3)[:, [2, 0, 1]], atol=1e-12)
    assert np.all(t.loadings.max(axis=0) > 0)


def test_pca_decompose_rank_one():
    v = np.array([1.0, -2.0, 3.0])
    psi = np.outer(v, v)
    t = pca_decompose(psi)
    np.testing.assert_allclose(t.eigenvalues[0], v @ v, rtol=1e-12)
    np.testing.assert_allclose(t.eigenvalues[1:], 0.0, atol=1e-10)
    # leading eigenvector is +-v normalized with largest entry positive
    lead = t.loadings[:, 0]
    np.testing.assert_allclose(np.abs(lead), np.abs(v) / np.linalg.norm(v), atol=1e-12)
    assert lead[np.argmax(np.abs(lead))] > 0


def test_pca_decompose_reconstruction(dataset):
    psi = build_psi(dataset)
    t = pca_decompose(psi)
    rebuilt = (t.loadings * t.eigenvalues) @ t.loadings.T
    np.testing.assert_allclose(rebuilt, psi, atol=1e-10 * np.abs(psi).max())
    assert np.all(np.diff(t.eigenvalues) <= 1e-12)


def test_pca_decompose_rejects_asymmetric():
    with pytest.raises(ValueError):
        pca_decompose(np.array([[1.0, 0.5], [0.1, 1.0]]))


def test_component_variances_matches_cov_spectrum(dataset):
    psi = build_psi(dataset)
    ev = component_variances(psi)
    expected = np.linalg.eigvalsh(np.cov(psi, rowvar=False))[::-1]
    np.testing.assert_allclose(ev, np.maximum(expected, 0.0), atol=1e-10)


def test_select_num_components_trivial_cases():
    assert select_num_components([10.0, 0.0, 0.0], 0.99) == 1
    assert select_num_components([5.0, 4.0, 1.0], 0.89) == 2
    assert select_num_components([5.0, 4.0, 1.0], 0.90) == 3  # strict: 0.9 not > 0.9
    assert select_num_components([1.0, 1.0, 1.0, 1.0], 0.5) == 3
    with pytest.raises(ValueError):
        select_num_components([1.0], 1.0)
    with pytest.raises(ValueError):
        select_num_components([0.0, 0.0], 0.99)


def test_transform_dataset_matches_direct_projection(dataset):
    psi = build_psi(dataset)
    t = pca_decompose(psi)
    k = 4
    tk = PcaTransform(t.loadings, t.eigenvalues, k)
    bx, by, st = transform_dataset(dataset, tk)
    wk = t.loadings[:, :k]
    np.testing.assert_allclose(bx, wk.T @ dataset.beta_x, rtol=1e-12)
    np.testing.assert_allclose(by, wk.T @ dataset.beta_y, rtol=1e-12)
    np.testing.assert_allclose(st, wk.T @ build_sigma(dataset) @ wk, atol=1e-14)


def test_full_rank_pca_equals_plain_ivw(dataset):
    # retaining all J components is an orthogonal change of basis: identical fit
    a = mv_ivw(dataset)
    b = mv_ivw_pca(dataset, n_components=dataset.n_variants)
    np.testing.assert_allclose(b.theta, a.theta, atol=1e-8)
    np.testing.assert_allclose(b.se, a.se, atol=1e-8)


def test_pca_handles_duplicate_variants():
    # two perfectly correlated variants make Sigma singular for plain MV-IVW;
    # PCA with k < J remains well-posed
    d0 = random_dataset(J=6, K=2, seed=5)
    rho = d0.rho.copy()
    rho[0, :] = rho[1, :]
    rho[:, 0] = rho[:, 1]
    rho[0, 0] = 1.0
    rho[0, 1] = rho[1, 0] = 1.0
    # repair to exact duplicate-row correlation structure
    beta_x = d0.beta_x.copy()
    beta_x[0] = beta_x[1]
    beta_y = d0.beta_y.copy()
    beta_y[0] = beta_y[1]
    se_y = d0.se_y.copy()
    se_y[0] = se_y[1]
    d = SummaryDataset(d0.variant_ids, d0.exposure_ids, beta_x, d0.se_x,
                       beta_y, se_y, (rho + rho.T) / 2)
    est = mv_ivw_pca(d, n_components=5)
    assert np.all(np.isfinite(est.theta))
    assert np.all(np.isfinite(est.se))
    assert est.n_instruments_used == 5


def test_pca_too_few_components_raises():
    d = random_dataset(J=8, K=3, seed=9)
    with pytest.raises(TooFewComponents):
        mv_ivw_pca(d, n_components=2)
    with pytest.raises(ValueError):
        mv_ivw_pca(d, n_components=9)


def test_pca_precomputed_transform_reused(dataset):
    psi = build_psi(dataset)
    t = pca_decompose(psi)
    a = mv_ivw_pca(dataset)
    b = mv_ivw_pca(dataset, transform=t)
    np.testing.assert_array_equal(a.theta, b.theta)


def test_estimate_reports_condition_number(dataset):
    est = mv_ivw(dataset)
    sigma = build_sigma(dataset)
    ev = np.linalg.eigvalsh(sigma)
    np.testing.assert_allclose(est.condition_number, ev[-1] / ev[0], rtol=1e-8)
