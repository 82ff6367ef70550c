"""LD pruning and diagnostics tests."""

import numpy as np
import pytest

from cismvmr import condition_number, instrument_strength, min_pvalues, prune, subset

from conftest import random_dataset


def greedy_reference(pvals, abs_rho, threshold):
    """Straightforward replay of the greedy rule with python sets."""
    free = set(range(len(pvals)))
    kept = []
    dropped = {}
    while free:
        best = min(free, key=lambda j: (pvals[j], j))
        kept.append(best)
        free.remove(best)
        for j in sorted(free):
            if abs_rho[best, j] >= threshold:
                free.remove(j)
                dropped[j] = best
    return kept, dropped


def test_prune_matches_reference_replay():
    for seed in range(6):
        d = random_dataset(J=12, K=2, seed=seed)
        for thr in (0.3, 0.5, 0.8):
            result = prune(d, thr)
            kept_ref, dropped_ref = greedy_reference(min_pvalues(d), np.abs(d.rho), thr)
            assert list(result.kept) == kept_ref
            assert dict(result.dropped) == dropped_ref


def test_prune_postconditions(dataset):
    thr = 0.4
    result = prune(dataset, thr)
    kept = result.kept
    # every kept pair is below threshold
    for a in kept:
        for b in kept:
            if a != b:
                assert abs(dataset.rho[a, b]) < thr
    # every variant is either kept or dropped by a kept variant at >= threshold
    dropped = dict(result.dropped)
    assert not set(kept) & set(dropped)
    assert set(kept) | set(dropped) == set(range(dataset.n_variants))
    for j, cause in dropped.items():
        assert cause in kept
        assert abs(dataset.rho[j, cause]) >= thr


def test_prune_deterministic(dataset):
    a = prune(dataset, 0.5)
    b = prune(dataset, 0.5)
    assert a == b


def test_prune_threshold_monotonicity(dataset):
    # a stricter threshold (lower) keeps no more variants
    sizes = [len(prune(dataset, t).kept) for t in (0.2, 0.4, 0.6, 0.8, 1.0)]
    assert sizes == sorted(sizes)


def test_prune_threshold_one_keeps_everything(dataset):
    # |rho| >= 1 only holds for exact duplicates; here none exist
    result = prune(dataset, 1.0)
    assert len(result.kept) == dataset.n_variants
    assert result.dropped == ()


def test_prune_tie_breaks_to_lower_index():
    d0 = random_dataset(J=4, K=1, seed=0)
    from cismvmr import SummaryDataset
    beta_x = np.full((4, 1), 0.1)
    se_x = np.full((4, 1), 0.02)  # identical p-values everywhere
    rho = np.eye(4)
    rho[2, 3] = rho[3, 2] = 0.9
    d = SummaryDataset(d0.variant_ids, d0.exposure_ids, beta_x, se_x,
                       d0.beta_y, d0.se_y, rho)
    result = prune(d, 0.5)
    assert list(result.kept) == [0, 1, 2]
    assert dict(result.dropped) == {3: 2}


def test_prune_rejects_bad_threshold(dataset):
    with pytest.raises(ValueError):
        prune(dataset, 0.0)
    with pytest.raises(ValueError):
        prune(dataset, 1.5)


def test_subset_helper(dataset):
    result = prune(dataset, 0.5)
    a = subset(dataset, result.kept)
    b = dataset.subset(result.kept)
    np.testing.assert_array_equal(a.beta_x, b.beta_x)


def power_iteration_extremes(m, iters=5000):
    """Largest eigenvalue by power iteration; smallest via shifted iteration."""
    rng = np.random.default_rng(0)
    v = rng.normal(size=m.shape[0])
    for _ in range(iters):
        v = m @ v
        v /= np.linalg.norm(v)
    lam_max = float(v @ m @ v)
    shifted = lam_max * np.eye(m.shape[0]) - m
    v = rng.normal(size=m.shape[0])
    for _ in range(iters):
        v = shifted @ v
        v /= np.linalg.norm(v)
    lam_min = lam_max - float(v @ shifted @ v)
    return lam_max, lam_min


def test_condition_number_against_power_iteration(dataset):
    sigma = np.outer(dataset.se_y, dataset.se_y) * dataset.rho
    lam_max, lam_min = power_iteration_extremes(sigma)
    assert condition_number(sigma) == pytest.approx(lam_max / lam_min, rel=1e-6)


def test_condition_number_scale_invariant(dataset):
    sigma = np.outer(dataset.se_y, dataset.se_y) * dataset.rho
    assert condition_number(3.7 * sigma) == pytest.approx(condition_number(sigma), rel=1e-10)


def test_condition_number_identity_and_singular():
    assert condition_number(np.eye(4)) == pytest.approx(1.0)
    singular = np.ones((3, 3))
    assert condition_number(singular) == np.inf


def test_instrument_strength_closed_form():
    # single causal variant: R^2 = cor(g, x)^2 and F = R^2 (n-2) / (1 - R^2)
    rng = np.random.default_rng(8)
    n = 4000
    g = rng.standard_normal((n, 1))
    x = 0.2 * g[:, 0] + rng.standard_normal(n)
    out = instrument_strength(g, x[:, None], [(0,)])
    r2, f = out[0]
    r = np.corrcoef(g[:, 0], x)[0, 1]
    assert r2 == pytest.approx(r ** 2, rel=1e-10)
    assert f == pytest.approx(r2 / ((1 - r2) / (n - 2)), rel=1e-10)


def test_instrument_strength_perfect_fit_and_null():
    rng = np.random.default_rng(9)
    n = 500
    g = rng.standard_normal((n, 2))
    exact = g[:, 0] * 2.0
    out = instrument_strength(g, exact[:, None], [(0,)])
    assert out[0][0] == pytest.approx(1.0, abs=1e-12)
    noise = rng.standard_normal(n)
    out = instrument_strength(g, noise[:, None], [(0, 1)])
    assert out[0][0] < 0.05
