"""Agreement between the accelerated kernels and their pure-numpy fallbacks."""

import numpy as np

from cismvmr import kernels
from cismvmr.kernels import (
    _greedy_prune_numba,
    _greedy_prune_numpy,
    _omega_exposure_term_numba,
    _omega_exposure_term_numpy,
    _variant_regressions_numba,
    _variant_regressions_numpy,
)

from conftest import random_correlation


def test_backend_is_reported():
    assert kernels.BACKEND in ("numba", "numpy")


def test_omega_exposure_term_backends_agree():
    rng = np.random.default_rng(0)
    for J, K in ((1, 1), (5, 2), (12, 4)):
        sq = np.sqrt(rng.uniform(0.01, 0.05, size=(J, K)))
        rho = random_correlation(J, rng)
        theta = rng.normal(size=K)
        coef = np.eye(K) * 0.5 + 0.5
        coef = coef * np.outer(theta, theta)
        coef = np.ascontiguousarray(coef)
        a = _omega_exposure_term_numpy(sq, rho, coef)
        b = _omega_exposure_term_numba(np.ascontiguousarray(sq),
                                       np.ascontiguousarray(rho), coef)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_greedy_prune_backends_agree():
    rng = np.random.default_rng(1)
    for J in (1, 7, 40):
        pvals = rng.uniform(size=J)
        pvals[rng.integers(0, J)] = pvals.min()  # introduce a tie sometimes
        rho = np.abs(random_correlation(J, rng))
        for thr in (0.2, 0.5, 0.9):
            ka, ca = _greedy_prune_numpy(pvals, rho, thr)
            kb, cb = _greedy_prune_numba(np.ascontiguousarray(pvals),
                                         np.ascontiguousarray(rho), thr)
            np.testing.assert_array_equal(ka, kb)
            np.testing.assert_array_equal(ca, cb)


def test_variant_regressions_backends_agree():
    rng = np.random.default_rng(2)
    G = rng.standard_normal((300, 8))
    y = 0.2 * G[:, 0] + rng.standard_normal(300)
    ba, sa = _variant_regressions_numpy(G, y)
    bb, sb = _variant_regressions_numba(np.ascontiguousarray(G),
                                        np.ascontiguousarray(y))
    np.testing.assert_allclose(ba, bb, rtol=1e-10)
    np.testing.assert_allclose(sa, sb, rtol=1e-10)


def test_dispatch_matches_active_backend():
    rng = np.random.default_rng(3)
    sq = np.sqrt(rng.uniform(0.01, 0.05, size=(6, 2)))
    rho = random_correlation(6, rng)
    coef = np.outer([0.3, -0.2], [0.3, -0.2])
    got = kernels.omega_exposure_term(sq, rho, coef)
    np.testing.assert_allclose(got, _omega_exposure_term_numpy(sq, rho, coef),
                               rtol=1e-12)
