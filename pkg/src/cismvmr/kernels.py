"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

Set the environment variable ``CISMVMR_DISABLE_NUMBA=1`` before import to force
the numpy path (useful for debugging and for the benchmark in
``benchmarks/bench_kernels.py``). The active backend is reported in
``BACKEND`` ("numba" or "numpy").
"""

import os

import numpy as np

_DISABLE = os.environ.get("CISMVMR_DISABLE_NUMBA", "0") not in ("", "0", "false", "False")

if not _DISABLE:
    try:
        from numba import njit

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a hard dependency
        _DISABLE = True

if _DISABLE:
    BACKEND = "numpy"

    def njit(*args, **kwargs):
        # identity decorator so the jitted definitions below stay importable
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


# ---------------------------------------------------------------------------
# Omega second term: for each variant pair (j1, j2)
#   sum_{k,l} sqrt(sx[j1,k] sx[j2,k]) sqrt(sx[j1,l] sx[j2,l]) rho[j1,j2] c[k,l]
# with c[k,l] = phi[k,l] * theta[k] * theta[l].
# ---------------------------------------------------------------------------

def _omega_exposure_term_numpy(sqrt_se_x, rho, coef):
    J, K = sqrt_se_x.shape
    # P[j, (k,l)] = sqrt_se_x[j,k] * sqrt_se_x[j,l]
    P = (sqrt_se_x[:, :, None] * sqrt_se_x[:, None, :]).reshape(J, K * K)
    return (P * coef.reshape(-1)) @ P.T * rho


@njit(cache=True)
def _omega_exposure_term_numba(sqrt_se_x, rho, coef):  # pragma: no cover - timed vs numpy in tests
    J, K = sqrt_se_x.shape
    out = np.empty((J, J))
    for j1 in range(J):
        for j2 in range(j1 + 1):
            acc = 0.0
            for k in range(K):
                a = sqrt_se_x[j1, k] * sqrt_se_x[j2, k]
                for l in range(K):
                    acc += a * sqrt_se_x[j1, l] * sqrt_se_x[j2, l] * coef[k, l]
            v = acc * rho[j1, j2]
            out[j1, j2] = v
            out[j2, j1] = v
    return out


def omega_exposure_term(sqrt_se_x, rho, coef):
    """Theta-dependent part of the GMM weighting matrix (J x J)."""
    sqrt_se_x = np.ascontiguousarray(sqrt_se_x, dtype=np.float64)
    rho = np.ascontiguousarray(rho, dtype=np.float64)
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    if BACKEND == "numba":
        return _omega_exposure_term_numba(sqrt_se_x, rho, coef)
    return _omega_exposure_term_numpy(sqrt_se_x, rho, coef)


# ---------------------------------------------------------------------------
# Greedy p-value-ranked pruning.
# ---------------------------------------------------------------------------

def _greedy_prune_numpy(pvals, abs_rho, threshold):
    J = pvals.shape[0]
    state = np.zeros(J, dtype=np.int64)  # 0 free, 1 kept, 2 dropped
    cause = np.full(J, -1, dtype=np.int64)
    kept_order = []
    while True:
        free = np.flatnonzero(state == 0)
        if free.size == 0:
            break
        best = free[np.argmin(pvals[free])]  # argmin takes the first -> lowest index on ties
        state[best] = 1
        kept_order.append(best)
        hit = free[(abs_rho[best, free] >= threshold) & (free != best)]
        state[hit] = 2
        cause[hit] = best
    return np.array(kept_order, dtype=np.int64), cause


@njit(cache=True)
def _greedy_prune_numba(pvals, abs_rho, threshold):  # pragma: no cover
    J = pvals.shape[0]
    state = np.zeros(J, dtype=np.int64)
    cause = np.full(J, -1, dtype=np.int64)
    kept_order = np.empty(J, dtype=np.int64)
    n_kept = 0
    while True:
        best = -1
        best_p = np.inf
        for j in range(J):
            if state[j] == 0 and pvals[j] < best_p:
                best = j
                best_p = pvals[j]
        if best < 0:
            break
        state[best] = 1
        kept_order[n_kept] = best
        n_kept += 1
        for j in range(J):
            if state[j] == 0 and abs_rho[best, j] >= threshold:
                state[j] = 2
                cause[j] = best
    return kept_order[:n_kept], cause


def greedy_prune(pvals, abs_rho, threshold):
    """Greedy LD pruning: repeatedly keep the lowest-p free variant, drop its
    neighbours with |rho| >= threshold. Returns (kept order, cause index per variant;
    -1 for kept variants)."""
    pvals = np.ascontiguousarray(pvals, dtype=np.float64)
    abs_rho = np.ascontiguousarray(abs_rho, dtype=np.float64)
    if BACKEND == "numba":
        return _greedy_prune_numba(pvals, abs_rho, float(threshold))
    return _greedy_prune_numpy(pvals, abs_rho, float(threshold))


# ---------------------------------------------------------------------------
# Per-variant univariable regression with intercept: slope and its SE.
# ---------------------------------------------------------------------------

def _variant_regressions_numpy(G, y):
    n = G.shape[0]
    gbar = G.mean(axis=0)
    ybar = y.mean()
    gc = G - gbar
    yc = y - ybar
    sxx = np.einsum("ij,ij->j", gc, gc)
    sxy = gc.T @ yc
    beta = sxy / sxx
    syy = yc @ yc
    sse = syy - beta * sxy
    sigma2 = sse / (n - 2)
    se = np.sqrt(np.maximum(sigma2, 0.0) / sxx)
    return beta, se


@njit(cache=True)
def _variant_regressions_numba(G, y):  # pragma: no cover
    n, J = G.shape
    ybar = 0.0
    for i in range(n):
        ybar += y[i]
    ybar /= n
    syy = 0.0
    for i in range(n):
        d = y[i] - ybar
        syy += d * d
    beta = np.empty(J)
    se = np.empty(J)
    for j in range(J):
        gbar = 0.0
        for i in range(n):
            gbar += G[i, j]
        gbar /= n
        sxx = 0.0
        sxy = 0.0
        for i in range(n):
            gd = G[i, j] - gbar
            sxx += gd * gd
            sxy += gd * (y[i] - ybar)
        b = sxy / sxx
        sse = syy - b * sxy
        if sse < 0.0:
            sse = 0.0
        beta[j] = b
        se[j] = np.sqrt(sse / (n - 2) / sxx)
    return beta, se


def variant_regressions(G, y):
    """Slope and SE of the univariable regression of y on each column of G."""
    G = np.ascontiguousarray(G, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if BACKEND == "numba":
        return _variant_regressions_numba(G, y)
    return _variant_regressions_numpy(G, y)
