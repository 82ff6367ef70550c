"""Greedy p-value-ranked LD pruning and instrument-strength diagnostics."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import min_pvalues
from .linalg import condition_number

__all__ = ["PruneResult", "prune", "subset", "condition_number", "instrument_strength"]


@dataclass(frozen=True)
class PruneResult:
    kept: tuple            # variant indices in selection order
    dropped: tuple         # (index, cause-index) pairs
    threshold: float


def prune(d, threshold):
    """Iteratively keep the remaining variant with the lowest min-exposure
    p-value and drop all remaining variants with |rho| >= threshold to it.

    Ties on p-value break to the lower variant index. Deterministic.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    pvals = min_pvalues(d)
    kept, cause = kernels.greedy_prune(pvals, np.abs(d.rho), threshold)
    dropped = tuple((int(j), int(cause[j])) for j in range(d.n_variants) if cause[j] >= 0)
    return PruneResult(kept=tuple(int(j) for j in kept), dropped=dropped,
                       threshold=float(threshold))


def subset(d, kept):
    """Restrict a dataset to the given variant indices (delegates to the
    dataset's own consistent row/column subsetting)."""
    return d.subset(kept)


def instrument_strength(genotypes, exposures, causal_indices):
    """Per-exposure R^2 and univariable F from individual-level data.

    ``causal_indices[k]`` lists the variants that truly influence exposure k;
    R^2 comes from the multiple regression of that exposure on its causal
    variants (with intercept), F = (R^2/df1) / ((1 - R^2)/df2) with
    df1 = #causal variants and df2 = n - df1 - 1.
    """
    genotypes = np.asarray(genotypes, dtype=np.float64)
    exposures = np.asarray(exposures, dtype=np.float64)
    n = genotypes.shape[0]
    out = []
    for k, idx in enumerate(causal_indices):
        idx = np.asarray(idx, dtype=np.intp)
        X = np.column_stack([np.ones(n), genotypes[:, idx]])
        y = exposures[:, k]
        coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
        fitted = X @ coef
        ss_res = float(np.sum((y - fitted) ** 2))
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
        df1 = idx.shape[0]
        df2 = n - df1 - 1
        f = (r2 / df1) / ((1.0 - r2) / df2) if r2 < 1.0 else float("inf")
        out.append((r2, f))
    return out
