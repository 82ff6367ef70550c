"""Shared linear-algebra helpers: factorized solves and conditioning."""

import warnings

import numpy as np
from scipy import linalg as sla

from .exceptions import RankDeficientDesign, SingularWeightMatrix


def sym_solve(a, b, error=SingularWeightMatrix, label="weighting matrix"):
    """Solve a @ x = b for symmetric a via Cholesky, falling back to a
    symmetric-indefinite (Bunch-Kaufman) factorization. Never forms a^-1."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        raise error(f"{label} is empty")
    if not np.all(np.isfinite(a)):
        raise error(f"{label} has non-finite entries")
    try:
        c, low = sla.cho_factor(a, lower=True, check_finite=False)
        return sla.cho_solve((c, low), b, check_finite=False)
    except sla.LinAlgError:
        pass
    try:
        # assume_a="sym" routes to LAPACK's Bunch-Kaufman (?sysv) solver; its
        # ill-conditioning warning means the solution digits are untrustworthy,
        # so treat it as a singular matrix rather than returning noise
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            x = sla.solve(a, b, assume_a="sym", check_finite=False)
    except (sla.LinAlgError, sla.LinAlgWarning, ValueError) as exc:
        raise error(f"{label} factorization failed: {exc}") from None
    if not np.all(np.isfinite(x)):
        raise error(f"{label} is numerically singular")
    return x


def sym_inverse(a, error=RankDeficientDesign, label="design matrix"):
    """Inverse of a small symmetric matrix via factorized solve against I."""
    a = np.asarray(a, dtype=np.float64)
    inv = sym_solve(a, np.eye(a.shape[0]), error=error, label=label)
    return (inv + inv.T) / 2.0


def condition_number(m):
    """lambda_max / lambda_min of a symmetric matrix; +inf when the matrix is
    singular or not positive definite."""
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        return 1.0
    if not np.all(np.isfinite(m)):
        return float("inf")
    ev = np.linalg.eigvalsh(m)
    if ev[0] <= 0.0:
        return float("inf")
    return float(ev[-1] / ev[0])
