"""MV-IVW estimation and its PCA variant over correlated instruments."""

from dataclasses import dataclass

import numpy as np

from .exceptions import RankDeficientDesign, SingularWeightMatrix, TooFewComponents
from .linalg import condition_number, sym_inverse, sym_solve

DEFAULT_VARIANCE_FRACTION = 0.99


@dataclass(frozen=True)
class Estimate:
    """Per-exposure direct-effect estimates with SEs and conditioning info."""

    theta: np.ndarray
    se: np.ndarray
    covariance: np.ndarray
    n_instruments_used: int
    condition_number: float
    method_tag: str


@dataclass(frozen=True)
class PcaTransform:
    """Eigendecomposition of the weighted matrix Psi plus retained count k."""

    loadings: np.ndarray     # J x J, columns ordered by descending eigenvalue
    eigenvalues: np.ndarray  # nonincreasing
    k: int

    @property
    def retained(self):
        return self.loadings[:, : self.k]


def build_sigma(d):
    """Variance-covariance of outcome associations:
    Sigma[j1,j2] = se_y[j1] * se_y[j2] * rho[j1,j2]."""
    return np.outer(d.se_y, d.se_y) * d.rho


def build_psi(d):
    """Association-magnitude and outcome-precision weighted correlation matrix
    whose principal components define the transformed instruments."""
    w = np.abs(d.beta_x).sum(axis=1) / d.se_y
    return np.outer(w, w) * d.rho


def pca_decompose(psi, clamp_tol=1e-8):
    """Symmetric eigendecomposition of psi with deterministic output.

    Eigenvalues are sorted descending; small negative eigenvalues (roundoff on
    a PSD input) are clamped to zero; each eigenvector is signed so its
    largest-magnitude entry is positive. k is initialized to full rank.
    """
    psi = np.asarray(psi, dtype=np.float64)
    if not np.allclose(psi, psi.T, atol=1e-8):
        raise ValueError("psi must be symmetric")
    evals, evecs = np.linalg.eigh((psi + psi.T) / 2.0)
    evals = evals[::-1].copy()
    evecs = evecs[:, ::-1].copy()
    scale = max(abs(evals[0]), 1.0) if evals.size else 1.0
    evals[(evals < 0) & (evals >= -clamp_tol * scale)] = 0.0
    evals[evals < 0] = 0.0  # larger negatives only arise from indefinite input
    for i in range(evecs.shape[1]):
        col = evecs[:, i]
        if col[np.argmax(np.abs(col))] < 0:
            evecs[:, i] = -col
    return PcaTransform(loadings=evecs, eigenvalues=evals, k=evals.shape[0])


def component_variances(psi):
    """Variance explained by each principal component of Psi treated as a data
    matrix (rows as observations, columns centered), which is how the
    retained-component count is defined. These concentrate faster than the
    eigenvalues of Psi itself (they square the spectrum, up to centering)."""
    psi = np.asarray(psi, dtype=np.float64)
    J = psi.shape[0]
    if J < 2:
        return np.ones(max(J, 1))
    centered = psi - psi.mean(axis=0, keepdims=True)
    ev = np.linalg.eigvalsh(centered.T @ centered / (J - 1))[::-1].copy()
    return np.maximum(ev, 0.0)


def select_num_components(eigenvalues, variance_fraction=DEFAULT_VARIANCE_FRACTION):
    """Smallest k whose cumulative eigenvalue share strictly exceeds
    variance_fraction."""
    ev = np.asarray(eigenvalues, dtype=np.float64)
    if not 0 < variance_fraction < 1:
        raise ValueError(f"variance_fraction must be in (0, 1), got {variance_fraction}")
    total = ev.sum()
    if total <= 0:
        raise ValueError("all eigenvalues are zero")
    frac = np.cumsum(ev) / total
    above = np.flatnonzero(frac > variance_fraction)
    if above.size == 0:  # cumulative share never exceeds the target (roundoff)
        return int(ev.shape[0])
    return int(above[0]) + 1


def transform_dataset(d, t):
    """Project associations onto the top-k components:
    returns (W_k^T beta_x, W_k^T beta_y, W_k^T Sigma W_k)."""
    wk = t.retained
    beta_x_t = wk.T @ d.beta_x
    beta_y_t = wk.T @ d.beta_y
    sigma_t = wk.T @ build_sigma(d) @ wk
    return beta_x_t, beta_y_t, (sigma_t + sigma_t.T) / 2.0


def _gls(beta_x, beta_y, weight, method_tag, n_instruments):
    """Generalized least squares with weighting matrix ``weight``; the
    covariance is the fixed-effect (beta_x' W^-1 beta_x)^-1."""
    wx = sym_solve(weight, beta_x)
    wy = sym_solve(weight, beta_y)
    design = beta_x.T @ wx
    design = (design + design.T) / 2.0
    covariance = sym_inverse(design, error=RankDeficientDesign)
    theta = covariance @ (beta_x.T @ wy)
    return Estimate(
        theta=theta,
        se=np.sqrt(np.maximum(np.diag(covariance), 0.0)),
        covariance=covariance,
        n_instruments_used=n_instruments,
        condition_number=condition_number(weight),
        method_tag=method_tag,
    )


def mv_ivw(d):
    """Generalized weighted least squares of outcome associations on the
    exposure association matrix, weighting by Sigma."""
    if d.n_variants < d.n_exposures:
        raise RankDeficientDesign(
            f"MV-IVW requires at least as many variants as exposures "
            f"(J={d.n_variants}, K={d.n_exposures})"
        )
    return _gls(d.beta_x, d.beta_y, build_sigma(d), "mv-ivw", d.n_variants)


def mv_ivw_pca(d, variance_fraction=DEFAULT_VARIANCE_FRACTION, n_components=None,
               transform=None):
    """MV-IVW on PCA-transformed instruments.

    Components are taken from the eigendecomposition of Psi, retaining enough
    to explain ``variance_fraction`` of its variance (or exactly
    ``n_components`` when given). A precomputed ``transform`` may be supplied
    to hold the projection fixed across calls.
    """
    psi = build_psi(d)
    if transform is None:
        transform = pca_decompose(psi)
    if n_components is not None:
        k = n_components
    else:
        k = select_num_components(component_variances(psi), variance_fraction)
    if not 1 <= k <= d.n_variants:
        raise ValueError(f"n_components {k} out of range 1..{d.n_variants}")
    if k < d.n_exposures:
        raise TooFewComponents(
            f"retained components k={k} below number of exposures K={d.n_exposures}"
        )
    t = PcaTransform(transform.loadings, transform.eigenvalues, k)
    beta_x_t, beta_y_t, sigma_t = transform_dataset(d, t)
    est = _gls(beta_x_t, beta_y_t, sigma_t, "mv-ivw-pca", k)
    return est
