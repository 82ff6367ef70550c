"""MV-LIML and MV-LIML-PCA: minimize the quadratic form
Q(theta) = g(theta)' Omega(theta)^-1 g(theta) over direct effects theta."""

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import ExposureCorrelation
from .exceptions import RankDeficientDesign, SingularWeightMatrix, TooFewComponents
from .ivw import (DEFAULT_VARIANCE_FRACTION, Estimate, PcaTransform, build_psi,
                  build_sigma, component_variances, mv_ivw, pca_decompose,
                  select_num_components)
from .linalg import condition_number, sym_inverse, sym_solve

GRADIENT_MODES = ("paper_partial", "finite_difference")


@dataclass(frozen=True)
class LimlConfig:
    phi: ExposureCorrelation | None = None  # None -> identity
    start: np.ndarray | None = None         # None -> zeros
    gradient_mode: str = "paper_partial"
    max_iterations: int = 500
    objective_tolerance: float = 1e-10
    parameter_tolerance: float = 1e-8
    variance_fraction: float = DEFAULT_VARIANCE_FRACTION
    n_components_override: int | None = None
    multi_start: bool = False  # additionally try +-(MV-IVW estimate) as starts

    def __post_init__(self):
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"gradient_mode must be one of {GRADIENT_MODES}")
        if self.objective_tolerance <= 0 or self.parameter_tolerance <= 0:
            raise ValueError("tolerances must be positive")

    def resolved_phi(self, K):
        phi = self.phi if self.phi is not None else ExposureCorrelation.identity(K)
        if phi.phi.shape[0] != K:
            raise ValueError(f"phi is {phi.phi.shape[0]} x {phi.phi.shape[0]}, expected {K}")
        return phi

    def resolved_start(self, K):
        if self.start is None:
            return np.zeros(K)
        start = np.asarray(self.start, dtype=np.float64)
        if start.shape != (K,):
            raise ValueError(f"start has shape {start.shape}, expected ({K},)")
        return start


@dataclass(frozen=True)
class LimlFit:
    estimate: Estimate
    objective_at_optimum: float
    converged: bool
    iterations: int


def residual(d, theta):
    """Estimating-equation residuals g(theta) = beta_y - beta_x theta."""
    theta = np.asarray(theta, dtype=np.float64)
    return d.beta_y - d.beta_x @ theta


def build_omega(d, phi, theta):
    """Theta-dependent GMM weighting matrix combining outcome and exposure
    sampling variability (J x J)."""
    theta = np.asarray(theta, dtype=np.float64)
    coef = phi.phi * np.outer(theta, theta)
    return build_sigma(d) + kernels.omega_exposure_term(np.sqrt(d.se_x), d.rho, coef)


class _Objective:
    """Q(theta) and its gradient for one dataset, optionally PCA-projected."""

    def __init__(self, d, phi, wk=None):
        self.d = d
        self.phi = phi
        self.wk = wk  # J x k projection, or None for the untransformed problem
        self.beta_x = d.beta_x if wk is None else wk.T @ d.beta_x
        self.beta_y = d.beta_y if wk is None else wk.T @ d.beta_y

    def omega(self, theta):
        om = build_omega(self.d, self.phi, theta)
        if self.wk is not None:
            om = self.wk.T @ om @ self.wk
            om = (om + om.T) / 2.0
        return om

    def g(self, theta):
        return self.beta_y - self.beta_x @ np.asarray(theta, dtype=np.float64)

    def value(self, theta):
        g = self.g(theta)
        return float(g @ sym_solve(self.omega(theta), g))

    def gradient_partial(self, theta):
        # the reference gradient: 2 G' Omega(theta)^-1 g(theta) with G = -beta_x,
        # holding the theta-dependence of Omega fixed
        g = self.g(theta)
        return -2.0 * self.beta_x.T @ sym_solve(self.omega(theta), g)

    def gradient_fd(self, theta, scale=1e-6):
        theta = np.asarray(theta, dtype=np.float64)
        grad = np.empty_like(theta)
        for k in range(theta.shape[0]):
            h = scale * (1.0 + abs(theta[k]))
            up = theta.copy(); up[k] += h
            dn = theta.copy(); dn[k] -= h
            grad[k] = (self.value(up) - self.value(dn)) / (2.0 * h)
        return grad

    def gradient(self, theta, mode):
        if mode == "finite_difference":
            return self.gradient_fd(theta)
        return self.gradient_partial(theta)


def liml_objective(d, phi, theta):
    return _Objective(d, phi).value(theta)


def liml_gradient(d, phi, theta, mode="paper_partial"):
    if mode not in GRADIENT_MODES:
        raise ValueError(f"mode must be one of {GRADIENT_MODES}")
    return _Objective(d, phi).gradient(theta, mode)


def _minimize(obj, start, cfg):
    """BFGS with backtracking line search, robust to the partial gradient not
    being the exact gradient of Q: steps are only accepted on Q decrease.

    Returns (theta, Q(theta), converged, iterations).
    """
    theta = np.asarray(start, dtype=np.float64).copy()
    K = theta.shape[0]
    f = obj.value(theta)  # SingularWeightMatrix at the start propagates
    grad = obj.gradient(theta, cfg.gradient_mode)
    hinv = np.eye(K)
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        if not np.all(np.isfinite(grad)):
            break
        direction = -hinv @ grad
        if grad @ direction >= 0:  # quasi-Newton direction unusable; reset
            hinv = np.eye(K)
            direction = -grad
        # cap the trial step: Q(theta) has a spurious plateau at large |theta|
        # (Omega grows like theta^2), so an unbounded first step can tunnel
        # out of the basin around the minimizer
        dir_norm = np.max(np.abs(direction))
        cap = 0.5 * (1.0 + np.max(np.abs(theta)))
        step = min(1.0, cap / dir_norm) if dir_norm > 0 else 1.0
        for _ in range(40):
            cand = theta + step * direction
            try:
                f_cand = obj.value(cand)
            except SingularWeightMatrix:
                f_cand = np.inf
            if np.isfinite(f_cand) and f_cand <= f + 1e-12:
                break
            step *= 0.5
        else:
            # no decrease possible along any usable direction at line-search
            # resolution: the iterate is stationary for this gradient mode
            converged = True
            break
        if not np.isfinite(f_cand) or f_cand > f:
            converged = True
            break
        delta = cand - theta
        df = f - f_cand
        grad_new = obj.gradient(cand, cfg.gradient_mode)
        ygrad = grad_new - grad
        sy = delta @ ygrad
        if sy > 1e-12 * np.linalg.norm(delta) * np.linalg.norm(ygrad):
            rho_bfgs = 1.0 / sy
            eye = np.eye(K)
            left = eye - rho_bfgs * np.outer(delta, ygrad)
            hinv = left @ hinv @ left.T + rho_bfgs * np.outer(delta, delta)
        theta, f, grad = cand, f_cand, grad_new
        if np.max(np.abs(delta)) < cfg.parameter_tolerance or df < cfg.objective_tolerance:
            converged = True
            break
    return theta, f, converged, it


def _fit(obj, d_for_dims, cfg, method_tag, n_instruments, weight_label):
    K = obj.beta_x.shape[1]
    starts = [cfg.resolved_start(K)]
    if cfg.multi_start:
        try:
            anchor = mv_ivw(d_for_dims).theta
            starts += [anchor, -anchor]
        except (RankDeficientDesign, SingularWeightMatrix):
            pass
    best = None
    for start in starts:
        theta, f, conv, it = _minimize(obj, start, cfg)
        if best is None or f < best[1]:
            best = (theta, f, conv, it)
    theta, f, conv, it = best
    if not conv:
        warnings.warn(f"{method_tag} did not converge in {it} iterations; returning best iterate")

    omega_hat = obj.omega(theta)
    wx = sym_solve(omega_hat, obj.beta_x, label=weight_label)
    design = obj.beta_x.T @ wx
    covariance = sym_inverse((design + design.T) / 2.0, error=RankDeficientDesign)
    est = Estimate(
        theta=theta,
        se=np.sqrt(np.maximum(np.diag(covariance), 0.0)),
        covariance=covariance,
        n_instruments_used=n_instruments,
        condition_number=condition_number(omega_hat),
        method_tag=method_tag,
    )
    return LimlFit(estimate=est, objective_at_optimum=f, converged=conv, iterations=it)


def mv_liml(d, cfg=None):
    """Minimize Q(theta) over the untransformed instruments."""
    cfg = cfg or LimlConfig()
    if d.n_variants < d.n_exposures:
        raise RankDeficientDesign(
            f"MV-LIML requires at least as many variants as exposures "
            f"(J={d.n_variants}, K={d.n_exposures})"
        )
    phi = cfg.resolved_phi(d.n_exposures)
    obj = _Objective(d, phi)
    return _fit(obj, d, cfg, "mv-liml", d.n_variants, "Omega")


def mv_liml_pca(d, cfg=None, transform=None):
    """Minimize the PCA-projected objective Q~(theta) over the top-k components
    of Psi."""
    cfg = cfg or LimlConfig()
    phi = cfg.resolved_phi(d.n_exposures)
    psi = build_psi(d)
    if transform is None:
        transform = pca_decompose(psi)
    if cfg.n_components_override is not None:
        k = cfg.n_components_override
    else:
        k = select_num_components(component_variances(psi), cfg.variance_fraction)
    if not 1 <= k <= d.n_variants:
        raise ValueError(f"n_components {k} out of range 1..{d.n_variants}")
    if k < d.n_exposures:
        raise TooFewComponents(
            f"retained components k={k} below number of exposures K={d.n_exposures}"
        )
    wk = PcaTransform(transform.loadings, transform.eigenvalues, k).retained
    obj = _Objective(d, phi, wk=wk)
    return _fit(obj, d, cfg, "mv-liml-pca", k, "transformed Omega")
