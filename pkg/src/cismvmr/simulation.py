"""Monte Carlo engine: data-generating process, summary-statistic extraction,
and replication-level evaluation of the estimators."""

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from . import kernels
from .data import SummaryDataset
from .exceptions import CisMvmrError
from .ivw import mv_ivw, mv_ivw_pca
from .liml import LimlConfig, mv_liml, mv_liml_pca
from .pruning import prune

Z_95 = 1.96  # normal critical value used for the 95% confidence intervals


# ---------------------------------------------------------------------------
# Random correlation matrices
# ---------------------------------------------------------------------------

def gen_correlation_uniform(J, lo=-0.3, hi=1.0, rng=None, max_retries=10):
    """Sample correlation matrix of the columns of A A' for A with i.i.d.
    Uniform(lo, hi) entries (rows of A A' act as observations)."""
    if lo >= hi:
        raise ValueError("lo must be < hi")
    rng = np.random.default_rng(rng)
    if J == 1:
        return np.ones((1, 1))
    for _ in range(max_retries):
        A = rng.uniform(lo, hi, size=(J, J))
        gram = A @ A.T
        if np.all(gram.std(axis=0) > 0):
            B = np.corrcoef(gram, rowvar=False)
            B = (B + B.T) / 2.0
            np.fill_diagonal(B, 1.0)
            return B
    raise RuntimeError("failed to draw a non-degenerate uniform Gram matrix")


def correlation_from_partials(P):
    """Compose a correlation matrix from a c-vine array of partial correlations.

    P[k, i] (k < i) is the partial correlation of variables k and i given
    variables 0..k-1; layer 0 entries are plain correlations.
    """
    P = np.asarray(P, dtype=np.float64)
    d = P.shape[0]
    R = np.eye(d)
    for k in range(d - 1):
        for i in range(k + 1, d):
            p = P[k, i]
            for l in range(k - 1, -1, -1):
                p = p * math.sqrt((1.0 - P[l, i] ** 2) * (1.0 - P[l, k] ** 2)) \
                    + P[l, i] * P[l, k]
            R[k, i] = R[i, k] = p
    return R


def gen_correlation_vine(J, eta=1.0, rng=None, eigenvalue_range=None):
    """Random correlation matrix via the c-vine partial-correlation cascade.

    ``eigenvalue_range`` is accepted for interface parity with the R
    generator's call signature but has no effect: the final normalization to a
    correlation matrix removes any scale information.
    """
    if J < 2:
        return np.ones((max(J, 1), max(J, 1)))
    rng = np.random.default_rng(rng)
    P = np.zeros((J, J))
    for k in range(J - 1):
        b = eta + (J - 2 - k) / 2.0
        P[k, k + 1:] = 2.0 * rng.beta(b, b, size=J - 1 - k) - 1.0
    return correlation_from_partials(P)


def gen_correlation_onion(J, eta=1.0, rng=None, eigenvalue_range=None):
    """Random correlation matrix via the onion (incremental boundary-sampling)
    construction. ``eigenvalue_range`` as in gen_correlation_vine."""
    if J < 2:
        return np.ones((max(J, 1), max(J, 1)))
    rng = np.random.default_rng(rng)
    b = eta + (J - 2) / 2.0
    r = 2.0 * rng.beta(b, b) - 1.0
    R = np.array([[1.0, r], [r, 1.0]])
    for m in range(2, J):
        b -= 0.5
        y = rng.beta(m / 2.0, b)
        u = rng.normal(size=m)
        u /= np.linalg.norm(u)
        w = math.sqrt(y) * u
        q = _stable_cholesky(R) @ w
        R = np.block([[R, q[:, None]], [q[None, :], np.ones((1, 1))]])
    return R


def _stable_cholesky(m, floor=1e-10):
    """Cholesky factor with an eigenvalue floor for numerically semidefinite
    inputs."""
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        evals, evecs = np.linalg.eigh((m + m.T) / 2.0)
        evals = np.maximum(evals, floor)
        repaired = (evecs * evals) @ evecs.T
        return np.linalg.cholesky((repaired + repaired.T) / 2.0)


# ---------------------------------------------------------------------------
# Scenario configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrGenerator:
    kind: str = "uniform"           # uniform | c_vine | onion | external
    lo: float = -0.3
    hi: float = 1.0
    path: str | None = None         # external only
    matrix: np.ndarray | None = None

    def draw(self, J, rng):
        if self.kind == "uniform":
            return gen_correlation_uniform(J, self.lo, self.hi, rng)
        if self.kind == "c_vine":
            return gen_correlation_vine(J, rng=rng)
        if self.kind == "onion":
            return gen_correlation_onion(J, rng=rng)
        if self.kind == "external":
            m = self.matrix
            if m is None:
                m = np.loadtxt(self.path, delimiter=",")
            m = np.asarray(m, dtype=np.float64)
            if m.shape != (J, J):
                raise ValueError(f"external correlation matrix is {m.shape}, expected ({J}, {J})")
            return m
        raise ValueError(f"unknown correlation generator {self.kind!r}")


@dataclass(frozen=True)
class CorrSource:
    kind: str = "exposure_sample"   # exposure_sample | independent_sample
    n: int = 10000                  # independent_sample only


@dataclass(frozen=True)
class ScenarioConfig:
    n_exposure_sample: int = 10000
    n_outcome_sample: int = 10000
    n_variants: int = 100
    n_exposures: int = 3
    causal_per_exposure: int = 5
    alpha_mean: float = 0.08
    alpha_sd: float = 0.01
    theta_true: tuple = (0.4, 0.0, -0.6)
    corr_generator: CorrGenerator = field(default_factory=CorrGenerator)
    corr_source: CorrSource = field(default_factory=CorrSource)
    rounding_decimals: int | None = None
    include_confounders: bool = True
    seed: int = 20260824

    def __post_init__(self):
        if self.causal_per_exposure * self.n_exposures > self.n_variants:
            raise ValueError("causal_per_exposure * n_exposures must be <= n_variants")
        if self.n_exposure_sample < 2 or self.n_outcome_sample < 2:
            raise ValueError("sample sizes must be >= 2")
        if len(self.theta_true) != self.n_exposures:
            raise ValueError("theta_true length must equal n_exposures")


@dataclass(frozen=True)
class SimTruth:
    """Ground truth carried alongside a simulated dataset."""

    causal_indices: tuple      # per exposure: tuple of variant indices
    alpha: np.ndarray
    theta_true: np.ndarray
    population_corr: np.ndarray
    genotypes: np.ndarray | None = None   # stacked exposure+outcome samples
    exposures: np.ndarray | None = None

    @property
    def all_causal(self):
        return tuple(j for idx in self.causal_indices for j in idx)


# ---------------------------------------------------------------------------
# Data generation
# ---------------------------------------------------------------------------

def summarize_associations(genotypes, phenotype):
    """Per-variant slope and standard error from simple linear regression of
    the phenotype on each genotype column (with intercept)."""
    genotypes = np.asarray(genotypes, dtype=np.float64)
    phenotype = np.asarray(phenotype, dtype=np.float64)
    if genotypes.shape[0] < 3:
        raise ValueError("need at least 3 individuals")
    if np.any(genotypes.var(axis=0) == 0):
        raise ValueError("zero-variance genotype column")
    beta, se = kernels.variant_regressions(genotypes, phenotype)
    if np.any(se == 0):
        warnings.warn("zero standard error: phenotype is an exact linear function of a variant")
    return beta, se


def _draw_sample(n, L, alpha_blocks, cfg, rng):
    """One sample: genotypes, exposures, confounders."""
    J, K = cfg.n_variants, cfg.n_exposures
    G = rng.standard_normal((n, J)) @ L.T
    U = rng.standard_normal((n, K))
    eps_x = rng.standard_normal((n, K))
    X = np.empty((n, K))
    for k, (idx, a) in enumerate(alpha_blocks):
        X[:, k] = G[:, idx] @ a + U[:, k] + eps_x[:, k]
    return G, X, U


def simulate_dataset(cfg, seed=None, keep_individual=False):
    """Generate one two-sample summary dataset per the data-generating model.

    Exposure associations come from the first sample, outcome associations
    from a disjoint second sample, and the variant correlation matrix from the
    sample chosen by cfg.corr_source. RNG substreams for the two samples are
    disjoint, so neither perturbs the other.
    """
    entropy = cfg.seed if seed is None else seed
    ss = entropy if isinstance(entropy, np.random.SeedSequence) \
        else np.random.SeedSequence(entropy)
    ss_corr, ss_alpha, ss_exp, ss_out, ss_ref = ss.spawn(5)
    J, K, c = cfg.n_variants, cfg.n_exposures, cfg.causal_per_exposure

    B = cfg.corr_generator.draw(J, np.random.default_rng(ss_corr))
    L = _stable_cholesky(B)
    alpha = np.random.default_rng(ss_alpha).normal(cfg.alpha_mean, cfg.alpha_sd, size=c * K)
    causal = tuple(tuple(range(k * c, (k + 1) * c)) for k in range(K))
    alpha_blocks = [(np.asarray(causal[k], dtype=np.intp), alpha[k * c:(k + 1) * c])
                    for k in range(K)]

    G1, X1, _ = _draw_sample(cfg.n_exposure_sample, L, alpha_blocks, cfg,
                             np.random.default_rng(ss_exp))
    rng_out = np.random.default_rng(ss_out)
    G2, X2, U2 = _draw_sample(cfg.n_outcome_sample, L, alpha_blocks, cfg, rng_out)
    theta = np.asarray(cfg.theta_true, dtype=np.float64)
    Y = X2 @ theta + rng_out.standard_normal(cfg.n_outcome_sample)
    if cfg.include_confounders:
        Y = Y + U2.sum(axis=1)

    beta_x = np.empty((J, K))
    se_x = np.empty((J, K))
    for k in range(K):
        beta_x[:, k], se_x[:, k] = summarize_associations(G1, X1[:, k])
    beta_y, se_y = summarize_associations(G2, Y)

    if cfg.corr_source.kind == "independent_sample":
        G_ref = np.random.default_rng(ss_ref).standard_normal(
            (cfg.corr_source.n, J)) @ L.T
        rho = np.corrcoef(G_ref, rowvar=False)
    elif cfg.corr_source.kind == "exposure_sample":
        rho = np.corrcoef(G1, rowvar=False)
    else:
        raise ValueError(f"unknown corr_source {cfg.corr_source.kind!r}")
    rho = (rho + rho.T) / 2.0
    np.fill_diagonal(rho, 1.0)

    if cfg.rounding_decimals is not None:
        nd = cfg.rounding_decimals
        beta_x = np.round(beta_x, nd)
        se_x = np.round(se_x, nd)
        beta_y = np.round(beta_y, nd)
        se_y = np.round(se_y, nd)

    d = SummaryDataset(
        variant_ids=tuple(f"v{j + 1}" for j in range(J)),
        exposure_ids=tuple(f"x{k + 1}" for k in range(K)),
        beta_x=beta_x, se_x=se_x, beta_y=beta_y, se_y=se_y, rho=rho,
    )
    truth = SimTruth(
        causal_indices=causal,
        alpha=alpha,
        theta_true=theta,
        population_corr=B,
        genotypes=np.vstack([G1, G2]) if keep_individual else None,
        exposures=np.vstack([X1, X2]) if keep_individual else None,
    )
    return d, truth


# ---------------------------------------------------------------------------
# Method specifications and the Monte Carlo loop
# ---------------------------------------------------------------------------

ESTIMATOR_NAMES = ("mv-ivw", "mv-liml", "mv-ivw-pca", "mv-liml-pca")


@dataclass(frozen=True)
class MethodSpec:
    name: str
    pruning: object = None  # None, "oracle", or a float threshold

    def __post_init__(self):
        if self.name not in ESTIMATOR_NAMES:
            raise ValueError(f"unknown estimator {self.name!r}")
        if self.name.endswith("-pca") and self.pruning is not None:
            raise ValueError("PCA methods do not take a pruning threshold")

    @classmethod
    def parse(cls, text):
        """Parse strings like 'mv-ivw@oracle', 'mv-liml@0.6', 'mv-ivw-pca'."""
        if "@" in text:
            name, _, tail = text.partition("@")
            pruning = "oracle" if tail == "oracle" else float(tail)
            return cls(name.strip(), pruning)
        return cls(text.strip())

    @property
    def label(self):
        if self.pruning is None:
            return self.name
        return f"{self.name}@{self.pruning}"

    @property
    def pruning_label(self):
        if self.pruning is None:
            return "-"
        if self.pruning == "oracle":
            return "oracle"
        return f"{self.pruning:g}"


DEFAULT_METHODS = tuple(
    MethodSpec.parse(s) for s in (
        "mv-ivw@oracle", "mv-ivw@0.4", "mv-ivw@0.6", "mv-ivw@0.8",
        "mv-liml@oracle", "mv-liml@0.4", "mv-liml@0.6", "mv-liml@0.8",
        "mv-ivw-pca", "mv-liml-pca",
    )
)


def _apply_method(spec, d, truth, estimator_options):
    opts = estimator_options or {}
    if spec.pruning == "oracle":
        d = d.subset(truth.all_causal)
    elif spec.pruning is not None:
        d = d.subset(prune(d, spec.pruning).kept)
    if spec.name == "mv-ivw":
        est = mv_ivw(d)
    elif spec.name == "mv-ivw-pca":
        est = mv_ivw_pca(d, variance_fraction=opts.get("variance_fraction", 0.99))
    else:
        cfg = opts.get("liml_config") or LimlConfig(
            variance_fraction=opts.get("variance_fraction", 0.99))
        fit = mv_liml(d, cfg) if spec.name == "mv-liml" else mv_liml_pca(d, cfg)
        est = fit.estimate
    return est.theta, est.se


def _run_replication(cfg, methods, rep_seed, estimator_options):
    d, truth = simulate_dataset(cfg, seed=rep_seed)
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for spec in methods:
            try:
                out[spec.label] = _apply_method(spec, d, truth, estimator_options)
            except (CisMvmrError, np.linalg.LinAlgError, ValueError):
                out[spec.label] = None
    return out


@dataclass(frozen=True)
class MetricsRow:
    parameter: str
    method: str
    pruning: str
    mean: float
    sd: float
    mean_se: float
    power: float          # percent of 95% CIs excluding zero
    n_used: int
    failures: int
    degenerate: bool      # fewer than 2 successful replications


@dataclass(frozen=True)
class MetricsTable:
    rows: tuple
    n_reps: int
    seed: int

    def row(self, method_label, parameter):
        for r in self.rows:
            label = r.method if r.pruning == "-" else f"{r.method}@{r.pruning}"
            if label == method_label and r.parameter == parameter:
                return r
        raise KeyError(f"no row for {method_label} / {parameter}")

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["parameter", "method", "pruning", "mean", "sd",
                        "mean_se", "power", "n_used", "failures", "degenerate"])
            for r in self.rows:
                w.writerow([r.parameter, r.method, r.pruning,
                            repr(r.mean), repr(r.sd), repr(r.mean_se),
                            repr(r.power), r.n_used, r.failures, int(r.degenerate)])


def run_monte_carlo(cfg, n_reps, methods=DEFAULT_METHODS, estimator_options=None,
                    n_jobs=1):
    """Run n_reps independent replications and aggregate per-method metrics.

    Replication seeds are pre-spawned from cfg.seed, so results are identical
    for any worker count and any method ordering. Replications where a method
    raises are counted as failures and excluded from that method's aggregates.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    methods = tuple(MethodSpec.parse(m) if isinstance(m, str) else m for m in methods)
    children = np.random.SeedSequence(cfg.seed).spawn(n_reps)

    if n_jobs == 1:
        results = [_run_replication(cfg, methods, s, estimator_options) for s in children]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_run_replication)(cfg, methods, s, estimator_options)
            for s in children
        )

    K = cfg.n_exposures
    rows = []
    for spec in methods:
        thetas = [r[spec.label] for r in results if r[spec.label] is not None]
        failures = n_reps - len(thetas)
        if thetas:
            th = np.array([t for t, _ in thetas])
            se = np.array([s for _, s in thetas])
            mean = th.mean(axis=0)
            sd = th.std(axis=0, ddof=1) if th.shape[0] > 1 else np.zeros(K)
            mean_se = se.mean(axis=0)
            power = 100.0 * (np.abs(th) > Z_95 * se).mean(axis=0)
            degenerate = th.shape[0] < 2
        else:
            mean = sd = mean_se = power = np.full(K, np.nan)
            degenerate = True
        for k in range(K):
            rows.append(MetricsRow(
                parameter=f"theta_{k + 1}",
                method=spec.name,
                pruning=spec.pruning_label,
                mean=float(mean[k]), sd=float(sd[k]), mean_se=float(mean_se[k]),
                power=float(power[k]), n_used=n_reps - failures,
                failures=failures, degenerate=degenerate,
            ))
    return MetricsTable(rows=tuple(rows), n_reps=n_reps, seed=cfg.seed)


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------

def _parse_corr_generator(text):
    text = text.strip()
    if text in ("c_vine", "c-vine"):
        return CorrGenerator(kind="c_vine")
    if text == "onion":
        return CorrGenerator(kind="onion")
    if text.startswith("external:"):
        return CorrGenerator(kind="external", path=text.split(":", 1)[1].strip())
    if text.startswith("uniform"):
        inside = text[len("uniform"):].strip().strip("()")
        lo, hi = (float(x) for x in inside.split(","))
        return CorrGenerator(kind="uniform", lo=lo, hi=hi)
    raise ValueError(f"unknown corr_generator {text!r}")


def _parse_corr_source(text):
    text = text.strip()
    if text == "exposure_sample":
        return CorrSource(kind="exposure_sample")
    if text.startswith("independent_sample"):
        inside = text[len("independent_sample"):].strip().strip("()")
        return CorrSource(kind="independent_sample", n=int(inside))
    raise ValueError(f"unknown corr_source {text!r}")


_SCENARIO_PARSERS = {
    "n_exposure_sample": int,
    "n_outcome_sample": int,
    "n_variants": int,
    "n_exposures": int,
    "causal_per_exposure": int,
    "alpha_mean": float,
    "alpha_sd": float,
    "theta_true": lambda s: tuple(float(x) for x in s.split(",")),
    "corr_generator": _parse_corr_generator,
    "corr_source": _parse_corr_source,
    "rounding_decimals": lambda s: None if s.lower() == "none" else int(s),
    "include_confounders": lambda s: s.lower() in ("1", "true", "yes"),
    "seed": int,
}


def load_scenario(path):
    """Parse a ``key = value`` scenario file into a ScenarioConfig.

    Lines starting with '#' and blank lines are ignored; unknown keys are an
    error. Every key is optional and defaults to the main-scenario value.
    """
    fields = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _SCENARIO_PARSERS:
                raise ValueError(f"{path}:{lineno}: unknown scenario key {key!r}")
            fields[key] = _SCENARIO_PARSERS[key](value.strip())
    return ScenarioConfig(**fields)


def scenario_variant(cfg, **changes):
    """Convenience wrapper over dataclasses.replace for scenario tweaks."""
    return replace(cfg, **changes)
