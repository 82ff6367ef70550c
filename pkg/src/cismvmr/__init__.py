"""Multivariable cis-Mendelian randomization over correlated genetic variants.

Estimators: MV-IVW, MV-IVW-PCA, MV-LIML, MV-LIML-PCA; plus LD pruning,
conditioning diagnostics, and a Monte Carlo simulation engine.
"""

from .data import (ExposureCorrelation, SummaryDataset, ValidationReport,
                   load_association_file, load_correlation_file,
                   load_summary_data, min_pvalues, significance_filter,
                   validate, validated, write_summary_data)
from .exceptions import (CisMvmrError, DataFormatError, DataValidationError,
                         RankDeficientDesign, SingularWeightMatrix,
                         TooFewComponents)
from .ivw import (Estimate, PcaTransform, build_psi, build_sigma,
                  component_variances, mv_ivw, mv_ivw_pca, pca_decompose,
                  select_num_components, transform_dataset)
from .linalg import condition_number
from .liml import (LimlConfig, LimlFit, build_omega, liml_gradient,
                   liml_objective, mv_liml, mv_liml_pca, residual)
from .pruning import PruneResult, instrument_strength, prune, subset
from .simulation import (CorrGenerator, CorrSource, MethodSpec, MetricsTable,
                         ScenarioConfig, SimTruth, DEFAULT_METHODS,
                         gen_correlation_onion, gen_correlation_uniform,
                         gen_correlation_vine, load_scenario, run_monte_carlo,
                         simulate_dataset, summarize_associations)

__version__ = "0.1.0"


def bundled_scenario(name="main"):
    """Path to a scenario file shipped with the package."""
    from importlib.resources import files

    return str(files("cismvmr") / "scenarios" / f"{name}.scenario")
