import numpy as np
import pytest

from cismvmr import SummaryDataset


def random_correlation(J, rng, strength=0.3):
    """Well-conditioned random correlation matrix for test instances."""
    A = rng.normal(size=(J, J + 5))
    cov = A @ A.T + strength * J * np.eye(J)
    d = np.sqrt(np.diag(cov))
    rho = cov / np.outer(d, d)
    rho = (rho + rho.T) / 2.0
    np.fill_diagonal(rho, 1.0)
    return rho


def random_dataset(J=8, K=2, seed=0, zero_se_x=False):
    """Small random dataset with positive SEs and valid rho."""
    rng = np.random.default_rng(seed)
    return SummaryDataset(
        variant_ids=tuple(f"v{j}" for j in range(J)),
        exposure_ids=tuple(f"x{k}" for k in range(K)),
        beta_x=rng.normal(0.1, 0.05, size=(J, K)),
        se_x=np.zeros((J, K)) if zero_se_x else rng.uniform(0.01, 0.03, size=(J, K)),
        beta_y=rng.normal(0.0, 0.05, size=J),
        se_y=rng.uniform(0.01, 0.05, size=J),
        rho=random_correlation(J, rng),
    )


@pytest.fixture
def dataset():
    return random_dataset()


def write_fixture_files(d, tmp_path, labels=True):
    """Write dataset to assoc/corr CSVs, returning the two paths."""
    from cismvmr import write_summary_data

    assoc = tmp_path / "assoc.csv"
    corr = tmp_path / "corr.csv"
    write_summary_data(d, assoc, corr)
    if not labels:
        lines = corr.read_text().splitlines()[1:]
        corr.write_text("\n".join(lines) + "\n")
    return str(assoc), str(corr)
