"""Summarized genetic association data: containers, file I/O, validation."""

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .exceptions import DataFormatError, DataValidationError

SYMMETRY_TOL = 1e-10
AUTO_SYMMETRIZE_TOL = 1e-6


@dataclass(frozen=True)
class SummaryDataset:
    """Per-variant associations with K exposures and one outcome, plus the
    J x J variant correlation matrix. Immutable after construction."""

    variant_ids: tuple
    exposure_ids: tuple
    beta_x: np.ndarray  # J x K
    se_x: np.ndarray    # J x K
    beta_y: np.ndarray  # J
    se_y: np.ndarray    # J
    rho: np.ndarray     # J x J

    def __post_init__(self):
        object.__setattr__(self, "variant_ids", tuple(self.variant_ids))
        object.__setattr__(self, "exposure_ids", tuple(self.exposure_ids))
        for name in ("beta_x", "se_x", "beta_y", "se_y", "rho"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_variants(self):
        return len(self.variant_ids)

    @property
    def n_exposures(self):
        return len(self.exposure_ids)

    def subset(self, kept):
        """New dataset restricted to the given variant indices, in the given order."""
        kept = list(kept)
        for i in kept:
            if not 0 <= i < self.n_variants:
                raise IndexError(f"variant index {i} out of range")
        if len(set(kept)) != len(kept):
            raise ValueError("duplicate variant indices in subset")
        idx = np.asarray(kept, dtype=np.intp)
        return SummaryDataset(
            variant_ids=tuple(self.variant_ids[i] for i in kept),
            exposure_ids=self.exposure_ids,
            beta_x=self.beta_x[idx],
            se_x=self.se_x[idx],
            beta_y=self.beta_y[idx],
            se_y=self.se_y[idx],
            rho=self.rho[np.ix_(idx, idx)],
        )


@dataclass(frozen=True)
class ExposureCorrelation:
    """K x K correlation matrix of the exposures (identity when unknown)."""

    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.float64)
        if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
            raise DataFormatError("exposure correlation matrix must be square")
        if not np.allclose(phi, phi.T, atol=SYMMETRY_TOL):
            raise DataFormatError("exposure correlation matrix must be symmetric")
        if not np.allclose(np.diag(phi), 1.0, atol=SYMMETRY_TOL):
            raise DataFormatError("exposure correlation matrix must have unit diagonal")
        if np.any(np.abs(phi) > 1 + SYMMETRY_TOL):
            raise DataFormatError("exposure correlation entries must lie in [-1, 1]")
        if np.linalg.eigvalsh(phi).min() < -1e-10:
            raise DataFormatError("exposure correlation matrix must be positive semi-definite")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def identity(cls, k):
        return cls(np.eye(k))


@dataclass
class ValidationReport:
    """Violations are data: each entry is a human-readable message with indices."""

    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __str__(self):
        if self.ok:
            return "valid"
        return "; ".join(self.violations)


def validate(d, require_identified=False):
    """Check every SummaryDataset invariant; returns a ValidationReport.

    Never raises: invariant violations are reported, not thrown.
    """
    rep = ValidationReport()
    J, K = d.n_variants, d.n_exposures
    if K < 1:
        rep.violations.append("K must be >= 1")
    if d.beta_x.shape != (J, K):
        rep.violations.append(f"beta_x shape {d.beta_x.shape} != ({J}, {K})")
    if d.se_x.shape != (J, K):
        rep.violations.append(f"se_x shape {d.se_x.shape} != ({J}, {K})")
    if d.beta_y.shape != (J,):
        rep.violations.append(f"beta_y shape {d.beta_y.shape} != ({J},)")
    if d.se_y.shape != (J,):
        rep.violations.append(f"se_y shape {d.se_y.shape} != ({J},)")
    if d.rho.shape != (J, J):
        rep.violations.append(f"rho shape {d.rho.shape} != ({J}, {J})")
    if rep.violations:
        return rep

    for name, arr in (("beta_x", d.beta_x), ("beta_y", d.beta_y)):
        bad = np.argwhere(~np.isfinite(arr))
        for idx in bad:
            rep.violations.append(f"{name} non-finite at {tuple(idx)}")
    for name, arr in (("se_x", d.se_x), ("se_y", d.se_y)):
        bad = np.argwhere(~(np.isfinite(arr) & (arr > 0)))
        for idx in bad:
            rep.violations.append(f"{name} not strictly positive and finite at {tuple(idx)}")

    if J > 0:
        asym = np.abs(d.rho - d.rho.T)
        worst = np.unravel_index(np.argmax(asym), asym.shape)
        if asym[worst] > SYMMETRY_TOL:
            rep.violations.append(
                f"rho asymmetric at {worst}: |rho[{worst[0]},{worst[1]}] - "
                f"rho[{worst[1]},{worst[0]}]| = {asym[worst]:.3g}"
            )
        diag_dev = np.abs(np.diag(d.rho) - 1.0)
        for j in np.flatnonzero(diag_dev > SYMMETRY_TOL):
            rep.violations.append(f"rho diagonal != 1 at {j} (deviation {diag_dev[j]:.3g})")
        out = np.argwhere(np.abs(d.rho) > 1 + SYMMETRY_TOL)
        for idx in out:
            rep.violations.append(f"rho entry outside [-1, 1] at {tuple(idx)}")
    if require_identified and J <= K:
        rep.violations.append(f"identification requires J > K (got J={J}, K={K})")
    return rep


def validated(d, require_identified=False):
    """Like validate() but raises DataValidationError on failure; returns d."""
    rep = validate(d, require_identified=require_identified)
    if not rep.ok:
        raise DataValidationError(rep)
    return d


def _maybe_symmetrize(rho):
    """Auto-repair near-symmetric / near-unit-diagonal matrices (stored at low
    precision) up to 1e-6; larger deviations are left for validate() to flag."""
    asym = np.abs(rho - rho.T).max() if rho.size else 0.0
    diag_dev = np.abs(np.diag(rho) - 1.0).max() if rho.size else 0.0
    if asym > SYMMETRY_TOL and asym <= AUTO_SYMMETRIZE_TOL:
        warnings.warn(f"correlation matrix symmetrized (max asymmetry {asym:.3g})")
        rho = (rho + rho.T) / 2.0
    if diag_dev > SYMMETRY_TOL and diag_dev <= AUTO_SYMMETRIZE_TOL:
        warnings.warn(f"correlation matrix diagonal reset to 1 (max deviation {diag_dev:.3g})")
        rho = rho.copy()
        np.fill_diagonal(rho, 1.0)
    return rho


def _sniff_delimiter(first_line):
    return "\t" if first_line.count("\t") >= first_line.count(",") else ","


def _read_table(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    delim = _sniff_delimiter(lines[0])
    return list(csv.reader(io.StringIO("\n".join(lines)), delimiter=delim)), delim


def _parse_float(cell, path, where):
    try:
        return float(cell)
    except ValueError:
        raise DataFormatError(f"{path}: non-numeric cell {cell!r} at {where}") from None


def load_association_file(path):
    """Parse the association table.

    Header: ``variant``, then per exposure e: ``beta_<e>``, ``se_<e>``, then
    ``beta_y``, ``se_y``. Returns (variant_ids, exposure_ids, beta_x, se_x,
    beta_y, se_y).
    """
    rows, _ = _read_table(path)
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "variant":
        raise DataFormatError(f"{path}: first column must be 'variant', got {header[:1]}")
    if len(header) < 5 or header[-2:] != ["beta_y", "se_y"]:
        raise DataFormatError(f"{path}: last two columns must be 'beta_y', 'se_y'")
    mid = header[1:-2]
    if len(mid) % 2 != 0:
        raise DataFormatError(f"{path}: unpaired exposure columns {mid}")
    exposure_ids = []
    for i in range(0, len(mid), 2):
        b, s = mid[i], mid[i + 1]
        if not b.startswith("beta_") or not s.startswith("se_") or b[5:] != s[3:]:
            raise DataFormatError(f"{path}: expected beta_<e>, se_<e> pair, got {b!r}, {s!r}")
        exposure_ids.append(b[5:])
    if not exposure_ids:
        raise DataFormatError(f"{path}: no exposure columns found")

    variant_ids, data = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataFormatError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        variant_ids.append(row[0].strip())
        data.append([_parse_float(c, path, f"row {r}, column {header[i + 1]}")
                     for i, c in enumerate(row[1:])])
    if len(set(variant_ids)) != len(variant_ids):
        dupes = sorted({v for v in variant_ids if variant_ids.count(v) > 1})
        raise DataFormatError(f"{path}: duplicate variant ids {dupes}")

    arr = np.asarray(data, dtype=np.float64).reshape(len(variant_ids), -1)
    K = len(exposure_ids)
    beta_x = arr[:, 0:2 * K:2]
    se_x = arr[:, 1:2 * K:2]
    beta_y = arr[:, 2 * K]
    se_y = arr[:, 2 * K + 1]
    return variant_ids, exposure_ids, beta_x, se_x, beta_y, se_y


def load_correlation_file(path, variant_ids=None):
    """Parse a dense J x J correlation matrix, optionally labelled.

    With labels present (header row and/or leading label column) the matrix is
    reordered to match ``variant_ids``.
    """
    rows, _ = _read_table(path)

    def _is_number(cell):
        try:
            float(cell)
            return True
        except ValueError:
            return False

    has_header = not all(_is_number(c) for c in rows[0] if c.strip())
    labels = None
    if has_header:
        header = [h.strip() for h in rows[0]]
        body = rows[1:]
        has_row_labels = body and not _is_number(body[0][0])
        if has_row_labels:
            if header[0] == "" or not _is_number(header[0]):
                col_labels = header[1:] if len(header) == len(body[0]) else header
            else:
                col_labels = header
            row_labels = [r[0].strip() for r in body]
            if [c.strip() for c in col_labels] != row_labels:
                raise DataFormatError(f"{path}: row and column labels disagree")
            labels = row_labels
            mat = [[_parse_float(c, path, f"row {i + 2}") for c in r[1:]] for i, r in enumerate(body)]
        else:
            labels = header
            mat = [[_parse_float(c, path, f"row {i + 2}") for c in r] for i, r in enumerate(body)]
    else:
        mat = [[_parse_float(c, path, f"row {i + 1}") for c in r] for i, r in enumerate(rows)]

    rho = np.asarray(mat, dtype=np.float64)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DataFormatError(f"{path}: correlation matrix is not square: {rho.shape}")
    if labels is not None and variant_ids is not None:
        if sorted(labels) != sorted(variant_ids):
            raise DataFormatError(f"{path}: correlation labels do not match association variants")
        order = [labels.index(v) for v in variant_ids]
        rho = rho[np.ix_(order, order)]
    return rho


def load_summary_data(assoc_path, corr_path):
    """Load and validate a SummaryDataset from an association file and a
    correlation-matrix file. Correlation rows are reordered by label when the
    file carries labels."""
    variant_ids, exposure_ids, beta_x, se_x, beta_y, se_y = load_association_file(assoc_path)
    rho = load_correlation_file(corr_path, variant_ids)
    if rho.shape[0] != len(variant_ids):
        raise DataFormatError(
            f"dimension mismatch: {len(variant_ids)} variants in {assoc_path} but "
            f"{rho.shape[0]} x {rho.shape[1]} correlation matrix in {corr_path}"
        )
    rho = _maybe_symmetrize(rho)
    d = SummaryDataset(variant_ids, exposure_ids, beta_x, se_x, beta_y, se_y, rho)
    return validated(d)


def write_summary_data(d, assoc_path, corr_path, delimiter=","):
    """Write a dataset back to the association/correlation file formats.

    Floats are written with shortest round-trip repr, so load -> write -> load
    is numerically idempotent.
    """
    fmt = lambda x: repr(float(x))
    with open(assoc_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        header = ["variant"]
        for e in d.exposure_ids:
            header += [f"beta_{e}", f"se_{e}"]
        header += ["beta_y", "se_y"]
        w.writerow(header)
        for j, vid in enumerate(d.variant_ids):
            row = [vid]
            for k in range(d.n_exposures):
                row += [fmt(d.beta_x[j, k]), fmt(d.se_x[j, k])]
            row += [fmt(d.beta_y[j]), fmt(d.se_y[j])]
            w.writerow(row)
    with open(corr_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(d.variant_ids)
        for j in range(d.n_variants):
            w.writerow([fmt(x) for x in d.rho[j]])


def min_pvalues(d):
    """Per-variant minimum two-sided normal-approximation p-value across exposures."""
    z = np.abs(d.beta_x) / d.se_x
    return (2.0 * norm.sf(z)).min(axis=1)


def significance_filter(d, p_threshold):
    """Keep variants whose minimum exposure p-value is below p_threshold."""
    if not 0 < p_threshold <= 1:
        raise ValueError(f"p_threshold must be in (0, 1], got {p_threshold}")
    keep = np.flatnonzero(min_pvalues(d) < p_threshold)
    if keep.size == 0:
        warnings.warn("significance_filter removed every variant")
    return d.subset(keep.tolist())
