"""Typed errors raised by the estimators and data layer."""


class CisMvmrError(Exception):
    """Base class for all package errors."""


class DataFormatError(CisMvmrError):
    """Input file could not be parsed (missing columns, non-numeric cells, ...)."""


class DataValidationError(CisMvmrError):
    """A dataset failed invariant validation.

    Carries the full validation report so callers can show every violation.
    """

    def __init__(self, report):
        self.report = report
        super().__init__(str(report))


class SingularWeightMatrix(CisMvmrError):
    """The weighting matrix (Sigma, transformed Sigma, or Omega) could not be factorized."""


class RankDeficientDesign(CisMvmrError):
    """The K x K design matrix of the generalized least-squares solve is singular."""


class TooFewComponents(CisMvmrError):
    """Retained principal components k <= K: the model is not identified."""
