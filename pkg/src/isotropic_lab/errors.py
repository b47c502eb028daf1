#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""Exception hierarchy for the isotropic measure laboratory.

Estimators raise these; the verification pipeline captures them into its state and the
command line maps them onto exit codes.
"""


class IsolabError(Exception):
    """Base class for every error raised by the laboratory."""


class UsageError(IsolabError, ValueError):
    """Invalid arguments: dimension mismatch, malformed spec strings, k >= n and the like."""


class DegenerateMeasureError(IsolabError):
    """Covariance is singular or cannot be estimated from the available samples."""


class UnsupportedMeasureError(IsolabError):
    """The requested quantity is not available for this measure family."""


class DomainError(IsolabError, ValueError):
    """A moment or width exponent lies outside the admissible range."""


class VarianceRefusalError(DomainError):
    """The direct estimator would have infinite variance at this exponent."""

    def __init__(self, message: str, alternative: str = "I_negk_via_sections"):
        super().__init__(f"{message}; use {alternative} instead")
        self.alternative = alternative


class ScaleRefusalError(IsolabError):
    """Volume work was requested above the supported dimension."""


class LaplaceDomainError(DomainError):
    """The tilt point lies outside the domain of the logarithmic Laplace transform."""
